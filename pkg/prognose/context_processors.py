from .models import ForecastRun


def latest_run_badge(request):
    """
    Status des jüngsten Prognoselaufs für die Kopfzeile,
    damit ein fehlgeschlagener Lauf sofort auffällt.
    """
    run = ForecastRun.objects.only("id", "status").first()
    if run is None:
        return {"latest_run": None, "latest_run_failed": False}
    return {"latest_run": run, "latest_run_failed": run.status == "FAILED"}
