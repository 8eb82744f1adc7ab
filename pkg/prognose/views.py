import math
from pathlib import Path

import pandas as pd
from django.contrib.auth.decorators import login_required
from django.core.paginator import Paginator
from django.http import Http404, JsonResponse
from django.shortcuts import render, get_object_or_404

from .data import FIPS_PATTERN
from .metrics import QUANTILE_COLUMNS
from .models import ForecastRun

RUNS_PER_PAGE = 20


# -------------------------------------------------------------------
# Übersicht
# -------------------------------------------------------------------
@login_required
def home(request):
    """Liste der gespeicherten Läufe, neueste zuerst."""
    runs = ForecastRun.objects.all()
    status = request.GET.get("status")
    if status in dict(ForecastRun.STATUS_CHOICES):
        runs = runs.filter(status=status)
    page = Paginator(runs, RUNS_PER_PAGE).get_page(request.GET.get("page"))
    return render(request, "prognose/home.html", {
        "page_obj": page,
        "status_filter": status or "",
        "status_choices": ForecastRun.STATUS_CHOICES,
    })


# -------------------------------------------------------------------
# Detailansicht eines Laufs
# -------------------------------------------------------------------
@login_required
def run_detail(request, run_id):
    """Ergebnistabelle (Pinball/RMSE je Modell und Zeitraum) plus Kreise mit Plotdaten."""
    run = get_object_or_404(ForecastRun, pk=run_id)
    plot_counties = {}
    for label in run.periods:
        plots = Path(run.output_dir) / label / "plots"
        if plots.is_dir():
            plot_counties[label] = sorted(p.stem for p in plots.glob("*.csv"))
    return render(request, "prognose/run_detail.html", {
        "run": run,
        "periods": run.periods,
        "table": run.table(),
        "plot_counties": plot_counties,
    })


def _clean(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


@login_required
def plot_data(request, run_id, period, fips):
    """Plotdatei eines Kreises als JSON (Historie + Quantilbänder)."""
    run = get_object_or_404(ForecastRun, pk=run_id)
    if period not in run.periods or not FIPS_PATTERN.match(fips):
        raise Http404("Unbekannter Zeitraum oder Kreis")
    path = Path(run.output_dir) / period / "plots" / f"{fips}.csv"
    if not path.exists():
        raise Http404("Keine Plotdaten für diesen Kreis")

    frame = pd.read_csv(path, dtype={"date": str, "kind": str})
    rows = [
        {key: _clean(value) for key, value in record.items()}
        for record in frame.to_dict(orient="records")
    ]
    return JsonResponse({
        "run": run.pk,
        "period": period,
        "fips": fips,
        "quantiles": list(QUANTILE_COLUMNS),
        "rows": rows,
    })
