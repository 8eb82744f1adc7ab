from django.db import models


# ---------------------------------------------------
# Prognoseläufe
# ---------------------------------------------------
class ForecastRun(models.Model):
    """
    Ein Aufruf von ``run_pipeline``: Konfiguration (als Hash und Kopie),
    Ausgabeverzeichnis und Ergebnisstatus. Die Artefakte selbst liegen im
    Dateisystem, hier nur der Verweis darauf.
    """
    STATUS_CHOICES = [
        ("RUNNING", "Läuft"),
        ("DONE", "Fertig"),
        ("FAILED", "Fehlgeschlagen"),
    ]

    created_at = models.DateTimeField(
        auto_now_add=True,
        verbose_name="Gestartet am",
    )
    config_hash = models.CharField(
        max_length=64,
        verbose_name="Konfigurations-Hash",
        help_text="SHA-256 der kanonischen Lauf-Konfiguration.",
    )
    config = models.JSONField(
        default=dict,
        verbose_name="Konfiguration",
    )
    output_dir = models.CharField(
        max_length=500,
        verbose_name="Ausgabeverzeichnis",
    )
    seed = models.BigIntegerField(
        verbose_name="Master-Saat",
    )
    status = models.CharField(
        max_length=10,
        choices=STATUS_CHOICES,
        default="RUNNING",
        verbose_name="Status",
    )
    # bei FAILED: Stufe und Meldung
    error_message = models.TextField(
        blank=True,
        verbose_name="Fehlermeldung",
    )
    finished_at = models.DateTimeField(
        null=True,
        blank=True,
        verbose_name="Beendet am",
    )

    class Meta:
        ordering = ["-created_at", "-id"]
        verbose_name = "Prognoselauf"
        verbose_name_plural = "Prognoseläufe"

    def __str__(self) -> str:
        return f"Lauf {self.pk} ({self.get_status_display()}, {self.config_hash[:8]})"

    @property
    def periods(self) -> list[str]:
        return [p["label"] for p in self.config.get("periods", [])]

    def table(self) -> list[dict]:
        """
        Ergebnistabelle: eine Zeile je Modell, je Zeitraum Pinball und RMSE.
        Reihenfolge der Modelle wie beim Speichern.
        """
        rows = {}
        for result in self.results.order_by("id"):
            row = rows.setdefault(result.model_name, {"model": result.model_name, "cells": {}})
            row["cells"][result.period] = result
        labels = self.periods
        return [
            {"model": row["model"], "cells": [row["cells"].get(label) for label in labels]}
            for row in rows.values()
        ]


# ---------------------------------------------------
# Auswertung je Modell und Zeitraum
# ---------------------------------------------------
class EvaluationResult(models.Model):
    run = models.ForeignKey(
        ForecastRun,
        on_delete=models.CASCADE,
        related_name="results",
        verbose_name="Lauf",
    )
    model_name = models.CharField(
        max_length=50,
        verbose_name="Modell",
    )
    period = models.CharField(
        max_length=50,
        verbose_name="Zeitraum",
    )
    pinball = models.FloatField(verbose_name="Pinball-Verlust")
    rmse = models.FloatField(verbose_name="RMSE")
    n_cells = models.PositiveIntegerField(
        default=0,
        verbose_name="Zellen",
        help_text="Ausgewertete (Kreis, Tag)-Zellen.",
    )

    class Meta:
        ordering = ["run", "id"]
        verbose_name = "Auswertung"
        verbose_name_plural = "Auswertungen"
        constraints = [
            models.UniqueConstraint(fields=["run", "model_name", "period"], name="unique_result_per_run"),
        ]

    def __str__(self) -> str:
        return f"{self.model_name} / {self.period}: {self.pinball:.4f}"
