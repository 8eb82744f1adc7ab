from django.contrib import admin
from .models import ForecastRun, EvaluationResult


class EvaluationResultInline(admin.TabularInline):
    model = EvaluationResult
    extra = 0
    readonly_fields = ("model_name", "period", "pinball", "rmse", "n_cells")
    can_delete = False


@admin.register(ForecastRun)
class ForecastRunAdmin(admin.ModelAdmin):
    list_display = ("id", "created_at", "status", "seed", "config_hash", "output_dir")
    list_filter = ("status",)
    search_fields = ("config_hash", "output_dir", "error_message")
    readonly_fields = ("created_at", "finished_at", "config_hash", "config")
    inlines = [EvaluationResultInline]


@admin.register(EvaluationResult)
class EvaluationResultAdmin(admin.ModelAdmin):
    """
    Einzelne Tabellenzellen; Filter nach Modell/Zeitraum zum Vergleich
    über mehrere Läufe.
    """
    list_display = ("run", "model_name", "period", "pinball", "rmse", "n_cells")
    list_filter = ("model_name", "period")
    search_fields = ("model_name", "run__config_hash")
