from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Ensemble-Prognose für jeden Zeitraum aus den gespeicherten Modellprognosen."
    per_period = True

    def run_stage(self, pipeline, options):
        lines = []
        for period in self.periods(pipeline, options):
            forecasts = pipeline.predict(period)
            lines.append(f"{period.label}: {len(forecasts)} Ensemble-Prognosezellen")
        return "\n".join(lines)
