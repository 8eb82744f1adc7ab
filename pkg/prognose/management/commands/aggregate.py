from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Baut die Aggregationsmenge (Modellprognosen an den Stichtagen vor dem Zeitraum)."
    per_period = True

    def run_stage(self, pipeline, options):
        lines = []
        for period in self.periods(pipeline, options):
            aggset = pipeline.aggregate(period)
            lines.append(f"{period.label}: {aggset.coverage.summary()}")
        return "\n".join(lines)
