from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Verteilt Nachmeldungen um, gleicht negative Werte aus, füllt Mobilitätslücken."

    def run_stage(self, pipeline, options):
        cleaned = pipeline.clean()
        return f"{len(cleaned)} Kreise bereinigt nach {pipeline.path('cleaned.csv')}"
