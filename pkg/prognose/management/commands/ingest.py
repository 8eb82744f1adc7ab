from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Liest Wahrheitsdatei (kumulativ) und Mobilität ein, schreibt Tageswerte."

    def run_stage(self, pipeline, options):
        series = pipeline.ingest()
        return f"{len(series)} Kreise eingelesen nach {pipeline.path('ingested.csv')}"
