from collections import Counter

from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Clustert die Kreise über dm/dt-Histogramme (k-means)."

    def run_stage(self, pipeline, options):
        labels = pipeline.cluster()
        sizes = ", ".join(f"{k}: {n}" for k, n in sorted(Counter(labels.values()).items()))
        return f"{len(labels)} Kreise geclustert ({sizes})"
