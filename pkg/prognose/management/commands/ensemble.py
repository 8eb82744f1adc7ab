from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Trainiert das Ensemble-Netz auf der Aggregationsmenge."
    per_period = True

    def run_stage(self, pipeline, options):
        lines = []
        for period in self.periods(pipeline, options):
            net = pipeline.train_ensemble(period)
            history = net.net.history
            lines.append(
                f"{period.label}: beste Epoche {history['best_epoch']}, "
                f"Validierungsverlust {history['best_val'][-1]:.4f}"
            )
        return "\n".join(lines)
