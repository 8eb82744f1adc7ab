from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Pinball-Verlust und RMSE je Modell und Zeitraum (report.csv)."

    def run_stage(self, pipeline, options):
        reports = pipeline.evaluate()
        lines = []
        for name, per_period in reports.items():
            cells = "  ".join(
                f"{label}: {report.pinball:.4f} / {report.rmse:.4f}"
                for label, report in per_period.items()
            )
            lines.append(f"{name:<14} {cells}")
        return "\n".join(lines)
