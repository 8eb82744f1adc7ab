from prognose.registry import MODEL_NAMES

from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Passt Einzelmodelle am Stichtag vor jedem Zeitraum an und schreibt deren Prognosen."
    per_period = True

    def add_stage_arguments(self, parser):
        parser.add_argument("model", choices=(*MODEL_NAMES, "all"), help="Modellname oder 'all'")

    def run_stage(self, pipeline, options):
        names = None if options["model"] == "all" else [options["model"]]
        lines = []
        for period in self.periods(pipeline, options):
            forecasts = pipeline.fit(period, names)
            for name, cells in forecasts.items():
                lines.append(f"{period.label} {name}: {len(cells)} Prognosezellen")
        return "\n".join(lines)
