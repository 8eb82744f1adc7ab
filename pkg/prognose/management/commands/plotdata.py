from ._base import PipelineCommand


class Command(PipelineCommand):
    help = "Schreibt je Kreis eine Plotdatei (Historie + Quantilbänder)."
    per_period = True

    def add_stage_arguments(self, parser):
        parser.add_argument("--fips", nargs="*", help="Kreise (FIPS), sonst alle mit Prognose")
        parser.add_argument("--model", default="ensemble", help="Prognosedatei, Standard: ensemble")

    def run_stage(self, pipeline, options):
        lines = []
        for period in self.periods(pipeline, options):
            paths = pipeline.plotdata(period, options.get("fips") or None, options["model"])
            lines.append(f"{period.label}: {len(paths)} Plotdateien")
        return "\n".join(lines)
