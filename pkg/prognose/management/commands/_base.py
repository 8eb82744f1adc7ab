from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from prognose.exceptions import PrognoseError
from prognose.pipeline import Pipeline, load_config


class PipelineCommand(BaseCommand):
    """
    Gemeinsame Flags ``--config``, ``--seed``, ``--out`` und die Umsetzung
    von ``PrognoseError`` in ``CommandError`` mit passendem Exit-Code.
    Unterklassen implementieren ``run_stage`` und geben eine Zusammenfassung zurück.
    """
    # Stufen, die je Prognosezeitraum laufen, bekommen --period
    per_period = False

    def add_arguments(self, parser):
        parser.add_argument("--config", help="Lauf-Konfiguration (JSON)")
        parser.add_argument("--seed", type=int, help="Master-Saat, überschreibt die Konfiguration")
        parser.add_argument("--out", help="Ausgabeverzeichnis, überschreibt die Konfiguration")
        if self.per_period:
            parser.add_argument("--period", help="nur diesen Zeitraum (Label), sonst alle")
        self.add_stage_arguments(parser)

    def add_stage_arguments(self, parser):
        pass

    def load(self, options):
        overrides = {
            "seed": options.get("seed"),
            "output_dir": str(Path(options["out"]).resolve()) if options.get("out") else None,
        }
        return load_config(options.get("config"), overrides)

    def periods(self, pipeline, options):
        label = options.get("period")
        return [pipeline.period(label)] if label else pipeline.config.periods

    def handle(self, *args, **options):
        try:
            pipeline = Pipeline(self.load(options))
            pipeline.out.mkdir(parents=True, exist_ok=True)
            summary = self.run_stage(pipeline, options)
        except PrognoseError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code) from exc
        if summary:
            self.stdout.write(self.style.SUCCESS(summary))

    def run_stage(self, pipeline, options):
        raise NotImplementedError
