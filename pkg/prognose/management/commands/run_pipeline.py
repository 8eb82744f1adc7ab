import logging

from django.core.management.base import CommandError
from django.db import transaction
from django.utils import timezone

from prognose.exceptions import PrognoseError
from prognose.models import EvaluationResult, ForecastRun
from prognose.pipeline import Pipeline

from ._base import PipelineCommand

logger = logging.getLogger(__name__)


class Command(PipelineCommand):
    help = "Kompletter Lauf: alle Stufen, Manifest, Ergebnis als ForecastRun gespeichert."

    def add_stage_arguments(self, parser):
        parser.add_argument("--no-store", action="store_true", help="Lauf nicht in der Datenbank ablegen")

    def handle(self, *args, **options):
        try:
            config = self.load(options)
        except PrognoseError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code) from exc

        run = None
        if not options["no_store"]:
            run = ForecastRun.objects.create(
                config_hash=config.digest(),
                config=config.values,
                output_dir=str(config.output_dir),
                seed=config.seed,
            )
        try:
            result = Pipeline(config).run()
        except PrognoseError as exc:
            if run is not None:
                run.status = "FAILED"
                run.error_message = str(exc)
                run.finished_at = timezone.now()
                run.save(update_fields=["status", "error_message", "finished_at"])
            raise CommandError(str(exc), returncode=exc.exit_code) from exc

        if run is not None:
            self.store(run, result.reports)
        for label, coverage in result.coverage.items():
            self.stdout.write(f"{label}: Abdeckung der Aggregationsmenge {coverage:.1%}")
        self.stdout.write(self.style.SUCCESS(f"Lauf fertig, Manifest {result.manifest}"))

    @transaction.atomic
    def store(self, run, reports):
        EvaluationResult.objects.bulk_create([
            EvaluationResult(
                run=run,
                model_name=name,
                period=label,
                pinball=report.pinball,
                rmse=report.rmse,
                n_cells=report.n_cells,
            )
            for name, per_period in reports.items()
            for label, report in per_period.items()
            if report.n_cells
        ])
        run.status = "DONE"
        run.finished_at = timezone.now()
        run.save(update_fields=["status", "finished_at"])
        logger.info("Lauf %s gespeichert (%d Auswertungen)", run.pk, run.results.count())
