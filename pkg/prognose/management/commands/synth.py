import json
from datetime import timedelta
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand

from prognose.synthetic import generate_synthetic, make_world


class Command(BaseCommand):
    help = (
        "Erzeugt eine synthetische Welt (SEIR-QD + Rauschen + Nachmeldungen) "
        "und eine passende Lauf-Konfiguration."
    )

    def add_arguments(self, parser):
        parser.add_argument("--out", required=True, help="Zielverzeichnis der Dateien")
        parser.add_argument("--seed", type=int, default=settings.PROGNOSE["seed"])
        parser.add_argument("--counties", type=int, default=40)
        parser.add_argument("--days", type=int, default=120, help="Historientage vor dem Prognosezeitraum")
        parser.add_argument("--forecast-len", type=int, default=settings.PROGNOSE["forecast_len"])
        parser.add_argument("--noise-phi", type=float, default=20.0, help="0 = ohne Rauschen")
        parser.add_argument("--dump-probability", type=float, default=0.02)

    def handle(self, *args, **options):
        out = Path(options["out"]).resolve()
        world = make_world(
            n_counties=options["counties"],
            seed=options["seed"],
            noise_phi=options["noise_phi"] or None,
            dump_probability=options["dump_probability"],
        )
        total = options["days"] + options["forecast_len"]
        output = generate_synthetic(world, total, out)

        forecast_start = world.start_date + timedelta(days=options["days"])
        config = {
            "config_version": settings.PROGNOSE["config_version"],
            "seed": options["seed"],
            "forecast_len": options["forecast_len"],
            "data": {
                "ground_truth": output.ground_truth.name,
                "static": output.static.name,
                "mobility": output.mobility.name,
            },
            "periods": [{"label": "period1", "start": forecast_start.isoformat()}],
            "output_dir": "run",
        }
        (out / "config.json").write_text(json.dumps(config, indent=2), encoding="utf-8")
        self.stdout.write(self.style.SUCCESS(
            f"{world.n_counties} Kreise, {total} Tage nach {out} (Prognosebeginn {forecast_start})"
        ))
