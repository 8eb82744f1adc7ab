import json
import tempfile
from datetime import date, timedelta
from pathlib import Path
from unittest import mock

import numpy as np
import pandas as pd
from django.test import SimpleTestCase, tag

from prognose.ensemble import aggregation_cutoffs
from prognose.exceptions import ConfigError, DataError, StageError
from prognose.metrics import QUANTILE_COLUMNS, QuantileForecast
from prognose.pipeline import (
    Pipeline,
    Period,
    deep_merge,
    emit_plotdata,
    load_config,
    sha256_file,
    stage,
)

from .factories import START, make_series, write_small_world


class ConfigTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)

    def _write(self, payload, name="config.json"):
        path = self.dir / name
        path.write_text(payload if isinstance(payload, str) else json.dumps(payload), encoding="utf-8")
        return path

    def test_defaults_file_and_overrides(self):
        path = self._write({
            "data": {"ground_truth": "daten/nyt.csv"},
            "periods": [{"label": "mai", "start": "2020-05-10"}],
            "output_dir": "lauf",
            "models": {"gp": {"restarts": 1}},
        })
        config = load_config(path, {"seed": 5, "output_dir": None})
        self.assertEqual(config.seed, 5)
        self.assertEqual(config.forecast_len, 14)
        self.assertEqual(config.lags, (15, 16, 17, 18))
        self.assertEqual(config.data_path("ground_truth"), (self.dir / "daten" / "nyt.csv").resolve())
        self.assertIsNone(config.data_path("static"))
        self.assertEqual(config.output_dir, (self.dir / "lauf").resolve())
        self.assertEqual(config.model_options["gp"]["restarts"], 1)
        self.assertTrue(config.model_options["gp"]["enabled"])
        self.assertEqual(config.periods, [Period("mai", date(2020, 5, 10), 14)])

    def test_forecast_start_shortcut(self):
        path = self._write({"data": {"ground_truth": "nyt.csv"}, "forecast_start": "2020-05-10"})
        config = load_config(path)
        self.assertEqual([p.label for p in config.periods], ["period1"])
        self.assertNotIn("forecast_start", config.values)

    def test_digest(self):
        path = self._write({"data": {"ground_truth": "nyt.csv"}, "forecast_start": "2020-05-10"})
        self.assertEqual(load_config(path).digest(), load_config(path).digest())
        self.assertNotEqual(load_config(path).digest(), load_config(path, {"seed": 1}).digest())

    def test_model_seeds_follow_master_seed(self):
        path = self._write({"data": {"ground_truth": "nyt.csv"}, "forecast_start": "2020-05-10"})
        a, b = load_config(path, {"seed": 1}), load_config(path, {"seed": 2})
        self.assertNotEqual(a.cluster_config().seed, b.cluster_config().seed)
        self.assertNotEqual(a.ensemble_config().seed, a.cluster_config().seed)
        self.assertEqual(a.ensemble_config().hidden_dims, (32, 16))

    def test_errors(self):
        cases = {
            "missing": self.dir / "fehlt.json",
            "not json": self._write("{kaputt", "a.json"),
            "not an object": self._write("[1, 2]", "b.json"),
            "bad lags": self._write({"data": {"ground_truth": "x.csv"}, "forecast_start": "2020-05-10", "lags": [3]}, "c.json"),
            "no periods": self._write({"data": {"ground_truth": "x.csv"}}, "d.json"),
        }
        for case, path in cases.items():
            with self.subTest(case=case):
                with self.assertRaises(ConfigError) as ctx:
                    load_config(path)
                self.assertEqual(ctx.exception.exit_code, 1)

    def test_deep_merge(self):
        base = {"a": {"x": 1, "y": 2}, "b": [1]}
        merged = deep_merge(base, {"a": {"y": 3}, "b": [2]})
        self.assertEqual(merged, {"a": {"x": 1, "y": 3}, "b": [2]})
        self.assertEqual(base["a"]["y"], 2)


class PeriodTests(SimpleTestCase):
    def test_dates(self):
        period = Period("p", date(2020, 5, 10), 14)
        self.assertEqual(period.cutoff, date(2020, 5, 9))
        self.assertEqual(period.end, date(2020, 5, 23))
        self.assertEqual(len(period.days), 14)


class StageTests(SimpleTestCase):
    def test_exit_code_of_cause(self):
        for exc, code in ((DataError("leer"), 2), (ConfigError("x"), 1), (ValueError("y"), 3)):
            with self.subTest(exc=exc):
                with self.assertLogs("prognose.pipeline", "ERROR"):
                    with self.assertRaises(StageError) as ctx:
                        with stage("clean"):
                            raise exc
                self.assertEqual(ctx.exception.exit_code, code)
                self.assertEqual(ctx.exception.stage, "clean")
                self.assertIs(ctx.exception.cause, exc)

    def test_stage_error_passes_through(self):
        inner = StageError("fit:gp", DataError("x"))
        with self.assertRaises(StageError) as ctx:
            with stage("aggregate"):
                raise inner
        self.assertIs(ctx.exception, inner)

    def test_other_exceptions_untouched(self):
        with self.assertRaises(KeyError):
            with stage("clean"):
                raise KeyError("x")


class PlotDataTests(SimpleTestCase):
    def test_history_and_forecast_rows(self):
        series = {"08001": make_series(np.arange(20.0))}
        first = START + timedelta(days=18)
        forecasts = [
            QuantileForecast.from_raw("08001", first + timedelta(days=h), np.linspace(0, 8, 9) + h)
            for h in range(4)
        ]
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertLogs("prognose.pipeline", "WARNING"):
                paths = emit_plotdata(forecasts, series, ["08001", "99999"], tmp, history_days=3)
            self.assertEqual([p.name for p in paths], ["08001.csv"])
            frame = pd.read_csv(paths[0], dtype={"date": str, "kind": str})
        self.assertEqual(list(frame.columns), ["date", "kind", "truth", *QUANTILE_COLUMNS])
        self.assertEqual(list(frame["kind"]), ["history"] * 3 + ["forecast"] * 4)
        self.assertEqual(list(frame["truth"][:5]), [15.0, 16.0, 17.0, 18.0, 19.0])
        self.assertTrue(frame["truth"][5:].isna().all())
        self.assertTrue(frame["q10"][:3].isna().all())
        self.assertEqual(frame["q50"].iloc[3], 4.0)


class SeriesAtCutoffTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.config = load_config(write_small_world(Path(self.tmp.name), counties=2, days=40))

    def test_later_dump_stays_out_of_earlier_cutoff(self):
        deaths = np.ones(40)
        deaths[30] = 200.0
        pipeline = Pipeline(self.config)
        pipeline._raw = {"08001": make_series(deaths)}
        early = START + timedelta(days=20)
        np.testing.assert_array_equal(pipeline.series_at(early)["08001"].daily_deaths, np.ones(21))
        late = pipeline.series_at(START + timedelta(days=39))["08001"]
        self.assertGreater(late.daily_deaths[0], 1.0)
        self.assertAlmostEqual(late.daily_deaths.sum(), deaths.sum())

    def test_uncached_cutoff(self):
        pipeline = Pipeline(self.config)
        pipeline._raw = {"08001": make_series(np.ones(40))}
        cutoff = START + timedelta(days=10)
        pipeline.series_at(cutoff, cache=False)
        self.assertNotIn(cutoff, pipeline._training)
        pipeline.series_at(cutoff)
        self.assertIn(cutoff, pipeline._training)


@tag("slow")
class PipelineRunTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.dir = Path(self.tmp.name)
        self.config_path = write_small_world(self.dir)

    def test_full_run(self):
        config = load_config(self.config_path)
        result = Pipeline(config).run()

        self.assertEqual(set(result.reports), {"nn", "forest", "gbdt", "ensemble", "naive_zero"})
        for name, per_period in result.reports.items():
            self.assertEqual(per_period["period1"].n_cells, 6 * 14, name)
            self.assertGreaterEqual(per_period["period1"].pinball, 0.0)
        self.assertEqual(result.coverage["period1"], 1.0)

        out = config.output_dir
        for name in ("ingested.csv", "cleaned.csv", "clusters.csv", "centroids.csv", "report.csv",
                     "report_per_county.csv", "period1/aggregation_set.csv", "period1/ensemble.json",
                     "period1/forecasts/ensemble.csv", "period1/forest_importance.csv"):
            self.assertTrue((out / name).exists(), name)

        report = pd.read_csv(out / "report.csv")
        self.assertEqual(list(report.columns), ["model", "period1_pinball", "period1_rmse"])

        plots = sorted((out / "period1" / "plots").glob("*.csv"))
        self.assertEqual(len(plots), 6)
        self.assertEqual(len(pd.read_csv(plots[0])), 10 + 14)

        manifest = json.loads(result.manifest.read_text(encoding="utf-8"))
        self.assertEqual(manifest["config_sha256"], config.digest())
        self.assertEqual(manifest["seeds"]["master"], config.seed)
        self.assertEqual(manifest["artifacts"]["report.csv"], sha256_file(out / "report.csv"))
        self.assertNotIn("manifest.json", manifest["artifacts"])
        self.assertIn("numpy", manifest["versions"])

    def test_same_seed_same_artifacts(self):
        first = Pipeline(load_config(self.config_path)).run()
        second = Pipeline(load_config(self.config_path, {"output_dir": str(self.dir / "zweiter")})).run()
        a = json.loads(first.manifest.read_text(encoding="utf-8"))
        b = json.loads(second.manifest.read_text(encoding="utf-8"))
        self.assertEqual(a["artifacts"], b["artifacts"])
        self.assertNotEqual(a["config_sha256"], b["config_sha256"])

    def test_stages_resume_from_disk(self):
        config = load_config(self.config_path)
        Pipeline(config).ingest()
        Pipeline(config).clean()
        Pipeline(config).cluster()
        period = config.periods[0]
        Pipeline(config).fit(period, ["forest", "gbdt", "nn"])
        Pipeline(config).aggregate(period)
        Pipeline(config).train_ensemble(period)
        forecasts = Pipeline(config).predict(period)
        self.assertEqual(len(forecasts), 6 * 14)
        reports = Pipeline(config).evaluate()
        self.assertEqual(reports["ensemble"]["period1"].n_cells, 6 * 14)

    def test_single_epidemic_model(self):
        models = {name: {"enabled": False} for name in ("gp", "nn", "qnn", "forest", "forest_moving", "gbdt")}
        models["seirqd"] = {"max_iters": 100, "restarts": 1}
        path = write_small_world(self.dir / "seirqd", counties=3, models=models)
        result = Pipeline(load_config(path)).run()
        self.assertEqual(set(result.reports), {"seirqd", "ensemble", "naive_zero"})
        self.assertTrue((load_config(path).output_dir / "period1" / "seirqd_params.csv").exists())

    def test_predict_needs_all_model_forecasts(self):
        config = load_config(self.config_path)
        period = config.periods[0]
        pipeline = Pipeline(config)
        pipeline.fit(period)
        pipeline.train_ensemble(period)
        (config.output_dir / "period1" / "forecasts" / "nn.csv").unlink()
        with self.assertRaises(StageError) as ctx:
            Pipeline(config).predict(period)
        self.assertEqual(ctx.exception.exit_code, 2)

    def test_aggregation_uses_one_cleaning_per_cutoff(self):
        config = load_config(self.config_path)
        period = config.periods[0]
        pipeline = Pipeline(config)
        with mock.patch.object(pipeline, "context_at", wraps=pipeline.context_at) as context_at:
            pipeline.aggregate(period)
        cutoffs = [c.args[0] for c in context_at.call_args_list if c.kwargs.get("cache") is False]
        self.assertEqual(cutoffs, aggregation_cutoffs(period.start, config.forecast_len, 3))
        self.assertEqual(set(pipeline._training), {period.cutoff})


BENCHMARK_MODELS = {
    "seirqd": {"enabled": False},
    "gp": {"enabled": False},
    "qnn": {"enabled": False},
    "forest_moving": {"enabled": False},
    "nn": {"max_epochs": 100, "hidden_dims": [20, 10], "early_stop_patience": 10},
    "forest": {"n_trees": 30, "max_depth": 8},
    "gbdt": {"n_rounds": 30, "n_runs": 2, "max_depth": 3},
}


@tag("slow")
class SyntheticBenchmarkTests(SimpleTestCase):
    def test_ensemble_close_to_best_model_and_all_beat_zero(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_small_world(
                Path(tmp), counties=20, days=120, seed=3,
                aggregation_days=14, clustering={"k": 3},
                models=BENCHMARK_MODELS,
                ensemble={"hidden_dims": [32, 16], "max_epochs": 200, "early_stop_patience": 20},
            )
            result = Pipeline(load_config(path)).run()
        pinball = {name: per_period["period1"].pinball for name, per_period in result.reports.items()}
        zero = pinball.pop("naive_zero")
        ensemble = pinball.pop("ensemble")
        self.assertEqual(set(pinball), {"nn", "forest", "gbdt"})
        for name, value in pinball.items():
            with self.subTest(model=name):
                self.assertLess(value, zero)
        self.assertLess(ensemble, zero)
        self.assertLessEqual(ensemble, 1.05 * min(pinball.values()), pinball)
