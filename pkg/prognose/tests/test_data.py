import tempfile
from datetime import timedelta
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from prognose.data import (
    NYC_FIPS,
    DumpConfig,
    StaticFeatures,
    build_feature_rows,
    build_forecast_rows,
    clean_series,
    detect_dumps,
    fold_negatives,
    impute_mobility,
    load_ground_truth,
    load_mobility,
    load_static_features,
    make_layout,
    read_cleaned,
    read_counties,
    redistribute_dumps,
    spread_dumps,
    validate_lags,
    write_cleaned,
    write_counties,
)
from prognose.exceptions import ConfigError, IngestionError

from .factories import START, make_series, write_csv

TRUTH_HEADER = ("date", "county", "state", "fips", "cases", "deaths")


class LoadGroundTruthTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_first_difference(self):
        path = write_csv(self.dir / "t.csv", TRUTH_HEADER, [
            ("2020-03-01", "Adams", "Colorado", "08001", 1, 0),
            ("2020-03-02", "Adams", "Colorado", "08001", 4, 2),
            ("2020-03-03", "Adams", "Colorado", "08001", 9, 5),
        ])
        series = load_ground_truth(path)["08001"]
        np.testing.assert_array_equal(series.daily_deaths, [0, 2, 3])
        np.testing.assert_array_equal(series.daily_cases, [1, 3, 5])
        self.assertEqual(series.state, "Colorado")

    def test_empty_file(self):
        path = self.dir / "empty.csv"
        path.write_text("", encoding="utf-8")
        with self.assertLogs("prognose.data", level="WARNING"):
            self.assertEqual(load_ground_truth(path), {})

    def test_header_only_file(self):
        path = write_csv(self.dir / "h.csv", TRUTH_HEADER, [])
        self.assertEqual(load_ground_truth(path), {})

    def test_missing_file(self):
        with self.assertRaises(IngestionError):
            load_ground_truth(self.dir / "fehlt.csv")

    def test_missing_columns(self):
        path = write_csv(self.dir / "bad.csv", ("date", "fips", "deaths"), [("2020-03-01", "08001", 1)])
        with self.assertRaises(IngestionError):
            load_ground_truth(path)

    def test_interleaved_counties(self):
        cum = {"08001": [0, 1, 1, 4, 6], "19001": [2, 2, 3, 3, 7]}
        rows = []
        for day in range(5):
            for fips, state in (("19001", "Iowa"), ("08001", "Colorado")):
                rows.append((f"2020-03-0{day + 1}", "X", state, fips, 10 * cum[fips][day], cum[fips][day]))
        path = write_csv(self.dir / "i.csv", TRUTH_HEADER, rows)
        series = load_ground_truth(path)
        self.assertEqual(sorted(series), ["08001", "19001"])
        for fips, values in cum.items():
            np.testing.assert_array_equal(series[fips].daily_deaths, np.diff(values, prepend=0))
            self.assertEqual(len(series[fips]), 5)
            self.assertTrue(np.all(np.diff(series[fips].dates).astype(int) == 1))

    def test_gap_filled_with_zero_and_nyc_mapped(self):
        path = write_csv(self.dir / "g.csv", TRUTH_HEADER, [
            ("2020-03-01", "New York City", "New York", "", 5, 1),
            ("2020-03-03", "New York City", "New York", "", 9, 4),
            ("2020-03-01", "Unknown", "Iowa", "", 1, 1),
        ])
        with self.assertLogs("prognose.data", level="WARNING"):
            series = load_ground_truth(path)
        self.assertEqual(list(series), [NYC_FIPS])
        np.testing.assert_array_equal(series[NYC_FIPS].daily_deaths, [1, 0, 3])

    def test_short_fips_padded(self):
        path = write_csv(self.dir / "p.csv", TRUTH_HEADER, [("2020-03-01", "Autauga", "Alabama", "1001", 1, 0)])
        self.assertIn("01001", load_ground_truth(path))


class StaticAndMobilityTests(SimpleTestCase):
    def test_static_median_fill(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(Path(tmp) / "s.csv", ("fips", "population", "hospital_beds"), [
                ("08001", 1000, 10), ("08003", 3000, ""), ("08005", 2000, 30),
            ])
            with self.assertLogs("prognose.data", level="WARNING"):
                static = load_static_features(path)
        self.assertEqual(static["08003"].hospital_beds, 20.0)
        self.assertEqual(static["08001"].population, 1000.0)
        self.assertEqual(static["08001"].vector(("population", "fehlt")), (1000.0, 0.0))

    def test_mobility_series(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(Path(tmp) / "m.csv", ("date", "fips", "m50_index"), [
                ("2020-03-02", "08001", 90), ("2020-03-01", "08001", 100),
            ])
            mobility = load_mobility(path)
        self.assertEqual(list(mobility["08001"]), [100, 90])


class DumpTests(SimpleTestCase):
    cfg = DumpConfig(dump_abs_min=10.0, dump_ratio=5.0, trailing_days=7)

    def test_equal_spread(self):
        series = make_series([0, 0, 0, 12])
        out = redistribute_dumps(series, self.cfg, dump_days=[3])
        np.testing.assert_allclose(out.daily_deaths, [3, 3, 3, 3])

    def test_detection_finds_spike(self):
        self.assertEqual(detect_dumps([0, 0, 0, 12], self.cfg), [3])
        self.assertEqual(detect_dumps([1, 2, 1, 3, 2], self.cfg), [])

    def test_no_dumps_is_identity(self):
        series = make_series([1, 2, 1, 3, 2])
        np.testing.assert_array_equal(redistribute_dumps(series, self.cfg).daily_deaths, series.daily_deaths)

    def test_two_windows(self):
        values = [1, 1, 1, 20, 1, 1, 16]
        out = spread_dumps(values, [3, 6])
        np.testing.assert_allclose(out[:4], [6, 6, 6, 5])
        np.testing.assert_allclose(out[4:], [1 + 16 / 3, 1 + 16 / 3, 16 / 3])
        self.assertAlmostEqual(out[:4].sum(), 23.0)
        self.assertAlmostEqual(out[4:].sum(), 18.0)

    def test_negative_folded_into_window(self):
        out = fold_negatives([2, 2, 4, -2])
        np.testing.assert_allclose(out, [1.5, 1.5, 3, 0])
        self.assertTrue(np.all(out >= 0))

    def test_conservation_on_fuzzed_series(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            values = rng.poisson(3.0, size=60).astype(float)
            for d in rng.choice(60, size=3, replace=False):
                values[d] += rng.integers(20, 80)
            if rng.random() < 0.3:
                values[rng.integers(10, 60)] = -float(rng.integers(1, 3))
            series = make_series(values)
            out = redistribute_dumps(series, self.cfg).daily_deaths
            if values.sum() >= 0:
                self.assertAlmostEqual(out.sum(), values.sum(), places=8)
            self.assertTrue(np.all(out >= 0))


class MobilityImputationTests(SimpleTestCase):
    def _impute(self, values):
        series = make_series(np.zeros(len(values)), mobility=np.array(values, dtype=float))
        return list(impute_mobility(series).mobility_index)

    def test_forward_fill(self):
        self.assertEqual(self._impute([100, np.nan, np.nan, 60]), [100, 100, 100, 60])

    def test_leading_backfill(self):
        self.assertEqual(self._impute([np.nan, np.nan, 80]), [80, 80, 80])

    def test_all_missing(self):
        self.assertEqual(self._impute([np.nan] * 3), [100, 100, 100])

    def test_clean_series_fills_mobility(self):
        cleaned = clean_series(make_series([1, 1, 1]), DumpConfig(), mobility_default=90.0)
        self.assertEqual(list(cleaned.mobility_index), [90, 90, 90])


class FeatureRowTests(SimpleTestCase):
    lags = (15, 16, 17, 18)

    def setUp(self):
        self.series = {"08001": make_series(np.arange(30.0), mobility=np.full(30, 100.0))}
        self.clusters = {"08001": 2}
        self.static = {"08001": StaticFeatures("08001", {"population": 5e4})}

    def test_rows_start_at_largest_lag(self):
        rows = build_feature_rows(self.series, self.static, self.clusters, self.lags, 14)
        self.assertEqual(len(rows), 30 - 18)
        self.assertEqual(rows[0].target_date, START + timedelta(days=18))
        self.assertEqual(rows[0].lagged_deaths, (3.0, 2.0, 1.0, 0.0))
        self.assertEqual(rows[0].target, 18.0)
        self.assertEqual(rows[0].cluster_onehot, (0, 0, 1, 0, 0, 0))

    def test_leakage_guard(self):
        with self.assertRaises(ConfigError):
            build_feature_rows(self.series, self.static, self.clusters, (5,), 14)

    def test_leakage_guard_random_configs(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            forecast_len = int(rng.integers(1, 30))
            lags = [int(v) for v in rng.integers(1, 60, size=rng.integers(1, 5))]
            if min(lags) < forecast_len + 1:
                with self.assertRaises(ConfigError):
                    validate_lags(lags, forecast_len)
            else:
                self.assertEqual(validate_lags(lags, forecast_len), tuple(sorted(lags)))

    def test_monday_weekday_onehot(self):
        rows = build_feature_rows(self.series, self.static, self.clusters, self.lags, 14)
        monday = [r for r in rows if r.target_date.weekday() == 0][0]
        self.assertEqual(monday.weekday_onehot, (1, 0, 0, 0, 0, 0, 0))

    def test_cutoff_limits_targets(self):
        cutoff = START + timedelta(days=20)
        rows = build_feature_rows(self.series, self.static, self.clusters, self.lags, 14, cutoff=cutoff)
        self.assertEqual(max(r.target_date for r in rows), cutoff)

    def test_forecast_rows_use_only_history(self):
        cutoff = START + timedelta(days=29)
        layout = make_layout(self.series, self.lags, 14, static_names=("population",))
        rows = build_forecast_rows(self.series, self.static, self.clusters, layout, cutoff)
        self.assertEqual(len(rows), 14)
        self.assertEqual([r.days_into_forecast for r in rows], list(range(1, 15)))
        # letzter Zieltag: cutoff+14, kürzester Lag 15 -> Tag cutoff-1
        self.assertEqual(rows[-1].lagged_deaths[0], 28.0)
        self.assertIsNone(rows[0].target)
        X, y = layout.matrix(rows)
        self.assertEqual(X.shape, (14, len(layout.columns)))
        self.assertTrue(np.all(np.isnan(y)))

    def test_county_level_layout_drops_side_blocks(self):
        layout = make_layout(self.series, self.lags, 14, static_names=("population",))
        narrow = layout.county_level()
        self.assertEqual(len(narrow.columns), 3 * 4 + 7)
        rows = build_feature_rows(self.series, self.static, self.clusters, self.lags, 14, layout=narrow)
        self.assertEqual(narrow.matrix(rows)[0].shape[1], 19)


class FileTests(SimpleTestCase):
    def test_cleaned_file_keeps_values(self):
        series = {
            "08001": make_series([1, 2, 3], mobility=np.array([100.0, np.nan, 90.0])),
            "19001": make_series([0, 5], fips="19001", state="Iowa"),
        }
        with tempfile.TemporaryDirectory() as tmp:
            write_cleaned(Path(tmp) / "c.csv", series)
            write_counties(Path(tmp) / "k.csv", series)
            back = read_cleaned(Path(tmp) / "c.csv", read_counties(Path(tmp) / "k.csv"))
        self.assertEqual(sorted(back), ["08001", "19001"])
        np.testing.assert_array_equal(back["08001"].daily_deaths, [1, 2, 3])
        self.assertTrue(np.isnan(back["08001"].mobility_index[1]))
        self.assertEqual(back["19001"].state, "Iowa")
        self.assertEqual(back["19001"].start, START)
