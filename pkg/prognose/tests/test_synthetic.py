import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from prognose.data import load_ground_truth, load_mobility, load_static_features
from prognose.synthetic import DUMP_WINDOW, generate_synthetic, inject_dumps, make_world


class InjectDumpsTests(SimpleTestCase):
    def test_window_collected_on_dump_day(self):
        values = np.arange(1.0, 11.0)
        dumped = inject_dumps(values, [8])
        lo = 8 - DUMP_WINDOW + 1
        self.assertEqual(dumped[8], values[lo:9].sum())
        self.assertFalse(np.any(dumped[lo:8]))
        self.assertEqual(dumped.sum(), values.sum())

    def test_no_dumps(self):
        values = np.array([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(inject_dumps(values, []), values)


class WorldTests(SimpleTestCase):
    def test_same_seed_same_world(self):
        a, b = make_world(5, seed=3), make_world(5, seed=3)
        self.assertEqual(a.params, b.params)
        self.assertEqual(a.fips, b.fips)
        self.assertNotEqual(a.params, make_world(5, seed=4).params)

    def test_fips_are_valid_and_unique(self):
        world = make_world(12)
        self.assertEqual(len(set(world.fips)), 12)
        self.assertTrue(all(len(f) == 5 and f.isdigit() for f in world.fips))


class GenerateTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = Path(self.tmp.name)

    def test_files_load_with_data_readers(self):
        world = make_world(4, seed=1)
        with self.assertLogs("prognose.synthetic", "INFO"):
            output = generate_synthetic(world, 60, self.out)
        series = load_ground_truth(output.ground_truth)
        self.assertEqual(sorted(series), sorted(world.fips))
        for fips, s in series.items():
            self.assertEqual(len(s), 60)
            np.testing.assert_array_equal(s.daily_deaths, output.daily_deaths[fips])
        self.assertEqual(sorted(load_static_features(output.static)), sorted(world.fips))
        self.assertEqual(sorted(load_mobility(output.mobility)), sorted(world.fips))

    def test_reproducible_bytes(self):
        world = make_world(3, seed=2)
        first = generate_synthetic(world, 40, self.out / "a")
        second = generate_synthetic(world, 40, self.out / "b")
        for name in ("ground_truth", "static", "mobility"):
            self.assertEqual(getattr(first, name).read_bytes(), getattr(second, name).read_bytes())

    def test_noise_free_world_rounds_expectation(self):
        world = make_world(2, seed=0, noise_phi=None, dump_probability=0.0)
        output = generate_synthetic(world, 50, self.out)
        for fips in world.fips:
            deaths = output.daily_deaths[fips]
            np.testing.assert_array_equal(deaths, np.rint(deaths))
            self.assertTrue(np.all(deaths >= 0))
            np.testing.assert_array_equal(output.daily_deaths[fips], output.daily_deaths_undumped[fips])

    def test_forced_dump_conserves_deaths(self):
        world = make_world(2, seed=5, forced_dumps={"08001": [30]})
        output = generate_synthetic(world, 50, self.out)
        dumped, raw = output.daily_deaths["08001"], output.daily_deaths_undumped["08001"]
        self.assertEqual(dumped.sum(), raw.sum())
        self.assertEqual(dumped[30], raw[30 - DUMP_WINDOW + 1:31].sum())
