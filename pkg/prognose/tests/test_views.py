import tempfile
from datetime import timedelta
from pathlib import Path

import numpy as np
from django.contrib.auth import get_user_model
from django.test import TestCase
from django.urls import reverse

from prognose.metrics import QuantileForecast
from prognose.models import EvaluationResult, ForecastRun
from prognose.pipeline import emit_plotdata

from .factories import START, make_series


class ViewTestCase(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.user = get_user_model().objects.create_user("analyst", password="geheim")
        self.client.force_login(self.user)
        self.run = ForecastRun.objects.create(
            config_hash="ab" * 32,
            config={"periods": [{"label": "period1", "start": "2020-03-20"}]},
            output_dir=self.tmp.name,
            seed=7,
            status="DONE",
        )
        EvaluationResult.objects.create(run=self.run, model_name="ensemble", period="period1", pinball=0.4321, rmse=1.5, n_cells=28)
        EvaluationResult.objects.create(run=self.run, model_name="naive_zero", period="period1", pinball=2.0, rmse=3.0, n_cells=28)

        series = {"08001": make_series(np.arange(20.0))}
        first = START + timedelta(days=18)
        forecasts = [QuantileForecast.from_raw("08001", first + timedelta(days=h), np.linspace(0, 8, 9)) for h in range(3)]
        emit_plotdata(forecasts, series, None, Path(self.tmp.name) / "period1" / "plots", history_days=2)


class HomeViewTests(ViewTestCase):
    def test_login_required(self):
        self.client.logout()
        response = self.client.get(reverse("home"))
        self.assertEqual(response.status_code, 302)

    def test_lists_runs(self):
        response = self.client.get(reverse("home"))
        self.assertEqual(response.status_code, 200)
        self.assertContains(response, reverse("run_detail", args=[self.run.pk]))
        self.assertContains(response, "abababababab")

    def test_status_filter(self):
        failed = ForecastRun.objects.create(config_hash="cd" * 32, output_dir="/x", seed=1, status="FAILED")
        response = self.client.get(reverse("home"), {"status": "FAILED"})
        self.assertEqual(list(response.context["page_obj"]), [failed])
        response = self.client.get(reverse("home"), {"status": "UNSINN"})
        self.assertEqual(len(response.context["page_obj"]), 2)

    def test_badge_for_failed_latest_run(self):
        ForecastRun.objects.create(config_hash="cd" * 32, output_dir="/x", seed=1, status="FAILED")
        response = self.client.get(reverse("home"))
        self.assertTrue(response.context["latest_run_failed"])
        self.assertContains(response, "badge-failed")

    def test_header_shows_toolkit_defaults(self):
        response = self.client.get(reverse("home"))
        self.assertEqual(response.context["CONFIG_VERSION"], "1.0")
        self.assertEqual(response.context["FORECAST_LEN"], 14)


class RunDetailViewTests(ViewTestCase):
    def test_table_and_plot_links(self):
        response = self.client.get(reverse("run_detail", args=[self.run.pk]))
        self.assertEqual(response.status_code, 200)
        self.assertEqual(response.context["periods"], ["period1"])
        self.assertEqual([row["model"] for row in response.context["table"]], ["ensemble", "naive_zero"])
        self.assertEqual(response.context["table"][0]["cells"][0].pinball, 0.4321)
        self.assertEqual(response.context["plot_counties"], {"period1": ["08001"]})
        self.assertContains(response, reverse("plot_data", args=[self.run.pk, "period1", "08001"]))

    def test_unknown_run(self):
        response = self.client.get(reverse("run_detail", args=[self.run.pk + 100]))
        self.assertEqual(response.status_code, 404)


class PlotDataViewTests(ViewTestCase):
    def test_json(self):
        response = self.client.get(reverse("plot_data", args=[self.run.pk, "period1", "08001"]))
        self.assertEqual(response.status_code, 200)
        payload = response.json()
        self.assertEqual(payload["fips"], "08001")
        self.assertEqual(len(payload["quantiles"]), 9)
        self.assertEqual([row["kind"] for row in payload["rows"]], ["history", "history", "forecast", "forecast", "forecast"])
        self.assertEqual(payload["rows"][0]["truth"], 16.0)
        self.assertIsNone(payload["rows"][0]["q50"])
        self.assertIsNone(payload["rows"][-1]["truth"])
        self.assertEqual(payload["rows"][2]["q50"], 4.0)

    def test_not_found(self):
        for period, fips in (("period9", "08001"), ("period1", "8001"), ("period1", "09999")):
            with self.subTest(period=period, fips=fips):
                response = self.client.get(reverse("plot_data", args=[self.run.pk, period, fips]))
                self.assertEqual(response.status_code, 404)

    def test_login_required(self):
        self.client.logout()
        response = self.client.get(reverse("plot_data", args=[self.run.pk, "period1", "08001"]))
        self.assertEqual(response.status_code, 302)
