import datetime

from django import forms

from .registry import MODEL_NAMES

SUPPORTED_CONFIG_MAJOR = 1


class RunConfigForm(forms.Form):
    """
    Prüft eine zusammengeführte Lauf-Konfiguration (Standardwerte + JSON-Datei
    + Kommandozeile). Verschachtelte Abschnitte kommen als JSON-Werte.
    Zusätzlich:
    - Lags dürfen nicht in den Prognosezeitraum reichen
    - mindestens ein Modell muss aktiv sein
    """
    config_version = forms.CharField(label="Konfigurationsversion")
    seed = forms.IntegerField(min_value=0, label="Master-Saat")
    forecast_len = forms.IntegerField(min_value=1, label="Prognoselänge (Tage)")
    lags = forms.JSONField(label="Lags (Tage)")
    periods = forms.JSONField(label="Prognosezeiträume")
    aggregation_days = forms.IntegerField(min_value=1, label="Tage der Aggregationsmenge")
    min_coverage = forms.FloatField(min_value=0.0, max_value=1.0, label="Mindestabdeckung")
    quantile_window = forms.IntegerField(min_value=2, label="Fenster für phi (Tage)")
    plot_history_days = forms.IntegerField(min_value=0, label="Historientage in Plotdateien")
    mobility_default = forms.FloatField(label="Mobilitätsindex ohne Daten")
    ground_truth = forms.CharField(label="Wahrheitsdatei")
    static = forms.CharField(required=False, label="Statische Merkmale")
    mobility = forms.CharField(required=False, label="Mobilitätsdatei")
    output_dir = forms.CharField(label="Ausgabeverzeichnis")
    models = forms.JSONField(label="Modelle")
    ensemble = forms.JSONField(label="Ensemble")
    dump = forms.JSONField(label="Nachmelderegel")
    clustering = forms.JSONField(label="Clustering")

    def clean_config_version(self):
        value = self.cleaned_data["config_version"]
        try:
            major = int(str(value).split(".")[0])
        except ValueError:
            raise forms.ValidationError(f"Ungültige Versionsangabe '{value}'.")
        if major != SUPPORTED_CONFIG_MAJOR:
            raise forms.ValidationError(
                f"Konfigurationsversion {value} wird nicht unterstützt (erwartet {SUPPORTED_CONFIG_MAJOR}.x)."
            )
        return value

    def clean_lags(self):
        lags = self.cleaned_data["lags"]
        if not isinstance(lags, list) or not all(isinstance(v, int) and v > 0 for v in lags):
            raise forms.ValidationError("Lags müssen eine Liste positiver ganzer Zahlen sein.")
        return sorted(set(lags))

    def clean_periods(self):
        periods = self.cleaned_data["periods"]
        if not isinstance(periods, list) or not periods:
            raise forms.ValidationError("Mindestens ein Prognosezeitraum nötig.")
        cleaned, labels = [], set()
        for item in periods:
            if not isinstance(item, dict) or "start" not in item:
                raise forms.ValidationError("Jeder Zeitraum braucht 'label' und 'start'.")
            label = str(item.get("label") or f"period{len(cleaned) + 1}")
            if label in labels:
                raise forms.ValidationError(f"Zeitraum '{label}' doppelt.")
            try:
                start = datetime.date.fromisoformat(str(item["start"]))
            except ValueError:
                raise forms.ValidationError(f"Startdatum '{item['start']}' ist kein ISO-Datum.")
            labels.add(label)
            cleaned.append({"label": label, "start": start.isoformat()})
        return cleaned

    def clean_models(self):
        models = self.cleaned_data["models"]
        if not isinstance(models, dict):
            raise forms.ValidationError("Abschnitt 'models' muss ein Objekt sein.")
        unknown = sorted(set(models) - set(MODEL_NAMES))
        if unknown:
            raise forms.ValidationError(f"Unbekannte Modelle: {', '.join(unknown)}.")
        if not any(dict(models.get(name) or {}).get("enabled", True) for name in MODEL_NAMES):
            raise forms.ValidationError("Mindestens ein Modell muss aktiv sein.")
        return models

    def clean(self):
        cleaned_data = super().clean()
        lags = cleaned_data.get("lags")
        forecast_len = cleaned_data.get("forecast_len")

        if lags and forecast_len:
            too_short = [lag for lag in lags if lag < forecast_len + 1]
            if too_short:
                self.add_error(
                    "lags",
                    f"Lags {too_short} kürzer als Prognoselänge + 1 = {forecast_len + 1}.",
                )
        return cleaned_data

    def error_summary(self) -> str:
        return "; ".join(
            f"{field}: {' '.join(str(m) for m in messages)}"
            for field, messages in self.errors.items()
        )
