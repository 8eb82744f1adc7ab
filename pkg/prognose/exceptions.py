"""
Fehlerhierarchie des Prognose-Werkzeugs.

Jede Klasse trägt den Exit-Code, den die Management-Befehle beim Abbruch
zurückgeben: 1 = Konfiguration, 2 = Daten, 3 = numerisches Versagen.
Reine Argumentfehler der Rechenfunktionen bleiben ``ValueError``.
"""


class PrognoseError(Exception):
    exit_code = 3


# ---------------------------------------------------
# Konfiguration
# ---------------------------------------------------
class ConfigError(PrognoseError):
    exit_code = 1


class LayoutError(ConfigError):
    """Spaltenlayout oder Formatversion eines Artefakts passt nicht."""


# ---------------------------------------------------
# Daten
# ---------------------------------------------------
class DataError(PrognoseError):
    exit_code = 2


class IngestionError(DataError):
    """Eingabedatei nicht lesbar oder ohne Pflichtspalten."""


class EvaluationError(DataError):
    """
    Für Zellen des Auswertungszeitraums fehlt eine Prognose.
    ``missing`` enthält die fehlenden (fips, datum)-Paare.
    """

    def __init__(self, missing):
        self.missing = list(missing)
        preview = ", ".join(f"{fips}@{day}" for fips, day in self.missing[:10])
        more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} weitere)"
        super().__init__(f"{len(self.missing)} Prognosezellen fehlen: {preview}{more}")


class CoverageError(DataError):
    """Aggregationsmenge deckt zu wenige (Modell, Stichtag)-Zellen ab."""


# ---------------------------------------------------
# Numerik
# ---------------------------------------------------
class NumericalError(PrognoseError):
    exit_code = 3


class IntegrationError(NumericalError):
    def __init__(self, step, message="nicht-endlicher Zustand"):
        self.step = step
        super().__init__(f"{message} in RK4-Schritt {step}")


class FactorizationError(NumericalError):
    def __init__(self, fips=""):
        self.fips = fips
        super().__init__(
            f"Cholesky-Zerlegung auch mit maximalem Jitter fehlgeschlagen (Kreis {fips or '?'})"
        )


class TrainingError(NumericalError):
    def __init__(self, epoch, learning_rate, loss):
        self.epoch = epoch
        self.learning_rate = learning_rate
        self.loss = loss
        super().__init__(
            f"Verlust nicht endlich ({loss}) in Epoche {epoch}; "
            f"Lernrate {learning_rate} vermutlich zu hoch"
        )


# ---------------------------------------------------
# Pipeline
# ---------------------------------------------------
class StageError(PrognoseError):
    """Bricht die Pipeline ab und nennt die Stufe; Exit-Code der Ursache."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
        super().__init__(f"Stufe '{stage}' fehlgeschlagen: {cause}")
