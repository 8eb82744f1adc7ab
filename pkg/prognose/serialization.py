"""
Versionierte JSON-Ablage für trainierte Modelle (Netze, Bäume, Ensemble).
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

from packaging.version import InvalidVersion, Version

from .exceptions import LayoutError

logger = logging.getLogger(__name__)

FORMAT_VERSION = "1.0"


def dump(path, kind: str, payload: Any) -> Path:
    document = {"format_version": FORMAT_VERSION, "kind": kind, "payload": payload}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(document, sort_keys=True, indent=1), encoding="utf-8")
    return path


def check_version(found: str, expected: str = FORMAT_VERSION, what: str = "Format") -> None:
    """Gleiche Hauptversion ist lesbar, alles andere ist ein harter Fehler."""
    try:
        found_v, expected_v = Version(str(found)), Version(str(expected))
    except InvalidVersion as exc:
        raise LayoutError(f"{what}: ungültige Version '{found}'") from exc
    if found_v.major != expected_v.major:
        raise LayoutError(f"{what}: Version {found_v} nicht kompatibel mit {expected_v}")
    if found_v > expected_v:
        logger.warning("%s: Version %s neuer als %s", what, found_v, expected_v)


def load(path, kind: str) -> Any:
    path = Path(path)
    try:
        document = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise LayoutError(f"Modelldatei {path} nicht lesbar: {exc}") from exc
    if document.get("kind") != kind:
        raise LayoutError(f"{path}: Art '{document.get('kind')}', erwartet '{kind}'")
    check_version(document.get("format_version", "0"), what=str(path))
    return document["payload"]
