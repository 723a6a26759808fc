"""Synthetic ROI fixtures for desk-scale end-to-end runs.

Each study gets four anatomy ROIs in a canonical chest layout plus one
disease ROI per present finding. The disease box is placed on the side
its location attribute names, and the feature vector is composed from
deterministic class/attribute patterns: the side pattern is derived from
the box's own center, the level/type patterns from the finding, and a
view offset is added to every ROI. Answers are therefore recoverable
from ROI class and geometry alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .lexicon import CANONICAL_NAMES
from .relation_graphs import Roi, RoiSet, load_roiset, save_roiset
from .reports import KeyInfoRecord, Report

ANATOMY_LAYOUT = {
    # image-normalized (x, y, w, h); sides are image sides (synthetic
    # data, no radiological mirror): "left lung" sits on image-left
    "left lung": (0.08, 0.16, 0.34, 0.60),
    "right lung": (0.58, 0.16, 0.34, 0.60),
    "heart": (0.38, 0.46, 0.26, 0.30),
    "mediastinum": (0.41, 0.10, 0.18, 0.34),
}

LEFT_SIDE_PHRASES = ("left", "left-sided")
RIGHT_SIDE_PHRASES = ("right", "right-sided")

HEART_ANCHORED = {
    "cardiomegaly",
    "enlargement of the cardiac silhouette",
    "heart failure",
    "hypertensive heart disease",
}


@dataclass(frozen=True)
class FixtureConfig:
    d_o: int = 64
    pattern_seed: int = 2024
    noise: float = 0.05
    jitter: float = 0.015
    view_gain: float = 0.8
    attribute_gain: float = 0.9


def _stable_hash(s: str) -> int:
    h = 2166136261
    for ch in s.encode("utf-8"):
        h = (h ^ ch) * 16777619 % (1 << 32)
    return h


class PatternBank:
    """Deterministic unit-norm pattern per semantic key."""

    def __init__(self, d_o: int, seed: int):
        self.d_o = d_o
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def get(self, key: str) -> np.ndarray:
        if key not in self._cache:
            rng = np.random.default_rng((self.seed, _stable_hash(key)))
            vec = rng.normal(size=self.d_o)
            self._cache[key] = vec / np.linalg.norm(vec)
        return self._cache[key]


def _finding_side(finding) -> str | None:
    for phrase in (finding.location_pre, finding.location_post):
        if not phrase:
            continue
        if any(p in phrase for p in LEFT_SIDE_PHRASES):
            return "left"
        if any(p in phrase for p in RIGHT_SIDE_PHRASES):
            return "right"
    if finding.location_pre == "bilateral":
        return "bilateral"
    return None


def _vertical_zone(finding) -> str:
    phrase = finding.location_post or ""
    if any(w in phrase for w in ("lower", "base", "basal")):
        return "lower"
    if any(w in phrase for w in ("upper", "apical")):
        return "upper"
    return "middle"


def _place_disease_box(
    name: str, side: str | None, zone: str, rng: np.random.Generator
) -> tuple[float, float, float, float]:
    if name in HEART_ANCHORED and side is None:
        region = ANATOMY_LAYOUT["heart"]
    else:
        if side is None:
            side = "left" if rng.random() < 0.5 else "right"
        region = ANATOMY_LAYOUT[f"{side} lung"]
    rx, ry, rw, rh = region
    w = float(rng.uniform(0.10, 0.16))
    h = float(rng.uniform(0.10, 0.16))
    zone_frac = {"upper": 0.1, "middle": 0.4, "lower": 0.7}[zone]
    x = rx + float(rng.uniform(0.05, max(0.06, rw - w - 0.05)))
    y = ry + zone_frac * rh + float(rng.uniform(0.0, 0.05))
    x = min(max(x, 0.0), 1.0 - w)
    y = min(max(y, 0.0), 1.0 - h)
    return (x, y, w, h)


def _box_side(box: tuple[float, float, float, float]) -> str:
    return "left" if box[0] + box[2] / 2.0 < 0.5 else "right"


def build_fixture(
    report: Report,
    record: KeyInfoRecord,
    cfg: FixtureConfig,
    bank: PatternBank,
    rng: np.random.Generator,
) -> RoiSet:
    """One RoiSet whose content encodes the record's answers."""
    view_vec = cfg.view_gain * bank.get(f"view:{report.view}")
    rois: list[Roi] = []
    for name, base_box in ANATOMY_LAYOUT.items():
        x, y, w, h = base_box
        x = min(max(x + rng.uniform(-cfg.jitter, cfg.jitter), 0.0), 1.0 - w)
        y = min(max(y + rng.uniform(-cfg.jitter, cfg.jitter), 0.0), 1.0 - h)
        feature = bank.get(name) + view_vec + cfg.noise * rng.normal(size=cfg.d_o)
        rois.append(Roi((x, y, w, h), name, feature))
    for finding in record.findings:
        if not finding.present:
            continue
        name = CANONICAL_NAMES[finding.abnormality_id]
        side = _finding_side(finding)
        sides = ("left", "right") if side == "bilateral" else (side,)
        for s in sides:
            box = _place_disease_box(name, s, _vertical_zone(finding), rng)
            feature = bank.get(name) + view_vec
            # the side signal comes from where the box actually sits
            feature = feature + cfg.attribute_gain * bank.get(f"side:{_box_side(box)}")
            if finding.level:
                feature = feature + cfg.attribute_gain * bank.get(f"level:{finding.level}")
            if finding.ab_type:
                feature = feature + cfg.attribute_gain * bank.get(f"type:{finding.ab_type}")
            if finding.location_post:
                feature = feature + cfg.attribute_gain * bank.get(f"loc:{finding.location_post}")
            feature = feature + cfg.noise * rng.normal(size=cfg.d_o)
            rois.append(Roi(box, name, feature))
    return RoiSet(image_id=report.image_ids[0], study_id=record.study_id, rois=tuple(rois))


def synth_fixtures(
    corpus: list[tuple[Report, KeyInfoRecord]],
    cfg: FixtureConfig | None = None,
    seed: int = 0,
) -> dict[str, RoiSet]:
    """Fixture per study, keyed by study_id; deterministic per seed."""
    cfg = cfg or FixtureConfig()
    bank = PatternBank(cfg.d_o, cfg.pattern_seed)
    out: dict[str, RoiSet] = {}
    for report, record in corpus:
        rng = np.random.default_rng((seed, _stable_hash(record.study_id)))
        out[record.study_id] = build_fixture(report, record, cfg, bank, rng)
    return out


# ---------------------------------------------------------------------------
# directory-backed fixture store
# ---------------------------------------------------------------------------


class FixtureStore:
    """ROI fixtures in a directory of <image_id>.json/.bin pairs."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._by_study: dict[str, Path] = {}
        if self.directory.is_dir():
            for header in sorted(self.directory.glob("*.json")):
                study_id = json.loads(header.read_text(encoding="utf-8"))["study_id"]
                self._by_study[study_id] = header

    def study_ids(self) -> list[str]:
        return sorted(self._by_study)

    def __contains__(self, study_id: str) -> bool:
        return study_id in self._by_study

    def load(self, study_id: str) -> RoiSet:
        if study_id not in self._by_study:
            raise KeyError(f"no ROI fixture for study {study_id!r}")
        return load_roiset(self._by_study[study_id])

    def save(self, roiset: RoiSet) -> None:
        header, _ = save_roiset(roiset, self.directory)
        self._by_study[roiset.study_id] = header
