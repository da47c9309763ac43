"""Offline QoR / drop-rate evaluation over labeled datasets."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .dataset import FrameRecord, by_camera
from .features import BinGrid, HueRange, extract_features
from .shedder import ShedDecision
from .sim import FrameOutcome, overall_qor
from .threshold import build_cdf, threshold_for_drop_rate
from .utility import QueryExpr, UtilityModel, query_matches, train_utility_model


def score_records(model: UtilityModel, records: Sequence[FrameRecord]) -> np.ndarray:
    colors, grid = model.colors, model.grid
    return np.array([model.score(extract_features(r.hist, colors, grid)) for r in records])


def is_positive(rec: FrameRecord, query: QueryExpr) -> bool:
    return query_matches(query, rec.object_colors())


def qor_for_mask(records: Sequence[FrameRecord], shed: np.ndarray, colors) -> Optional[float]:
    trace = [
        FrameOutcome(r.frame_id, r.camera_id, r.ts_ms, r.objects, 0.0,
                     decision=ShedDecision.SHED_BY_THRESHOLD if s else ShedDecision.FORWARDED)
        for r, s in zip(records, shed)
    ]
    return overall_qor(trace, set(colors))


@dataclass(frozen=True)
class SweepRow:
    threshold: Optional[float]
    target_rate: Optional[float]
    observed_drop_rate: float
    qor: Optional[float]
    qor_std: Optional[float] = None
    runs: int = 1

    COLUMNS = ("threshold", "target_rate", "observed_drop_rate", "qor", "qor_std", "runs")

    def row(self) -> list:
        def fmt(x):
            return "" if x is None else repr(x)

        return [fmt(self.threshold), fmt(self.target_rate), fmt(self.observed_drop_rate),
                fmt(self.qor), fmt(self.qor_std), str(self.runs)]


def sweep_thresholds(records, utilities, thresholds, colors) -> list[SweepRow]:
    """Shed every frame with ``utility <= threshold`` and measure the outcome."""
    u = np.asarray(utilities)
    rows = []
    for t in thresholds:
        shed = u <= t
        rows.append(SweepRow(float(t), None, float(shed.mean()), qor_for_mask(records, shed, colors)))
    return rows


def sweep_rates(records, utilities, rates, colors) -> list[SweepRow]:
    """Threshold from the dataset's own utility CDF for each target rate."""
    u = np.asarray(utilities)
    cdf = build_cdf(u)
    rows = []
    for r in rates:
        t = threshold_for_drop_rate(cdf, r)
        shed = np.zeros(len(u), dtype=bool) if t is None else u <= t
        rows.append(SweepRow(t, float(r), float(shed.mean()), qor_for_mask(records, shed, colors)))
    return rows


def random_rates(records, rates, colors, seeds: Sequence[int]) -> list[SweepRow]:
    """Content-agnostic shedding: each frame dropped with probability ``r``."""
    rows = []
    for r in rates:
        drops, qors = [], []
        for s in seeds:
            rng = np.random.default_rng([int(s), int(round(r * 1e6))])
            shed = rng.random(len(records)) < r
            drops.append(shed.mean())
            q = qor_for_mask(records, shed, colors)
            if q is not None:
                qors.append(q)
        rows.append(SweepRow(None, float(r), float(np.mean(drops)),
                             float(np.mean(qors)) if qors else None,
                             float(np.std(qors)) if qors else None, len(seeds)))
    return rows


@dataclass(frozen=True)
class FoldResult:
    camera_id: int
    n_pos: int
    n_neg: int
    min_pos: Optional[float]
    max_neg: Optional[float]
    median_pos: Optional[float]
    p95_neg: Optional[float]

    COLUMNS = ("camera_id", "n_pos", "n_neg", "min_pos", "max_neg", "median_pos", "p95_neg",
               "separated")

    @property
    def separated(self) -> bool:
        if self.min_pos is None or self.max_neg is None:
            return True
        return self.min_pos > self.max_neg

    @property
    def median_above_p95(self) -> bool:
        if self.median_pos is None or self.p95_neg is None:
            return True
        return self.median_pos > self.p95_neg

    def row(self) -> list:
        def fmt(x):
            return "" if x is None else repr(x)

        return [str(self.camera_id), str(self.n_pos), str(self.n_neg), fmt(self.min_pos),
                fmt(self.max_neg), fmt(self.median_pos), fmt(self.p95_neg), str(self.separated)]


def leave_one_camera_out(
    records: Sequence[FrameRecord],
    colors: Mapping[str, HueRange],
    query: QueryExpr,
    grid: BinGrid,
):
    """Train on all cameras but one, score the held-out camera.

    Returns the fold summaries and, per fold, the held-out utilities.
    """
    cams = by_camera(records)
    qcolors = query.colors()
    folds, held = [], {}
    feats = {id(r): extract_features(r.hist, colors, grid) for r in records}
    for cam in sorted(cams):
        train = [(feats[id(r)], r.labels(qcolors)) for c, rs in cams.items() if c != cam for r in rs]
        model = train_utility_model(train, colors, query, grid)
        test = cams[cam]
        u = np.array([model.score(feats[id(r)]) for r in test])
        pos_mask = np.array([is_positive(r, query) for r in test], dtype=bool)
        pos, neg = u[pos_mask], u[~pos_mask]
        folds.append(FoldResult(
            cam, len(pos), len(neg),
            float(pos.min()) if len(pos) else None,
            float(neg.max()) if len(neg) else None,
            float(np.median(pos)) if len(pos) else None,
            float(np.percentile(neg, 95)) if len(neg) else None,
        ))
        held[cam] = (test, u)
    return folds, held
