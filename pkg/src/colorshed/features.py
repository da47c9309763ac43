"""HSV color features of foreground frames.

Frames reach the shedder as sparse HSV histograms. From these we derive, per
query color, the hue fraction and the pixel-fraction (PF) matrix over
saturation x value bins that the utility model scores.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, InputError

HUE_RANGE = 180
SV_RANGE = 256
DEFAULT_QUANT = (1, 32, 32)


@dataclass(frozen=True)
class HueRange:
    """Union of half-open integer hue intervals on [0, 180)."""

    intervals: tuple[tuple[int, int], ...]

    def __post_init__(self):
        ivs = tuple(sorted((int(lo), int(hi)) for lo, hi in self.intervals))
        if not ivs:
            raise InputError("hue range needs at least one interval")
        for lo, hi in ivs:
            if not 0 <= lo < hi <= HUE_RANGE:
                raise InputError(f"hue interval [{lo}, {hi}) outside [0, {HUE_RANGE})")
        for (_, hi), (lo, _) in zip(ivs, ivs[1:]):
            if lo < hi:
                raise InputError(f"hue intervals overlap: {ivs}")
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def of(cls, *intervals: Sequence[int]) -> "HueRange":
        return cls(tuple((lo, hi) for lo, hi in intervals))

    def __contains__(self, hue: int) -> bool:
        return any(lo <= hue < hi for lo, hi in self.intervals)

    def lut(self, hue_step: int = 1) -> np.ndarray:
        """Membership table indexed by hue cell for histograms with ``hue_step``."""
        return _hue_lut(self.intervals, hue_step)

    def to_json(self) -> list[list[int]]:
        return [[lo, hi] for lo, hi in self.intervals]


@lru_cache(maxsize=256)
def _hue_lut(intervals, hue_step):
    for lo, hi in intervals:
        if lo % hue_step or hi % hue_step:
            raise ConfigError(
                f"hue interval [{lo}, {hi}) not aligned to histogram hue step {hue_step}"
            )
    lut = np.zeros(HUE_RANGE // hue_step, dtype=np.uint8)
    for lo, hi in intervals:
        lut[lo // hue_step : hi // hue_step] = 1
    lut.setflags(write=False)
    return lut


@dataclass(frozen=True)
class BinGrid:
    sat_bin_size: int = 32
    val_bin_size: int = 32

    def __post_init__(self):
        for name in ("sat_bin_size", "val_bin_size"):
            size = getattr(self, name)
            if size <= 0 or SV_RANGE % size:
                raise ConfigError(f"{name}={size} must divide {SV_RANGE}")

    @property
    def n_sat_bins(self) -> int:
        return SV_RANGE // self.sat_bin_size

    @property
    def n_val_bins(self) -> int:
        return SV_RANGE // self.val_bin_size

    @property
    def shape(self) -> tuple[int, int]:
        return self.n_sat_bins, self.n_val_bins


def _check_channel(x, name):
    if not 0 <= x < SV_RANGE:
        raise InputError(f"{name} {x} outside [0, {SV_RANGE})")


def sat_bin(saturation: int, grid: BinGrid) -> int:
    _check_channel(saturation, "saturation")
    return saturation // grid.sat_bin_size


def val_bin(value: int, grid: BinGrid) -> int:
    _check_channel(value, "value")
    return value // grid.val_bin_size


@lru_cache(maxsize=64)
def _cell_to_bin(step, bin_size):
    if bin_size % step:
        raise ConfigError(
            f"bin size {bin_size} is not a multiple of histogram step {step}"
        )
    m = (np.arange(SV_RANGE // step, dtype=np.int64) * step) // bin_size
    m.setflags(write=False)
    return m


class HsvHistogram:
    """Sparse HSV histogram of a frame's foreground pixels.

    ``cells`` holds ``(hue_cell, sat_cell, val_cell)`` rows at quantization
    ``quant = (hue_step, sat_step, val_step)``; ``counts`` the pixels per cell.
    Duplicate cells are merged on construction.
    """

    __slots__ = ("quant", "cells", "counts", "total")

    def __init__(self, cells, counts, quant=DEFAULT_QUANT, total=None):
        quant = tuple(int(q) for q in quant)
        if len(quant) != 3:
            raise InputError("quant must be (hue_step, sat_step, val_step)")
        hs, ss, vs = quant
        if hs <= 0 or HUE_RANGE % hs:
            raise InputError(f"hue step {hs} must divide {HUE_RANGE}")
        if ss <= 0 or vs <= 0 or SV_RANGE % ss or SV_RANGE % vs:
            raise InputError(f"sat/val steps {ss}/{vs} must divide {SV_RANGE}")
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
        counts = np.asarray(counts, dtype=np.int64).reshape(-1)
        if len(cells) != len(counts):
            raise InputError("cells and counts differ in length")
        if (counts < 0).any():
            raise InputError("negative pixel count")
        limits = np.array([HUE_RANGE // hs, SV_RANGE // ss, SV_RANGE // vs])
        if len(cells) and ((cells < 0).any() or (cells >= limits).any()):
            raise InputError("histogram cell index out of range")
        if len(cells):
            keep = counts > 0
            cells, counts = cells[keep], counts[keep]
            key = (cells[:, 0] * limits[1] + cells[:, 1]) * limits[2] + cells[:, 2]
            # canonical order: sorted by cell key, duplicates merged
            uniq, first, inv = np.unique(key, return_index=True, return_inverse=True)
            merged = np.zeros(len(uniq), dtype=np.int64)
            np.add.at(merged, inv.reshape(-1), counts)
            cells, counts = cells[first], merged
        cells = np.ascontiguousarray(cells)
        counts = np.ascontiguousarray(counts)
        n = int(counts.sum())
        if total is not None and int(total) != n:
            raise InputError(f"histogram total {total} != sum of counts {n}")
        cells.setflags(write=False)
        counts.setflags(write=False)
        self.quant = quant
        self.cells = cells
        self.counts = counts
        self.total = n

    @classmethod
    def from_pixels(cls, pixels: Iterable[Sequence[int]], quant=(1, 1, 1)):
        """Histogram of raw ``(h, s, v)`` pixel triplets."""
        px = np.asarray(list(pixels), dtype=np.int64).reshape(-1, 3)
        if len(px):
            if (px < 0).any() or (px[:, 0] >= HUE_RANGE).any() or (px[:, 1:] >= SV_RANGE).any():
                raise InputError("pixel channel out of range")
        cells = px // np.asarray(quant, dtype=np.int64)
        return cls(cells, np.ones(len(px), dtype=np.int64), quant)

    def coarsen(self, quant) -> "HsvHistogram":
        quant = tuple(int(q) for q in quant)
        for old, new in zip(self.quant, quant):
            if new % old:
                raise ConfigError(f"cannot coarsen step {old} to {new}")
        factor = np.array([n // o for o, n in zip(self.quant, quant)], dtype=np.int64)
        return HsvHistogram(self.cells // factor, self.counts, quant)

    @classmethod
    def from_json(cls, d: Mapping) -> "HsvHistogram":
        try:
            rows = np.asarray(d["cells"], dtype=np.int64).reshape(-1, 4)
            return cls(rows[:, :3], rows[:, 3], d.get("quant", DEFAULT_QUANT), d.get("total"))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"malformed histogram: {exc}") from exc

    def to_json(self) -> dict:
        rows = np.column_stack([self.cells, self.counts]).tolist() if len(self.counts) else []
        return {"quant": list(self.quant), "cells": rows, "total": self.total}

    def __eq__(self, other):
        if not isinstance(other, HsvHistogram):
            return NotImplemented
        return (
            self.quant == other.quant
            and self.total == other.total
            and self.to_json() == other.to_json()
        )

    def __repr__(self):
        return f"HsvHistogram(quant={self.quant}, cells={len(self.counts)}, total={self.total})"


@dataclass(frozen=True)
class ColorFeatures:
    hue_fraction: float
    pf: np.ndarray
    hue_pixel_count: int
    pf_flat: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.pf_flat is None:
            object.__setattr__(self, "pf_flat", np.ascontiguousarray(self.pf).reshape(-1))


@dataclass(frozen=True)
class FrameFeatures:
    per_color: dict[str, ColorFeatures]
    total_fg_pixels: int
    grid: BinGrid

    def __getitem__(self, color: str) -> ColorFeatures:
        return self.per_color[color]


def hue_fraction(hist: HsvHistogram, color: HueRange) -> float:
    if hist.total == 0:
        return 0.0
    return kernels.hue_count(hist.cells, hist.counts, color.lut(hist.quant[0])) / hist.total


def color_features(hist: HsvHistogram, color: HueRange, grid: BinGrid) -> ColorFeatures:
    hs, ss, vs = hist.quant
    lut = color.lut(hs)
    sat_map = _cell_to_bin(ss, grid.sat_bin_size)
    val_map = _cell_to_bin(vs, grid.val_bin_size)
    flat, n_hue = kernels.accumulate_pf(
        hist.cells, hist.counts, lut, sat_map, val_map, grid.n_sat_bins, grid.n_val_bins
    )
    flat.setflags(write=False)
    hf = n_hue / hist.total if hist.total else 0.0
    return ColorFeatures(hf, flat.reshape(grid.shape), n_hue, flat)


def extract_features(
    hist: HsvHistogram,
    colors: Mapping[str, HueRange] | Iterable[tuple[str, HueRange]],
    grid: BinGrid,
) -> FrameFeatures:
    items = colors.items() if isinstance(colors, Mapping) else colors
    per_color = {name: color_features(hist, rng, grid) for name, rng in items}
    return FrameFeatures(per_color, hist.total, grid)


def parse_colors(obj: Mapping) -> dict[str, HueRange]:
    if not isinstance(obj, Mapping) or not obj:
        raise InputError("colors config must be a non-empty JSON object")
    out = {}
    for name, ivs in obj.items():
        try:
            out[str(name)] = HueRange(tuple(tuple(iv) for iv in ivs))
        except (TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise InputError(f"color {name!r}: {exc}") from exc
            raise InputError(f"color {name!r}: malformed intervals {ivs!r}") from exc
    return out


def load_colors(path) -> dict[str, HueRange]:
    with open(path) as fh:
        try:
            return parse_colors(json.load(fh))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: {exc}") from exc


DEFAULT_COLORS = {
    "red": HueRange.of((0, 10), (170, 180)),
    "yellow": HueRange.of((20, 35)),
    "blue": HueRange.of((100, 130)),
}
