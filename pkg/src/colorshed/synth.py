"""Synthetic frame-feature streams.

Histograms are assembled from a few pixel populations, each confined to a
hue range and a block of saturation/value cells at quantization (1, 32, 32):

* clutter: non-target hues, any brightness
* dull target color: target hue at low saturation (brick, shadows, signage)
* vivid target color: target hue at high saturation and value (car paint)

Target objects carry a large vivid share; frames without them carry at most
a trace. Object tracks persist 10-30 consecutive frames.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import FrameRecord
from .features import HsvHistogram

QUANT = (1, 32, 32)

TARGET_HUES = {
    "red": ((0, 10), (170, 180)),
    "yellow": ((20, 35),),
}
CLUTTER_HUES = ((40, 100), (130, 165))

# (sat cells, val cells), half-open, in units of 32
VIVID = ((6, 8), (5, 8))
DULL = ((0, 3), (1, 5))
CLUTTER_SV = ((0, 6), (1, 8))

# vivid pixel share bounds: positives >= 20%, others <= 2%; the margins absorb
# rounding shares to whole pixels (>= 1500 pixels per frame)
VIVID_POS_MIN = 0.2005
VIVID_NEG_MAX = 0.0195


@dataclass(frozen=True)
class Mix:
    """Pixel shares of one frame (fractions of the foreground)."""

    vivid: dict
    dull: dict


def _hues(ranges):
    return np.concatenate([np.arange(lo, hi) for lo, hi in ranges])


_HUE_TABLE = {name: _hues(r) for name, r in TARGET_HUES.items()}
_CLUTTER = _hues(CLUTTER_HUES)


def _population(rng, hues, sv, n_pixels, n_cells, cells, counts):
    if n_pixels <= 0:
        return
    (s0, s1), (v0, v1) = sv
    k = int(min(n_cells, n_pixels))
    h = rng.choice(hues, size=k)
    s = rng.integers(s0, s1, size=k)
    v = rng.integers(v0, v1, size=k)
    c = rng.multinomial(n_pixels, rng.dirichlet(np.ones(k)))
    cells.append(np.column_stack([h, s, v]))
    counts.append(c)


def make_histogram(rng, mix: Mix, n_pixels: int, val_shift: int = 0) -> HsvHistogram:
    cells: list = []
    counts: list = []
    used = 0
    for name, share in mix.vivid.items():
        n = int(round(share * n_pixels))
        _population(rng, _HUE_TABLE[name], VIVID, n, 4, cells, counts)
        used += n
    for name, share in mix.dull.items():
        n = int(round(share * n_pixels))
        dull = (DULL[0], (max(0, DULL[1][0] + val_shift), DULL[1][1] + val_shift))
        _population(rng, _HUE_TABLE[name], dull, n, 6, cells, counts)
        used += n
    _population(rng, _CLUTTER, CLUTTER_SV, n_pixels - used, 10, cells, counts)
    if not cells:
        return HsvHistogram(np.zeros((0, 3)), [], QUANT)
    return HsvHistogram(np.concatenate(cells), np.concatenate(counts), QUANT)


def negative_mix(rng, colors) -> Mix:
    vivid, dull = {}, {}
    for name in colors:
        if rng.random() < 0.15:
            continue  # no pixels of this hue at all
        dull[name] = rng.uniform(0.05, 0.25)
        vivid[name] = rng.uniform(0.0, VIVID_NEG_MAX)
    return Mix(vivid, dull)


def positive_mix(rng, colors, present) -> Mix:
    vivid, dull = {}, {}
    for name in colors:
        if name in present:
            vivid[name] = rng.uniform(VIVID_POS_MIN, 0.45)
            dull[name] = rng.uniform(0.02, 0.15)
        else:
            dull[name] = rng.uniform(0.05, 0.2)
            vivid[name] = rng.uniform(0.0, VIVID_NEG_MAX)
    return Mix(vivid, dull)


def _scale(mix: Mix, budget=0.9) -> Mix:
    # only dull shares shrink, so vivid shares keep their stated bounds
    vivid = sum(mix.vivid.values())
    dull = sum(mix.dull.values())
    if vivid + dull <= budget:
        return mix
    f = max(0.0, budget - vivid) / dull
    return Mix(dict(mix.vivid), {k: v * f for k, v in mix.dull.items()})


def _track_schedule(rng, n_frames, positive_fraction):
    """Alternating gap/track runs; returns per-frame track index or -1."""
    mean_track = 20.0
    mean_gap = mean_track * (1.0 - positive_fraction) / max(positive_fraction, 1e-9)
    out = np.full(n_frames, -1)
    t, k = int(rng.integers(0, int(mean_gap) + 1)), 0
    while t < n_frames:
        length = int(rng.integers(10, 31))
        out[t : t + length] = k
        k += 1
        t += length + int(rng.integers(int(mean_gap * 0.5), int(mean_gap * 1.5) + 1))
    return out


def generate_corpus(
    seed: int,
    n_cameras: int = 6,
    frames_per_camera: int = 1200,
    object_colors=("red",),
    positive_fraction: float = 0.25,
    fps: float = 10.0,
    pixels=(1500, 6000),
):
    """Labeled multi-camera corpus with separable positives and negatives."""
    rng = np.random.default_rng(seed)
    colors = tuple(sorted(set(object_colors) | {"red"}))
    records = []
    fid = 0
    for cam in range(n_cameras):
        crng = np.random.default_rng(rng.integers(2**63))
        shift = int(crng.integers(0, 2))
        tracks = _track_schedule(crng, frames_per_camera, positive_fraction)
        track_color = {}
        for i in range(frames_per_camera):
            k = int(tracks[i])
            n_px = int(crng.integers(*pixels))
            if k >= 0:
                color = track_color.setdefault(k, object_colors[int(crng.integers(len(object_colors)))])
                objects = [(f"c{cam}-o{k}", color)]
                mix = positive_mix(crng, colors, {color})
            else:
                objects = []
                mix = negative_mix(crng, colors)
            hist = make_histogram(crng, _scale(mix), n_px, shift)
            records.append(
                FrameRecord(fid, cam, round(i * 1000.0 / fps, 3), hist, objects,
                            passes_blob_filter=True, passes_color_filter=bool(objects))
            )
            fid += 1
    return records


def generate_synthetic_scenario(
    seed: int,
    segment_seconds=(300, 300, 300),
    fps: float = 10.0,
    camera_id: int = 0,
    color: str = "red",
):
    """Three-segment stream for the latency experiment.

    1. low utility, no target objects, dropped by the color filter;
    2. target objects in every frame, all reach the detector;
    3. vivid target-colored content without objects, dropped by the blob filter.
    """
    if len(segment_seconds) != 3 or min(segment_seconds) <= 0:
        raise ValueError("need three positive segment lengths")
    rng = np.random.default_rng(seed)
    colors = (color,)
    records = []
    fid = 0
    obj = 0
    remaining = 0
    for seg, secs in enumerate(segment_seconds, start=1):
        for _ in range(int(round(secs * fps))):
            n_px = int(rng.integers(1500, 6000))
            if seg == 2:
                if remaining == 0:
                    obj += 1
                    remaining = int(rng.integers(10, 31))
                remaining -= 1
                objects = [(f"c{camera_id}-o{obj}", color)]
                mix = positive_mix(rng, colors, {color})
                flags = (True, True)
            elif seg == 1:
                objects = []
                mix = negative_mix(rng, colors)
                flags = (True, False)
            else:
                objects = []
                mix = Mix({color: rng.uniform(0.2, 0.45)}, {color: rng.uniform(0.02, 0.15)})
                flags = (False, True)
            hist = make_histogram(rng, _scale(mix), n_px)
            records.append(
                FrameRecord(fid, camera_id, round(fid * 1000.0 / fps, 3), hist, objects,
                            flags[0], flags[1], segment=seg)
            )
            fid += 1
    return records
