"""Per-color saturation/value utility models and composite queries."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from . import kernels
from .errors import ConfigError, InputError, TrainingError
from .features import BinGrid, ColorFeatures, FrameFeatures, HueRange

log = logging.getLogger(__name__)

MODEL_FORMAT = "colorshed-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class LabeledFrame:
    features: FrameFeatures
    label: int
    frame_id: object = None
    camera_id: object = None

    def __post_init__(self):
        if self.label not in (0, 1):
            raise InputError(f"label must be 0 or 1, got {self.label!r}")


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ColorModel:
    """Trained bin weights for one color.

    ``m_pos[i, j]`` is the mean PF of bin (i, j) over positive training
    frames; ``m_neg`` the same over negatives (kept for diagnostics, scoring
    only uses ``m_pos``). ``norm`` is the largest raw utility seen in training.
    """

    name: str
    hue_range: HueRange
    grid: BinGrid
    m_pos: np.ndarray
    m_neg: np.ndarray
    norm: float
    n_pos: int
    n_neg: int
    _w: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for attr in ("m_pos", "m_neg"):
            a = _frozen(getattr(self, attr))
            if a.shape != self.grid.shape:
                raise ConfigError(f"{attr} shape {a.shape} != grid {self.grid.shape}")
            object.__setattr__(self, attr, a)
        object.__setattr__(self, "_w", self.m_pos.reshape(-1))
        object.__setattr__(self, "norm", float(self.norm))

    def raw(self, cf: ColorFeatures) -> float:
        return kernels.weighted_sum(self._w, cf.pf_flat)

    def normalized(self, cf: ColorFeatures) -> float:
        if self.norm <= 0.0:
            return 0.0
        u = kernels.weighted_sum(self._w, cf.pf_flat) / self.norm
        return 1.0 if u > 1.0 else u

    def to_json(self) -> dict:
        return {
            "hue": self.hue_range.to_json(),
            "grid": [self.grid.sat_bin_size, self.grid.val_bin_size],
            "m_pos": self.m_pos.reshape(-1).tolist(),
            "m_neg": self.m_neg.reshape(-1).tolist(),
            "norm": self.norm,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
        }

    @classmethod
    def from_json(cls, name: str, d: Mapping) -> "ColorModel":
        grid = BinGrid(*d["grid"])
        return cls(
            name=name,
            hue_range=HueRange(tuple(tuple(iv) for iv in d["hue"])),
            grid=grid,
            m_pos=np.asarray(d["m_pos"], dtype=np.float64).reshape(grid.shape),
            m_neg=np.asarray(d["m_neg"], dtype=np.float64).reshape(grid.shape),
            norm=d["norm"],
            n_pos=int(d["n_pos"]),
            n_neg=int(d["n_neg"]),
        )


def _color_of(features: FrameFeatures, name: str, grid: BinGrid) -> ColorFeatures:
    if features.grid != grid:
        raise ConfigError(f"feature grid {features.grid} does not match model grid {grid}")
    try:
        return features.per_color[name]
    except KeyError:
        raise ConfigError(f"features carry no color {name!r}") from None


def train_color_model(
    dataset: Sequence[LabeledFrame], name: str, hue_range: HueRange, grid: BinGrid
) -> ColorModel:
    pos, neg = [], []
    for lf in dataset:
        cf = _color_of(lf.features, name, grid)
        (pos if lf.label == 1 else neg).append(cf.pf_flat)
    if not pos:
        raise TrainingError(f"no positive examples for color {name!r}")
    size = grid.n_sat_bins * grid.n_val_bins
    m_pos = np.mean(np.stack(pos), axis=0)
    if neg:
        m_neg = np.mean(np.stack(neg), axis=0)
    else:
        log.warning("no negative examples for color %r; m_neg is all zeros", name)
        m_neg = np.zeros(size)
    w = np.ascontiguousarray(m_pos)
    norm = max(kernels.weighted_sum(w, x) for x in pos + neg)
    return ColorModel(
        name=name,
        hue_range=hue_range,
        grid=grid,
        m_pos=m_pos.reshape(grid.shape),
        m_neg=m_neg.reshape(grid.shape),
        norm=max(norm, 0.0),
        n_pos=len(pos),
        n_neg=len(neg),
    )


def raw_utility(model: ColorModel, features: FrameFeatures) -> float:
    return model.raw(_color_of(features, model.name, model.grid))


def normalized_utility(model: ColorModel, features: FrameFeatures) -> float:
    return model.normalized(_color_of(features, model.name, model.grid))


# -- queries -----------------------------------------------------------------


@dataclass(frozen=True)
class Single:
    color: str

    def colors(self) -> set[str]:
        return {self.color}

    def __str__(self):
        return self.color


@dataclass(frozen=True)
class Or:
    left: "QueryExpr"
    right: "QueryExpr"

    def colors(self) -> set[str]:
        return self.left.colors() | self.right.colors()

    def __str__(self):
        return f"({self.left}|{self.right})"


@dataclass(frozen=True)
class And:
    left: "QueryExpr"
    right: "QueryExpr"

    def colors(self) -> set[str]:
        return self.left.colors() | self.right.colors()

    def __str__(self):
        return f"({self.left}&{self.right})"


QueryExpr = Union[Single, Or, And]

_TOKEN = re.compile(r"\s*(?:([A-Za-z_][\w-]*)|(\S))")


def parse_query(text: str) -> QueryExpr:
    """Parse ``red``, ``red|yellow``, ``red & (yellow or blue)``; AND binds tighter."""
    tokens = []
    for m in _TOKEN.finditer(text):
        word, sym = m.groups()
        if word and word.lower() in ("or", "and"):
            tokens.append("|" if word.lower() == "or" else "&")
        elif word:
            tokens.append(("name", word))
        elif sym in "|&()":
            tokens.append(sym)
        else:
            raise InputError(f"unexpected {sym!r} in query {text!r}")
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def take():
        nonlocal pos
        pos += 1
        return tokens[pos - 1]

    def atom():
        tok = take() if peek() is not None else None
        if tok == "(":
            e = expr()
            if peek() != ")":
                raise InputError(f"unbalanced parentheses in {text!r}")
            take()
            return e
        if isinstance(tok, tuple):
            return Single(tok[1])
        raise InputError(f"malformed query {text!r}")

    def term():
        e = atom()
        while peek() == "&":
            take()
            e = And(e, atom())
        return e

    def expr():
        e = term()
        while peek() == "|":
            take()
            e = Or(e, term())
        return e

    if not tokens:
        raise InputError("empty query")
    result = expr()
    if pos != len(tokens):
        raise InputError(f"trailing tokens in query {text!r}")
    return result


def query_matches(q: QueryExpr, present: set[str]) -> bool:
    """Whether a frame whose objects have colors ``present`` satisfies ``q``."""
    if isinstance(q, Single):
        return q.color in present
    if isinstance(q, Or):
        return query_matches(q.left, present) or query_matches(q.right, present)
    return query_matches(q.left, present) and query_matches(q.right, present)


@dataclass(frozen=True)
class UtilityModel:
    models: Mapping[str, ColorModel]
    query: QueryExpr
    version: int = MODEL_VERSION

    def __post_init__(self):
        missing = self.query.colors() - set(self.models)
        if missing:
            raise ConfigError(f"query references untrained colors: {sorted(missing)}")
        grids = {m.grid for m in self.models.values()}
        if len(grids) > 1:
            raise ConfigError("color models use different grids")

    @property
    def grid(self) -> BinGrid:
        return next(iter(self.models.values())).grid

    @property
    def colors(self) -> dict[str, HueRange]:
        return {name: m.hue_range for name, m in self.models.items()}

    def score(self, features: FrameFeatures) -> float:
        return query_utility(self, features)

    def to_json(self) -> dict:
        body = {
            "format": MODEL_FORMAT,
            "version": self.version,
            "query": str(self.query),
            "colors": {name: self.models[name].to_json() for name in sorted(self.models)},
        }
        body["content_hash"] = _content_hash(body)
        return body

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def from_json(cls, d: Mapping) -> "UtilityModel":
        if d.get("format") != MODEL_FORMAT:
            raise InputError("not a colorshed model file")
        if d.get("version") != MODEL_VERSION:
            raise InputError(f"unsupported model version {d.get('version')!r}")
        expected = d.get("content_hash")
        body = {k: v for k, v in d.items() if k != "content_hash"}
        if expected is not None and expected != _content_hash(body):
            raise InputError("model content hash mismatch")
        models = {name: ColorModel.from_json(name, cd) for name, cd in d["colors"].items()}
        return cls(models, parse_query(d["query"]), d["version"])

    @classmethod
    def load(cls, path) -> "UtilityModel":
        with open(path) as fh:
            try:
                return cls.from_json(json.load(fh))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise InputError(f"{path}: malformed model file ({exc})") from exc


def _content_hash(body: Mapping) -> str:
    blob = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _eval(q, models, per_color):
    if type(q) is Single:
        m = models[q.color]
        return m.normalized(per_color[q.color])
    a = _eval(q.left, models, per_color)
    b = _eval(q.right, models, per_color)
    if type(q) is Or:
        return a if a >= b else b
    return a if a <= b else b


def query_utility(model: UtilityModel, features: FrameFeatures) -> float:
    if features.grid is not model.grid and features.grid != model.grid:
        raise ConfigError(f"feature grid {features.grid} does not match model grid {model.grid}")
    try:
        return _eval(model.query, model.models, features.per_color)
    except KeyError as exc:
        raise ConfigError(f"features carry no color {exc.args[0]!r}") from None


def train_utility_model(
    frames: Iterable[tuple[FrameFeatures, Mapping[str, int]]],
    colors: Mapping[str, HueRange],
    query: QueryExpr,
    grid: BinGrid,
) -> UtilityModel:
    """Train one ColorModel per query color from per-color labels."""
    frames = list(frames)
    models = {}
    for name in sorted(query.colors()):
        if name not in colors:
            raise ConfigError(f"query color {name!r} missing from colors config")
        data = [LabeledFrame(f, int(labels.get(name, 0))) for f, labels in frames]
        models[name] = train_color_model(data, name, colors[name], grid)
    return UtilityModel(models, query)
