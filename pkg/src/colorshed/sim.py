"""Discrete-event simulation of cameras -> load shedder -> backend query.

The clock is virtual (milliseconds). Cameras emit frame records at their
generation timestamps; each frame reaches the shedder after camera
processing and the camera->shedder network hop, and dispatched frames reach
the backend after the shedder->backend hop. The backend is a chain of
single-server FIFO operators; a frame leaves the chain at the first operator
whose pass rule rejects it, which frees one token at the shedder.
"""

from __future__ import annotations

import heapq
import json
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .control import ControlConfig, ControlLoop, ControlRecord
from .dataset import FrameRecord
from .errors import ConfigError, InputError
from .features import extract_features
from .shedder import FINAL_DECISIONS, LoadShedder, ShedDecision
from .threshold import UtilityHistory
from .utility import UtilityModel

PASS_RULES = {
    "all": lambda rec: True,
    "blob": lambda rec: rec.passes_blob_filter,
    "color": lambda rec: rec.passes_color_filter,
}

BASELINES = ("utility", "random", "none")

# same-timestamp ordering: backend before control before ingress
_OP_DONE, _BACKEND_ARRIVE, _TICK, _LS_ARRIVE = range(4)


@dataclass(frozen=True)
class OperatorProfile:
    name: str
    exec_ms: float
    pass_rule: str = "all"
    jitter: Optional[str] = None  # None | "uniform" | "normal"
    spread_ms: float = 0.0

    def __post_init__(self):
        if self.exec_ms < 0 or self.spread_ms < 0:
            raise ConfigError(f"operator {self.name}: negative latency")
        if self.pass_rule not in PASS_RULES:
            raise ConfigError(f"operator {self.name}: unknown pass rule {self.pass_rule!r}")
        if self.jitter not in (None, "uniform", "normal"):
            raise ConfigError(f"operator {self.name}: unknown jitter {self.jitter!r}")

    def draw(self, rng) -> float:
        if self.jitter is None or self.spread_ms == 0:
            return self.exec_ms
        if self.jitter == "uniform":
            x = rng.uniform(self.exec_ms - self.spread_ms, self.exec_ms + self.spread_ms)
        else:
            x = rng.normal(self.exec_ms, self.spread_ms)
        return max(0.0, float(x))


def default_operators(dnn_ms: float = 300.0) -> tuple[OperatorProfile, ...]:
    return (
        OperatorProfile("blob_filter", 2.0, "blob"),
        OperatorProfile("color_filter", 3.0, "color"),
        OperatorProfile("dnn", dnn_ms, "all"),
        OperatorProfile("sink", 1.0, "all"),
    )


@dataclass(frozen=True)
class SimConfig:
    operators: tuple[OperatorProfile, ...] = field(default_factory=default_operators)
    fps: float = 10.0
    net_cam_ls_ms: float = 20.0
    net_ls_q_ms: float = 10.0
    proc_cam_ms: float = 35.0
    control: ControlConfig = field(default_factory=ControlConfig)
    seed: int = 0
    duration_ms: Optional[float] = None
    max_tokens: int = 1
    baseline: str = "utility"
    random_rate: Optional[float] = None
    bucket_ms: float = 5000.0
    # drop queued frames at dispatch when they can no longer meet the bound
    deadline_aware: bool = True

    def __post_init__(self):
        if not self.operators:
            raise ConfigError("operator chain is empty")
        if self.baseline not in BASELINES:
            raise ConfigError(f"baseline must be one of {BASELINES}")
        if self.random_rate is not None and not 0.0 <= self.random_rate <= 1.0:
            raise ConfigError("random rate outside [0, 1]")
        if min(self.net_cam_ls_ms, self.net_ls_q_ms, self.proc_cam_ms) < 0:
            raise ConfigError("negative fixed latency")
        if self.max_tokens < 1 or self.fps <= 0 or self.bucket_ms <= 0:
            raise ConfigError("max_tokens, fps and bucket_ms must be positive")

    @property
    def latency_bound_ms(self) -> float:
        return self.control.latency_bound_ms

    def to_dict(self) -> dict:
        d = asdict(self)
        d["operators"] = [asdict(op) for op in self.operators]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        if "operators" in d:
            d["operators"] = tuple(OperatorProfile(**op) for op in d["operators"])
        if "control" in d:
            d["control"] = ControlConfig.from_dict(d["control"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad simulation config: {exc}") from exc


@dataclass
class FrameOutcome:
    frame_id: int
    camera_id: int
    gen_ts: float
    objects: list
    utility: float
    decision: Optional[ShedDecision] = None
    decision_ts: Optional[float] = None
    segment: Optional[int] = None
    shedder_arrival: float = 0.0
    dispatch_ts: Optional[float] = None
    stages: int = 0
    queue_ms: float = 0.0
    exec_ms: float = 0.0
    completed_ts: Optional[float] = None
    u_th: Optional[float] = None
    enq_ts: float = field(default=0.0, repr=False)

    @property
    def forwarded(self) -> bool:
        return self.decision is ShedDecision.FORWARDED

    @property
    def e2e_ms(self) -> Optional[float]:
        return None if self.completed_ts is None else self.completed_ts - self.gen_ts

    def decision_json(self) -> dict:
        """Decision-log entry for this frame."""
        return {
            "frame_id": self.frame_id,
            "camera_id": self.camera_id,
            "utility": self.utility,
            "decision": self.decision.value,
            "u_th_at_decision": self.u_th,
            "ts": self.decision_ts,
            "e2e_ms": self.e2e_ms,
        }

    def to_json(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "camera_id": self.camera_id,
            "gen_ts": self.gen_ts,
            "segment": self.segment,
            "objects": [oid for oid, _ in self.objects],
            "utility": self.utility,
            "decision": None if self.decision is None else self.decision.value,
            "decision_ts": self.decision_ts,
            "stages": self.stages,
            "shedder_wait_ms": None if self.dispatch_ts is None else self.dispatch_ts - self.shedder_arrival,
            "backend_queue_ms": self.queue_ms,
            "backend_exec_ms": self.exec_ms,
            "e2e_ms": self.e2e_ms,
        }


# -- QoR ---------------------------------------------------------------------


def _object_counts(trace: Iterable[FrameOutcome], colors=None):
    seen: dict[str, int] = {}
    kept: dict[str, int] = {}
    for fo in trace:
        for oid, color in fo.objects:
            if colors is not None and color not in colors:
                continue
            seen[oid] = seen.get(oid, 0) + 1
            if fo.forwarded:
                kept[oid] = kept.get(oid, 0) + 1
    return seen, kept


def per_object_qor(trace: Sequence[FrameOutcome], object_id: str) -> float:
    seen, kept = _object_counts(trace)
    if object_id not in seen:
        raise InputError(f"object {object_id!r} not in trace")
    return kept.get(object_id, 0) / seen[object_id]


def object_qors(trace: Sequence[FrameOutcome], colors=None) -> dict[str, float]:
    seen, kept = _object_counts(trace, colors)
    return {oid: kept.get(oid, 0) / n for oid, n in sorted(seen.items())}


def overall_qor(trace: Sequence[FrameOutcome], colors=None) -> Optional[float]:
    """Mean per-object QoR; None when the trace holds no target objects."""
    q = object_qors(trace, colors)
    if not q:
        return None
    return sum(q.values()) / len(q)


# -- streams -----------------------------------------------------------------


def interleave_cameras(
    datasets: Sequence[Sequence[FrameRecord]], offsets_ms: Optional[Sequence[float]] = None
) -> list[FrameRecord]:
    """Merge per-camera streams by generation time, ties by camera id.

    ``offsets_ms[k]`` shifts stream ``k`` (records are copied, not mutated).
    """
    streams = []
    for k, ds in enumerate(datasets):
        ts = [r.ts_ms for r in ds]
        if any(b < a for a, b in zip(ts, ts[1:])):
            raise InputError(f"stream {k} is not ordered by timestamp")
        off = 0.0 if offsets_ms is None else float(offsets_ms[k])
        if off:
            ds = [_shifted(r, off) for r in ds]
        streams.append(ds)
    return list(heapq.merge(*streams, key=lambda r: (r.ts_ms, r.camera_id)))


def _shifted(rec: FrameRecord, off: float) -> FrameRecord:
    return FrameRecord(rec.frame_id, rec.camera_id, rec.ts_ms + off, rec.hist, rec.objects,
                       rec.passes_blob_filter, rec.passes_color_filter, rec.segment)


# -- simulation --------------------------------------------------------------


class _RandomAdmission(LoadShedder):
    """Content-agnostic shedder: drops each frame with probability ``rate``."""

    def __init__(self, rng, rate: float, **kw):
        super().__init__(**kw)
        self.rng = rng
        self.rate = rate

    def _admit_shed(self, frame) -> bool:
        return self.rng.random() < self.rate


@dataclass
class RunReport:
    trace: list[FrameOutcome]
    config: dict
    query_colors: list[str]
    control_log: list[ControlRecord]
    per_object_qor: dict[str, float]
    overall_qor: Optional[float]
    violations: int
    observed_drop_rate: float
    decision_counts: dict[str, int]
    timeseries: list[dict]
    segments: dict[str, dict]
    max_backend_queue: int
    max_shedder_queue: int
    rejected: int = 0

    def summary(self) -> dict:
        return {
            "config": self.config,
            "query_colors": self.query_colors,
            "frames": len(self.trace),
            "overall_qor": self.overall_qor,
            "overall_qor_note": None if self.overall_qor is not None else "no target objects in trace",
            "violations": self.violations,
            "observed_drop_rate": self.observed_drop_rate,
            "decision_counts": self.decision_counts,
            "segments": self.segments,
            "per_object_qor": self.per_object_qor,
            "max_backend_queue": self.max_backend_queue,
            "max_shedder_queue": self.max_shedder_queue,
            "rejected": self.rejected,
            "control_ticks": len(self.control_log),
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), sort_keys=True, indent=1) + "\n"


class _Backend:
    def __init__(self, ops, rngs):
        self.ops = ops
        self.rngs = rngs
        self.busy = [False] * len(ops)
        self.waiting = [deque() for _ in ops]
        self.max_queue = 0

    def in_queue(self) -> int:
        return sum(len(w) for w in self.waiting)


def run_simulation(
    cfg: SimConfig,
    model: UtilityModel,
    records: Iterable[FrameRecord],
    history: Optional[UtilityHistory] = None,
) -> RunReport:
    """Run one deterministic simulation over time-ordered frame records."""
    records = list(records)
    for quant in {rec.hist.quant for rec in records}:
        if model.grid.sat_bin_size % quant[1] or model.grid.val_bin_size % quant[2]:
            raise ConfigError(
                f"dataset quantization {quant} incompatible with model grid {model.grid}"
            )
    if any(b.ts_ms < a.ts_ms for a, b in zip(records, records[1:])):
        raise InputError("frame records are not ordered by generation time")
    if cfg.duration_ms is not None:
        records = [r for r in records if r.ts_ms < cfg.duration_ms]

    seeds = np.random.SeedSequence(cfg.seed).spawn(len(cfg.operators) + 1)
    op_rngs = [np.random.default_rng(s) for s in seeds[:-1]]
    shed_rng = np.random.default_rng(seeds[-1])
    colors = model.colors
    query_colors = sorted(model.query.colors())
    LB = cfg.latency_bound_ms

    control = ControlLoop(cfg.control, cfg.net_cam_ls_ms, cfg.net_ls_q_ms, cfg.proc_cam_ms,
                          history if history is not None else UtilityHistory(cfg.control.history_window))
    backend = _Backend(cfg.operators, op_rngs)

    heap: list = []
    seq = 0

    def push(t, kind, data):
        nonlocal seq
        heapq.heappush(heap, (t, kind, seq, data))
        seq += 1

    def send(frame, now):
        fo = frame.payload[1]
        fo.dispatch_ts = now
        push(now + cfg.net_ls_q_ms, _BACKEND_ARRIVE, (0, frame.payload))

    shedding = cfg.baseline != "none"
    capacity = cfg.control.initial_capacity if shedding else max(1, len(records))
    if cfg.baseline == "random":
        rate = cfg.random_rate if cfg.random_rate is not None else 0.0
        shedder: LoadShedder = _RandomAdmission(shed_rng, rate, capacity=capacity,
                                                max_tokens=cfg.max_tokens, send=send, keep_log=False)
    else:
        shedder = LoadShedder(capacity=capacity, max_tokens=cfg.max_tokens, send=send, keep_log=False)

    def on_decision(frame, decision, now):
        fo = frame.payload[1]
        fo.decision = decision
        fo.decision_ts = now
        fo.u_th = shedder.threshold

    shedder.on_decision = on_decision

    trace: list[FrameOutcome] = []
    for rec in records:
        feats = extract_features(rec.hist, colors, model.grid)
        u = model.score(feats)
        fo = FrameOutcome(rec.frame_id, rec.camera_id, rec.ts_ms, rec.objects, u, segment=rec.segment)
        trace.append(fo)
        push(rec.ts_ms + cfg.proc_cam_ms + cfg.net_cam_ls_ms, _LS_ARRIVE, (rec, fo))

    period = cfg.control.update_period_ms
    if records:
        push(period, _TICK, None)
    max_shed_q = 0

    def start(i, item, now):
        rec, fo = item
        backend.busy[i] = True
        dt = cfg.operators[i].draw(backend.rngs[i])
        fo.exec_ms += dt
        push(now + dt, _OP_DONE, (i, item))

    def arrive(i, item, now):
        item[1].stages = i + 1
        item[1].enq_ts = now
        if backend.busy[i]:
            backend.waiting[i].append(item)
            backend.max_queue = max(backend.max_queue, backend.in_queue())
        else:
            start(i, item, now)

    control_records: list[ControlRecord] = []
    while heap:
        t, kind, _, data = heapq.heappop(heap)
        if kind == _LS_ARRIVE:
            rec, fo = data
            fo.shedder_arrival = t
            control.observe_ingress(t, fo.utility)
            queue_u = fo.utility if cfg.baseline != "random" else 0.0
            shedder.on_frame(rec.frame_id, rec.camera_id, t, utility=queue_u,
                             deadline_ts=rec.ts_ms + LB, payload=(rec, fo))
            max_shed_q = max(max_shed_q, len(shedder.queue))
        elif kind == _BACKEND_ARRIVE:
            _, item = data
            arrive(0, item, t)
        elif kind == _OP_DONE:
            i, item = data
            rec, fo = item
            backend.busy[i] = False
            if backend.waiting[i]:
                nxt = backend.waiting[i].popleft()
                nxt[1].queue_ms += t - nxt[1].enq_ts
                start(i, nxt, t)
            op = cfg.operators[i]
            if PASS_RULES[op.pass_rule](rec) and i + 1 < len(cfg.operators):
                arrive(i + 1, item, t)
            else:
                fo.completed_ts = t
                control.observe_completion(t, fo.exec_ms, fo.queue_ms)
                if shedding and cfg.deadline_aware:
                    # the peak guards against a run of cheap frames dragging the
                    # EWMA down while expensive frames are still queued
                    est = max(control.proc_q_live, control.proc_q_recent_max)
                    shedder.dispatch_cost_ms = cfg.net_ls_q_ms + est
                shedder.on_token_freed(t)
        else:  # control tick
            crec = control.tick(t)
            if crec is not None:
                control_records.append(crec)
                if shedding:
                    if cfg.baseline == "utility":
                        shedder.set_threshold(crec.u_th)
                    elif cfg.random_rate is None:
                        shedder.rate = crec.r
                    shedder.resize_queue(crec.capacity, t)
            if heap:
                push(t + period, _TICK, None)

    for fo in trace:
        if fo.decision is None:
            raise RuntimeError(f"frame {fo.frame_id} ended without a decision")
    return _assemble(cfg, trace, control_records, query_colors, shedder, backend, max_shed_q)


def _assemble(cfg, trace, control_records, query_colors, shedder, backend, max_shed_q):
    LB = cfg.latency_bound_ms
    counts = {d.value: 0 for d in FINAL_DECISIONS}
    for fo in trace:
        counts[fo.decision.value] += 1
    ingress = len(trace)
    shed = ingress - counts[ShedDecision.FORWARDED.value]
    violations = sum(1 for fo in trace if fo.completed_ts is not None and fo.e2e_ms > LB)
    pq = object_qors(trace, set(query_colors))
    oq = sum(pq.values()) / len(pq) if pq else None

    segments: dict[str, dict] = {}
    for fo in trace:
        if fo.segment is None:
            continue
        s = segments.setdefault(str(fo.segment), {"frames": 0, "shed": 0, "violations": 0,
                                                  "start_ms": fo.gen_ts})
        s["frames"] += 1
        s["shed"] += int(not fo.forwarded)
        s["violations"] += int(fo.completed_ts is not None and fo.e2e_ms > LB)
    for s in segments.values():
        s["shed_fraction"] = s["shed"] / s["frames"]

    return RunReport(
        trace=trace,
        config=cfg.to_dict(),
        query_colors=query_colors,
        control_log=control_records,
        per_object_qor=pq,
        overall_qor=oq,
        violations=violations,
        observed_drop_rate=shed / ingress if ingress else 0.0,
        decision_counts=counts,
        timeseries=_timeseries(cfg, trace, control_records),
        segments=segments,
        max_backend_queue=backend.max_queue,
        max_shedder_queue=max_shed_q,
        rejected=shedder.rejected,
    )


TIMESERIES_COLUMNS = (
    "t_start_ms", "ingress", "forwarded", "shed", "completed", "violations",
    "max_e2e_ms", "mean_e2e_ms", "reached_1", "reached_2", "reached_3", "reached_4",
    "threshold", "capacity", "proc_q_ms", "target_drop_rate",
)


def _timeseries(cfg, trace, control_records):
    if not trace:
        return []
    b = cfg.bucket_ms
    n = int(max(fo.gen_ts for fo in trace) // b) + 1
    rows = [
        {"t_start_ms": k * b, "ingress": 0, "forwarded": 0, "shed": 0, "completed": 0,
         "violations": 0, "_e2e": [], "reached": [0] * len(cfg.operators)}
        for k in range(n)
    ]
    for fo in trace:
        row = rows[int(fo.gen_ts // b)]
        row["ingress"] += 1
        if fo.forwarded:
            row["forwarded"] += 1
        else:
            row["shed"] += 1
        for i in range(fo.stages):
            row["reached"][i] += 1
        if fo.completed_ts is not None:
            row["completed"] += 1
            row["_e2e"].append(fo.e2e_ms)
            row["violations"] += int(fo.e2e_ms > cfg.latency_bound_ms)
    ci = 0
    last = None
    out = []
    for row in rows:
        end = row["t_start_ms"] + b
        while ci < len(control_records) and control_records[ci].t_ms < end:
            last = control_records[ci]
            ci += 1
        e2e = row.pop("_e2e")
        reached = row.pop("reached")
        row["max_e2e_ms"] = max(e2e) if e2e else None
        row["mean_e2e_ms"] = sum(e2e) / len(e2e) if e2e else None
        for i in range(4):
            row[f"reached_{i + 1}"] = reached[i] if i < len(reached) else 0
        row["threshold"] = None if last is None else last.u_th
        row["capacity"] = None if last is None else last.capacity
        row["proc_q_ms"] = None if last is None else last.proc_q_ms
        row["target_drop_rate"] = None if last is None else last.r
        out.append(row)
    return out


def check_latency_accounting(fo: FrameOutcome, cfg: SimConfig) -> float:
    """E2E rebuilt from its parts; equals ``fo.e2e_ms`` for completed frames."""
    wait = fo.dispatch_ts - fo.shedder_arrival
    return cfg.proc_cam_ms + cfg.net_cam_ls_ms + wait + cfg.net_ls_q_ms + fo.queue_ms + fo.exec_ms


__all__ = [
    "OperatorProfile",
    "SimConfig",
    "FrameOutcome",
    "RunReport",
    "default_operators",
    "run_simulation",
    "per_object_qor",
    "object_qors",
    "overall_qor",
    "interleave_cameras",
    "check_latency_accounting",
    "TIMESERIES_COLUMNS",
]
