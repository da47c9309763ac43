"""Control loop: latency monitoring, target drop rate, dynamic queue sizing."""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import asdict, dataclass, fields
from typing import Optional

from .errors import ConfigError, NotMeasuredError
from .threshold import (
    SHED_NONE,
    Threshold,
    UtilityHistory,
    build_cdf,
    threshold_for_drop_rate,
)


@dataclass
class LatencyEstimates:
    proc_q_ms: float = 0.0
    net_cam_ls_ms: float = 0.0
    net_ls_q_ms: float = 0.0
    proc_cam_ms: float = 0.0
    fps_in: float = 0.0

    @property
    def fixed_ms(self) -> float:
        return self.net_cam_ls_ms + self.net_ls_q_ms + self.proc_cam_ms


@dataclass(frozen=True)
class ControlConfig:
    latency_bound_ms: float = 1000.0
    update_period_ms: float = 1000.0
    proc_q_estimator: str = "ewma"
    ewma_alpha: float = 0.2
    # False: proc_q tracks operator execution time only
    include_queueing: bool = False
    history_window: int = 2000
    initial_capacity: int = 64

    def __post_init__(self):
        if self.latency_bound_ms <= 0:
            raise ConfigError("latency bound must be positive")
        if self.update_period_ms <= 0:
            raise ConfigError("update period must be positive")
        if self.proc_q_estimator not in ("ewma", "mean"):
            raise ConfigError(f"unknown estimator {self.proc_q_estimator!r}")
        if not 0.0 < self.ewma_alpha <= 1.0:
            raise ConfigError("ewma_alpha must be in (0, 1]")
        if self.history_window < 1 or self.initial_capacity < 1:
            raise ConfigError("history_window and initial_capacity must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ControlConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown control settings: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def supported_throughput(est: LatencyEstimates) -> float:
    """Frames per second the backend sustains at the current latency."""
    if est.proc_q_ms <= 0:
        raise NotMeasuredError("processing latency not measured yet")
    return 1000.0 / est.proc_q_ms


def target_drop_rate(st: float, fps_in: float) -> float:
    if fps_in <= 0:
        return 0.0
    return max(0.0, 1.0 - st / fps_in)


def queue_capacity(est: LatencyEstimates, cfg: ControlConfig) -> int:
    """Largest queue whose last frame still meets the latency bound (at least 1)."""
    if est.proc_q_ms <= 0:
        raise NotMeasuredError("processing latency not measured yet")
    slack = cfg.latency_bound_ms - est.fixed_ms
    if slack < est.proc_q_ms:
        return 1
    n = int(math.floor(slack / est.proc_q_ms))
    while n * est.proc_q_ms > slack:
        n -= 1
    while (n + 1) * est.proc_q_ms <= slack:
        n += 1
    return max(1, n)


@dataclass(frozen=True)
class ControlRecord:
    t_ms: float
    proc_q_ms: float
    fps_in: float
    st: float
    r: float
    u_th: Threshold
    capacity: int

    COLUMNS = ("t_ms", "proc_q_ms", "fps_in", "st", "r", "u_th", "capacity")

    def row(self) -> list[str]:
        return [
            repr(self.t_ms), repr(self.proc_q_ms), repr(self.fps_in), repr(self.st),
            repr(self.r), "" if self.u_th is None else repr(self.u_th), str(self.capacity),
        ]


class ControlLoop:
    """Periodic controller feeding threshold and capacity to a shedder.

    Ingress utilities extend the CDF history; completion samples drive the
    processing-latency estimate. ``tick`` is a no-op until the first
    completion has been observed.
    """

    def __init__(
        self,
        cfg: ControlConfig,
        net_cam_ls_ms: float = 0.0,
        net_ls_q_ms: float = 0.0,
        proc_cam_ms: float = 0.0,
        history: Optional[UtilityHistory] = None,
    ):
        fixed = net_cam_ls_ms + net_ls_q_ms + proc_cam_ms
        if cfg.latency_bound_ms <= fixed:
            raise ConfigError(
                f"latency bound {cfg.latency_bound_ms} ms leaves no room after fixed costs {fixed} ms"
            )
        self.cfg = cfg
        self.est = LatencyEstimates(0.0, net_cam_ls_ms, net_ls_q_ms, proc_cam_ms, 0.0)
        self.history = history if history is not None else UtilityHistory(cfg.history_window)
        self.threshold: Threshold = SHED_NONE
        self.capacity = cfg.initial_capacity
        self.log: list[ControlRecord] = []
        self._ewma: Optional[float] = None
        self._window: list[float] = []
        self._recent: deque = deque()  # (ts, sample) within the last update period
        self._ingress = 0
        self._last_tick = 0.0
        self._seen_completion = False

    def observe_ingress(self, ts_ms: float, utility: Optional[float] = None) -> None:
        self._ingress += 1
        if utility is not None:
            self.history.push(utility)

    def observe_completion(self, ts_ms: float, exec_ms: float, queue_ms: float = 0.0) -> None:
        x = exec_ms + (queue_ms if self.cfg.include_queueing else 0.0)
        self._seen_completion = True
        self._window.append(x)
        self._recent.append((ts_ms, x))
        while ts_ms - self._recent[0][0] > self.cfg.update_period_ms:
            self._recent.popleft()
        a = self.cfg.ewma_alpha
        self._ewma = x if self._ewma is None else a * x + (1.0 - a) * self._ewma

    @property
    def proc_q_live(self) -> float:
        """Latest per-completion estimate (EWMA), 0 before any sample."""
        return 0.0 if self._ewma is None else self._ewma

    @property
    def proc_q_recent_max(self) -> float:
        """Largest sample seen within one update period of the latest completion."""
        return max((x for _, x in self._recent), default=0.0)

    def tick(self, now_ms: float) -> Optional[ControlRecord]:
        elapsed = now_ms - self._last_tick
        if elapsed <= 0:
            return None
        fps_in = self._ingress * 1000.0 / elapsed
        self._ingress = 0
        self._last_tick = now_ms
        if not self._seen_completion:
            return None
        if self.cfg.proc_q_estimator == "ewma":
            proc_q = self._ewma
        elif self._window:
            proc_q = sum(self._window) / len(self._window)
        else:
            proc_q = self.est.proc_q_ms
        self._window = []
        if proc_q is None or proc_q <= 0:
            return None
        self.est.proc_q_ms = proc_q
        self.est.fps_in = fps_in
        st = supported_throughput(self.est)
        r = target_drop_rate(st, fps_in)
        if r > 0 and len(self.history):
            self.threshold = threshold_for_drop_rate(build_cdf(self.history), r)
        else:
            self.threshold = SHED_NONE
        self.capacity = queue_capacity(self.est, self.cfg)
        rec = ControlRecord(now_ms, proc_q, fps_in, st, r, self.threshold, self.capacity)
        self.log.append(rec)
        return rec

    def write_log(self, path) -> None:
        write_control_log(self.log, path)


def write_control_log(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ControlRecord.COLUMNS)
        for rec in records:
            w.writerow(rec.row())
