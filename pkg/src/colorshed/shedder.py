"""Load shedder dataplane: threshold admission, utility-ordered bounded queue,
token-gated dispatch to the backend."""

from __future__ import annotations

import bisect
import enum
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .errors import ShedderError
from .threshold import SHED_NONE, Threshold

log = logging.getLogger(__name__)


class ShedDecision(enum.Enum):
    FORWARDED = "forwarded"
    SHED_BY_THRESHOLD = "shed_threshold"
    SHED_BY_QUEUE_EVICTION = "shed_eviction"
    SHED_BY_RESIZE = "shed_resize"
    SHED_BY_DEADLINE = "shed_deadline"
    # non-final outcomes returned by on_frame
    QUEUED = "queued"
    REJECTED = "rejected"

    @property
    def is_shed(self) -> bool:
        return self.value.startswith("shed_")


FINAL_DECISIONS = (
    ShedDecision.FORWARDED,
    ShedDecision.SHED_BY_THRESHOLD,
    ShedDecision.SHED_BY_QUEUE_EVICTION,
    ShedDecision.SHED_BY_RESIZE,
    ShedDecision.SHED_BY_DEADLINE,
)


@dataclass
class QueuedFrame:
    frame_id: Any
    camera_id: Any
    arrival_ts: float
    utility: float
    deadline_ts: float = math.inf
    seq: int = -1
    payload: Any = field(default=None, repr=False)


@dataclass(frozen=True)
class DecisionRecord:
    frame_id: Any
    camera_id: Any
    utility: float
    decision: ShedDecision
    u_th_at_decision: Threshold
    ts: float

    def to_json(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "camera_id": self.camera_id,
            "utility": self.utility,
            "decision": self.decision.value,
            "u_th_at_decision": self.u_th_at_decision,
            "ts": self.ts,
        }


class ShedderQueue:
    """Bounded multiset of frames ordered by ``(utility, arrival seq)``.

    ``pop_min`` takes the lowest utility (oldest among ties), ``pop_max`` the
    highest utility (oldest among ties).
    """

    def __init__(self, capacity: int):
        self.capacity = max(1, int(capacity))
        self._keys: list[tuple[float, int]] = []
        self._frames: dict[int, QueuedFrame] = {}

    def __len__(self):
        return len(self._keys)

    def __bool__(self):
        return bool(self._keys)

    def push(self, frame: QueuedFrame) -> None:
        key = (frame.utility, frame.seq)
        bisect.insort(self._keys, key)
        self._frames[frame.seq] = frame

    def pop_min(self) -> QueuedFrame:
        _, seq = self._keys.pop(0)
        return self._frames.pop(seq)

    def pop_max(self) -> QueuedFrame:
        top = self._keys[-1][0]
        i = bisect.bisect_left(self._keys, (top, -1))
        _, seq = self._keys.pop(i)
        return self._frames.pop(seq)

    def utilities(self) -> list[float]:
        return [u for u, _ in self._keys]

    def frames(self) -> list[QueuedFrame]:
        return [self._frames[s] for _, s in self._keys]


class TokenState:
    def __init__(self, max_tokens: int = 1, tokens: Optional[int] = None):
        if max_tokens < 1:
            raise ShedderError("max_tokens must be >= 1")
        self.max_tokens = max_tokens
        self.tokens = max_tokens if tokens is None else tokens

    def take(self) -> None:
        if self.tokens <= 0:
            raise ShedderError("dispatch without a token")
        self.tokens -= 1

    def release(self) -> None:
        if self.tokens >= self.max_tokens:
            raise ShedderError("token released twice")
        self.tokens += 1


class LoadShedder:
    """Single-owner shedder state machine.

    ``send(frame, now)`` is called for every dispatched frame. ``scorer``
    (anything with ``score(features)``) is used when ``on_frame`` gets
    features instead of a utility.
    """

    def __init__(
        self,
        capacity: int = 64,
        max_tokens: int = 1,
        threshold: Threshold = SHED_NONE,
        send: Optional[Callable[[QueuedFrame, float], None]] = None,
        scorer=None,
        keep_log: bool = True,
    ):
        self.queue = ShedderQueue(capacity)
        self.tokens = TokenState(max_tokens)
        self.threshold = threshold
        self.scorer = scorer
        self.sent: list[QueuedFrame] = []
        self._send = send if send is not None else (lambda f, now: self.sent.append(f))
        self.keep_log = keep_log
        self.log: list[DecisionRecord] = []
        self.counts: Counter = Counter()
        self.ingress = 0
        self.rejected = 0
        self.completions = 0
        self._seq = 0
        # expected time from dispatch to completion; frames that cannot make
        # their deadline are dropped at dispatch (0 = drop only when expired)
        self.dispatch_cost_ms = 0.0
        self.on_decision: Optional[Callable[[QueuedFrame, ShedDecision, float], None]] = None

    @property
    def capacity(self) -> int:
        return self.queue.capacity

    def set_threshold(self, threshold: Threshold) -> None:
        self.threshold = threshold

    def _finalize(self, frame: QueuedFrame, decision: ShedDecision, now: float) -> None:
        self.counts[decision] += 1
        if self.keep_log:
            self.log.append(
                DecisionRecord(frame.frame_id, frame.camera_id, frame.utility,
                               decision, self.threshold, now)
            )
        if self.on_decision is not None:
            self.on_decision(frame, decision, now)

    def _admit_shed(self, frame: QueuedFrame) -> bool:
        return self.threshold is not None and frame.utility <= self.threshold

    def on_frame(
        self,
        frame_id,
        camera_id,
        now: float,
        utility: Optional[float] = None,
        features=None,
        deadline_ts: float = math.inf,
        payload=None,
    ) -> ShedDecision:
        if utility is None:
            try:
                utility = float(self.scorer.score(features))
            except (ValueError, KeyError, TypeError, AttributeError) as exc:
                self.rejected += 1
                log.debug("rejected frame %r: %s", frame_id, exc)
                return ShedDecision.REJECTED
        if not 0.0 <= utility <= 1.0:
            self.rejected += 1
            return ShedDecision.REJECTED
        self.ingress += 1
        frame = QueuedFrame(frame_id, camera_id, now, utility, deadline_ts, self._seq, payload)
        self._seq += 1
        if self._admit_shed(frame):
            self._finalize(frame, ShedDecision.SHED_BY_THRESHOLD, now)
            return ShedDecision.SHED_BY_THRESHOLD
        self.queue.push(frame)
        outcome = ShedDecision.QUEUED
        if len(self.queue) > self.queue.capacity:
            victim = self.queue.pop_min()
            self._finalize(victim, ShedDecision.SHED_BY_QUEUE_EVICTION, now)
            if victim is frame:
                return ShedDecision.SHED_BY_QUEUE_EVICTION
        for sent in self._dispatch(now):
            if sent is frame:
                outcome = ShedDecision.FORWARDED
        if outcome is ShedDecision.QUEUED and frame.seq not in self.queue._frames:
            # dropped at dispatch because its deadline had already passed
            outcome = ShedDecision.SHED_BY_DEADLINE
        return outcome

    def _dispatch(self, now: float) -> list[QueuedFrame]:
        out = []
        while self.tokens.tokens > 0 and self.queue:
            frame = self.queue.pop_max()
            if now + self.dispatch_cost_ms > frame.deadline_ts:
                self._finalize(frame, ShedDecision.SHED_BY_DEADLINE, now)
                continue
            self.tokens.take()
            self._finalize(frame, ShedDecision.FORWARDED, now)
            out.append(frame)
            self._send(frame, now)
        return out

    def on_token_freed(self, now: float) -> list[QueuedFrame]:
        self.tokens.release()
        self.completions += 1
        return self._dispatch(now)

    def resize_queue(self, new_capacity: int, now: float = 0.0) -> list[QueuedFrame]:
        if new_capacity < 1:
            log.warning("queue capacity %s clamped to 1", new_capacity)
            new_capacity = 1
        self.queue.capacity = int(new_capacity)
        evicted = []
        while len(self.queue) > self.queue.capacity:
            frame = self.queue.pop_min()
            self._finalize(frame, ShedDecision.SHED_BY_RESIZE, now)
            evicted.append(frame)
        return evicted

    def in_queue(self) -> int:
        return len(self.queue)

    def conservation_holds(self) -> bool:
        return self.ingress == sum(self.counts[d] for d in FINAL_DECISIONS) + len(self.queue)
