"""Brute-force shedder: plain list, full re-sort on every decision."""

import random


class ReferenceShedder:
    def __init__(self, capacity, max_tokens=1, threshold=None):
        self.capacity = max(1, capacity)
        self.tokens = max_tokens
        self.threshold = threshold
        self.queue = []  # (utility, seq, frame_id)
        self.events = []  # (kind, frame_id)
        self.seq = 0

    def _dispatch(self):
        while self.tokens > 0 and self.queue:
            best = sorted(self.queue, key=lambda f: (-f[0], f[1]))[0]
            self.queue.remove(best)
            self.tokens -= 1
            self.events.append(("forwarded", best[2]))

    def on_frame(self, fid, u):
        if self.threshold is not None and u <= self.threshold:
            self.events.append(("shed_threshold", fid))
            return
        self.queue.append((u, self.seq, fid))
        self.seq += 1
        if len(self.queue) > self.capacity:
            worst = sorted(self.queue, key=lambda f: (f[0], f[1]))[0]
            self.queue.remove(worst)
            self.events.append(("shed_eviction", worst[2]))
        self._dispatch()

    def on_token_freed(self):
        self.tokens += 1
        self._dispatch()

    def resize(self, n):
        self.capacity = max(1, n)
        while len(self.queue) > self.capacity:
            worst = sorted(self.queue, key=lambda f: (f[0], f[1]))[0]
            self.queue.remove(worst)
            self.events.append(("shed_resize", worst[2]))


def random_trace(rng: random.Random, max_events=50):
    """Events: ("frame", u) | ("free",) | ("resize", n) | ("threshold", t)."""
    levels = [k / 10 for k in range(11)]
    out = []
    for _ in range(rng.randint(1, max_events)):
        x = rng.random()
        if x < 0.6:
            out.append(("frame", rng.choice(levels)))
        elif x < 0.85:
            out.append(("free",))
        elif x < 0.95:
            out.append(("resize", rng.randint(0, 6)))
        else:
            out.append(("threshold", rng.choice([None] + levels)))
    return out


def replay(trace, capacity, max_tokens, make_shedder):
    """Run ``trace`` through the real shedder and the reference.

    Token frees are only issued while a frame is outstanding. Returns both
    event logs and the real shedder.
    """
    ref = ReferenceShedder(capacity, max_tokens)
    real_events = []
    real = make_shedder(capacity, max_tokens)
    real.on_decision = lambda f, d, now: real_events.append((d.value, f.frame_id))
    fid = 0
    for ev in trace:
        if ev[0] == "frame":
            ref.on_frame(fid, ev[1])
            real.on_frame(fid, 0, float(fid), utility=ev[1])
            fid += 1
        elif ev[0] == "free":
            if ref.tokens < max_tokens:
                ref.on_token_freed()
                real.on_token_freed(float(fid))
        elif ev[0] == "resize":
            ref.resize(ev[1])
            real.resize_queue(ev[1], float(fid))
        else:
            ref.threshold = ev[1]
            real.set_threshold(ev[1])
    return ref.events, real_events, real
