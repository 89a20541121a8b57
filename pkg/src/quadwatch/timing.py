"""Monotonic per-stage timers for benchmark reports."""

from __future__ import annotations

import time
from collections import defaultdict
from contextlib import contextmanager

import numpy as np


class StageTimer:
    """Accumulates wall-clock samples (milliseconds) per named stage and frame."""

    def __init__(self):
        self._current: dict[str, float] = defaultdict(float)
        self.samples: dict[str, list[float]] = defaultdict(list)

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self._current[name] += (time.perf_counter() - t0) * 1e3

    def end_frame(self, stages=()):
        for name in set(stages) | set(self._current):
            self.samples[name].append(self._current.get(name, 0.0))
        self._current.clear()

    def summary(self) -> dict[str, tuple[float, float]]:
        return {k: (float(np.mean(v)), float(np.std(v))) for k, v in self.samples.items()}


@contextmanager
def _noop():
    yield


class NullTimer:
    def stage(self, name: str):
        return _noop()

    def end_frame(self, stages=()):
        pass
