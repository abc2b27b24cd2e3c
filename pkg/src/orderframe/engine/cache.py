"""Digest-keyed cache of materialized subplan results.

Every computed plan node may deposit its grid here under the plan digest.
A later statement containing the same subplan (same digest, same input
frames) reuses the grid instead of re-running the kernel; the hit and miss
counters make that visible. Eviction drops the entries with the least
benefit per byte first, where benefit is observed compute time weighted by
how often the entry has actually been reused.
"""

from __future__ import annotations

import threading
from typing import Optional

from ..stats import EngineStats

DEFAULT_BUDGET = 64 * 1024 * 1024


def _frame_cost(frame) -> int:
    # coarse: 16 bytes per cell plus fixed overhead; only relative size matters
    return frame.m * frame.n * 16 + 64


class CacheEntry:
    __slots__ = ("digest", "frame", "size", "compute_time", "hits")

    def __init__(self, digest: str, frame, size: int, compute_time: float):
        self.digest = digest
        self.frame = frame
        self.size = size
        self.compute_time = compute_time
        self.hits = 0

    def density(self) -> float:
        """Estimated seconds saved per byte held."""
        return self.compute_time * (self.hits + 1) / max(self.size, 1)


class MaterializationCache:
    """Bounded digest -> grid store. A zero budget disables it entirely;
    lookups then always miss and results are unaffected, only slower."""

    def __init__(self, budget: int = DEFAULT_BUDGET):
        self.budget = int(budget)
        self._entries: dict[str, CacheEntry] = {}
        self._held = 0
        self._lock = threading.Lock()

    def lookup(self, digest: str, stats: EngineStats):
        with self._lock:
            entry = self._entries.get(digest)
            if entry is None:
                stats.bump("cache_misses")
                return None
            entry.hits += 1
            stats.bump("cache_hits")
            return entry.frame

    def store(self, digest: str, frame, compute_time: float) -> bool:
        size = _frame_cost(frame)
        with self._lock:
            if size > self.budget:
                return False
            if digest in self._entries:
                return True  # first materialization wins; results are equal
            while self._held + size > self.budget:
                victim = min(self._entries.values(), key=CacheEntry.density)
                del self._entries[victim.digest]
                self._held -= victim.size
            self._entries[digest] = CacheEntry(digest, frame, size, compute_time)
            self._held += size
            return True

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def held_bytes(self) -> int:
        with self._lock:
            return self._held

    def clear(self) -> None:
        with self._lock:
            self._entries.clear()
            self._held = 0
