"""Instrumentation counters: the test surface for zero-copy and deferral claims."""

from __future__ import annotations

import threading

# Scalar counters, in the order they appear in dump() output.
_SCALAR_KEYS = (
    "cells_copied",
    "cross_block_moves",
    "s_invocations",
    "scan_cell_visits",
    "partitions_evaluated",
    "cache_hits",
    "cache_misses",
    "label_index_builds",
)


class EngineStats:
    """Monotone counters; resettable between tests; safe across threads."""

    def __init__(self):
        self._lock = threading.Lock()
        self.reset()

    def reset(self) -> None:
        with getattr(self, "_lock", threading.Lock()):
            for key in _SCALAR_KEYS:
                setattr(self, key, 0)
            # one entry per operator kind that has executed a kernel
            self.kernel_executions: dict[str, int] = {}

    def bump(self, key: str, by: int = 1) -> None:
        with self._lock:
            setattr(self, key, getattr(self, key) + by)

    def bump_kernel(self, op: str, by: int = 1) -> None:
        with self._lock:
            self.kernel_executions[op] = self.kernel_executions.get(op, 0) + by

    def kernel_count(self, op: str) -> int:
        return self.kernel_executions.get(op, 0)

    def snapshot(self) -> dict:
        with self._lock:
            snap = {key: getattr(self, key) for key in _SCALAR_KEYS}
            snap["kernel_executions"] = dict(self.kernel_executions)
        return snap

    def dump(self) -> str:
        """Flat key=value text block; key set is golden-tested."""
        snap = self.snapshot()
        lines = [f"{key}={snap[key]}" for key in _SCALAR_KEYS]
        for op in sorted(snap["kernel_executions"]):
            lines.append(f"kernel_executions.{op}={snap['kernel_executions'][op]}")
        return "\n".join(lines)


# Module-level default registry. The model's S-invocation counter and the
# engine's execution counters share it unless a caller passes its own.
GLOBAL_STATS = EngineStats()
