"""Persistent worker pool executing independent work items with barrier semantics.

The pool is created once and reused for every stage.  Workers sleep on a
condition variable, wake together when a stage starts, run their statically
assigned block of items, and the caller returns only after the last worker
has finished.  Because every item writes a disjoint slice of the output,
results are bit-identical for any worker count.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass

from .errors import StageError

ENV_WORKERS = "IGNET_WORKERS"


@dataclass
class StagePlan:
    """A stage: ``item_count`` independent items, each owning disjoint output."""

    item_count: int
    worker_count: int | None = None  # None: use the pool's worker count


def _block(worker: int, workers: int, n: int) -> tuple[int, int]:
    """Static block partition of ``range(n)`` for one worker."""
    q, r = divmod(n, workers)
    start = worker * q + min(worker, r)
    return start, start + q + (1 if worker < r else 0)


class WorkerPool:
    """A fixed set of persistent worker threads.

    With ``worker_count == 1`` stages run inline on the calling thread, which
    is bit-identical to the threaded path because item assignment never
    changes what an item computes.
    """

    def __init__(self, worker_count: int):
        if worker_count < 1:
            raise ValueError("worker_count must be >= 1")
        self.worker_count = worker_count
        self.stages_run = [0] * worker_count
        self.worker_idents: list[int | None] = [None] * worker_count
        self._stage_lock = threading.Lock()
        self._cond = threading.Condition()
        self._generation = 0
        self._work = None
        self._item_count = 0
        self._done = 0
        self._failures: list[BaseException] = []
        self._closing = False
        self._threads: list[threading.Thread] = []
        if worker_count > 1:
            for w in range(worker_count):
                t = threading.Thread(
                    target=self._worker_main, args=(w,), daemon=True,
                    name=f"ignet-worker-{w}",
                )
                t.start()
                self._threads.append(t)

    def _worker_main(self, worker: int) -> None:
        self.worker_idents[worker] = threading.get_ident()
        seen = 0
        while True:
            with self._cond:
                while self._generation == seen and not self._closing:
                    self._cond.wait()
                if self._closing:
                    return
                seen = self._generation
                work = self._work
                count = self._item_count
            failure = None
            try:
                lo, hi = _block(worker, self.worker_count, count)
                for item in range(lo, hi):
                    work(item)
            except BaseException as exc:  # surfaced after the barrier
                failure = exc
            with self._cond:
                if failure is not None:
                    self._failures.append(failure)
                self.stages_run[worker] += 1
                self._done += 1
                if self._done == self.worker_count:
                    self._cond.notify_all()

    def execute_stage(self, plan: StagePlan, work) -> None:
        """Run ``work(item)`` for every item, returning after all complete.

        Worker failures are collected and re-raised as :class:`StageError`
        once the barrier has been reached.
        """
        n = plan.item_count
        if n == 0:
            return
        with self._stage_lock:  # one stage at a time; callers may overlap
            if self.worker_count == 1:
                self.stages_run[0] += 1
                self.worker_idents[0] = threading.get_ident()
                try:
                    for item in range(n):
                        work(item)
                except BaseException as exc:
                    raise StageError(f"work item failed: {exc!r}") from exc
                return
            with self._cond:
                self._work = work
                self._item_count = n
                self._done = 0
                self._failures = []
                self._generation += 1
                self._cond.notify_all()
                while self._done < self.worker_count:
                    self._cond.wait()
                failures = self._failures
                self._work = None
            if failures:
                raise StageError(
                    f"{len(failures)} worker(s) failed: {failures[0]!r}"
                ) from failures[0]

    def close(self) -> None:
        with self._cond:
            self._closing = True
            self._cond.notify_all()
        for t in self._threads:
            t.join(timeout=5.0)


_pool: WorkerPool | None = None
_pool_lock = threading.Lock()


def resolve_worker_count(requested: int | None = None) -> int:
    """Map a requested count to an effective one (0 or None: probe env/hardware)."""
    if requested is None:
        env = os.environ.get(ENV_WORKERS, "").strip()
        if env:
            requested = int(env)
        else:
            return 1
    if requested == 0:
        return os.cpu_count() or 1
    if requested < 0:
        raise ValueError("worker count must be >= 0")
    return requested


def set_worker_count(count: int) -> WorkerPool:
    """Replace the process-wide pool with one of ``count`` workers (0: hardware)."""
    global _pool
    effective = resolve_worker_count(count)
    with _pool_lock:
        if _pool is not None and _pool.worker_count == effective:
            return _pool
        if _pool is not None:
            _pool.close()
        _pool = WorkerPool(effective)
        return _pool


def get_pool() -> WorkerPool:
    global _pool
    with _pool_lock:
        if _pool is None:
            _pool = WorkerPool(resolve_worker_count())
        return _pool


def execute_stage(plan: StagePlan, work) -> None:
    """Run a stage on the process-wide pool (creating it on first use)."""
    pool = get_pool()
    if plan.worker_count is not None and plan.worker_count != pool.worker_count:
        pool = set_worker_count(plan.worker_count)
    pool.execute_stage(plan, work)


def run_items(item_count: int, work) -> None:
    """Shorthand for :func:`execute_stage` with a plain item count."""
    execute_stage(StagePlan(item_count), work)
