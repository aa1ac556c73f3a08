"""Deterministic execution substrate: worker pools, ordered results, fixed-order reductions.

A coordinator hands each worker the tasks of the periods it owns; workers
keep per-period state (such as warm-start bases) between calls and never
talk to each other.  Results always come back in period order and every
reduction is a sequential fold in that order, so outcomes do not depend on
how many workers there are.
"""

from __future__ import annotations

import functools
import multiprocessing as mp
import time
import traceback
from dataclasses import dataclass
from typing import Callable, Optional

POLICIES = ("sync", "async-incumbent")


class WorkerError(RuntimeError):
    """A task failed; ``period`` names the first failing period."""

    def __init__(self, period, message):
        super().__init__(f"period {period}: {message}")
        self.period = period


@dataclass(frozen=True)
class WorkPlan:
    assignment: tuple
    workers: int
    policy: str = "sync"

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("worker count must be >= 1")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if any(not 0 <= w < self.workers for w in self.assignment):
            raise ValueError("assignment names a worker outside the pool")

    @property
    def periods(self) -> int:
        return len(self.assignment)

    def periods_of(self, worker) -> list:
        return [p for p, w in enumerate(self.assignment) if w == worker]

    @staticmethod
    def blocks(n_periods: int, workers: int, policy="sync") -> "WorkPlan":
        """Contiguous blocks of periods per worker (sizes differ by at most one)."""
        workers = max(1, workers)
        used = max(1, min(workers, n_periods))
        base, extra = divmod(n_periods, used)
        assign = []
        for w in range(used):
            assign += [w] * (base + (1 if w < extra else 0))
        return WorkPlan(tuple(assign), workers, policy)

    def split_for_async(self):
        """(solve plan, incumbent plan) sharing the worker budget roughly evenly."""
        if self.workers == 1:
            return WorkPlan.blocks(self.periods, 1), WorkPlan.blocks(self.periods, 1)
        inc = max(1, self.workers // 2)
        return WorkPlan.blocks(self.periods, self.workers - inc), WorkPlan.blocks(self.periods, inc)


def ordered_reduce(values, op: Callable, initial=None):
    """Left fold in the given order; the evaluation order is fixed by construction."""
    values = list(values)
    if initial is None:
        if not values:
            raise ValueError("ordered_reduce of an empty sequence needs an initial value")
        return functools.reduce(op, values)
    return functools.reduce(op, values, initial)


def ordered_sum(values):
    return ordered_reduce(values, lambda a, b: a + b, 0.0)


def _worker_main(conn, factory, periods):
    try:
        handler = factory(periods)
    except Exception:  # report setup failures against the first owned period
        conn.send(("error", periods[0] if periods else -1, traceback.format_exc()))
        conn.close()
        return
    conn.send(("ready", None, None))
    while True:
        msg = conn.recv()
        if msg is None:
            break
        out = []
        failed = None
        for period, task in msg:
            try:
                out.append((period, handler(period, task)))
            except Exception:
                failed = (period, traceback.format_exc())
                break
        if failed is not None:
            conn.send(("error", failed[0], failed[1]))
        else:
            conn.send(("ok", out, None))
    conn.close()


class WorkerPool:
    """Persistent workers, each owning the periods the plan assigns to it.

    ``factory(periods)`` runs once inside each worker and returns a callable
    ``handler(period, task) -> result``.  A single-worker plan runs inline in
    the calling process.
    """

    def __init__(self, plan: WorkPlan, factory: Callable):
        self.plan = plan
        self._pending = None
        self.last_ms = 0.0
        used = sorted(set(plan.assignment))
        if plan.workers == 1 or len(used) <= 1:
            self._inline = factory(list(range(plan.periods)))
            self._procs = []
            return
        self._inline = None
        ctx = mp.get_context("fork")
        self._procs = []
        for w in used:
            parent, child = ctx.Pipe()
            proc = ctx.Process(target=_worker_main, args=(child, factory, plan.periods_of(w)), daemon=True)
            proc.start()
            child.close()
            self._procs.append((w, proc, parent))
        for w, _, conn in self._procs:
            kind, period, tb = conn.recv()
            if kind == "error":
                self.close()
                raise WorkerError(period, f"worker {w} failed to start\n{tb}")

    def submit(self, tasks: dict):
        """Start a round of tasks (period -> task) without waiting."""
        if self._pending is not None:
            raise RuntimeError("previous round not gathered")
        t0 = time.perf_counter()
        if self._inline is not None:
            out, err = {}, None
            for p in sorted(tasks):
                try:
                    out[p] = self._inline(p, tasks[p])
                except Exception:
                    err = (p, traceback.format_exc())
                    break
            self._pending = ("inline", out, err, t0)
            return
        for w, _, conn in self._procs:
            mine = [(p, tasks[p]) for p in self.plan.periods_of(w) if p in tasks]
            conn.send(mine)
        self._pending = ("procs", None, None, t0)

    def gather(self) -> list:
        """Wait for the submitted round; results ordered by period."""
        if self._pending is None:
            raise RuntimeError("nothing submitted")
        mode, out, err, t0 = self._pending
        self._pending = None
        if mode == "procs":
            out, errors = {}, []
            for _, _, conn in self._procs:
                kind, payload, tb = conn.recv()
                if kind == "error":
                    errors.append((payload, tb))
                else:
                    out.update(dict(payload))
            err = min(errors, key=lambda e: e[0]) if errors else None
        self.last_ms = 1000.0 * (time.perf_counter() - t0)
        if err is not None:
            raise WorkerError(err[0], err[1].strip().splitlines()[-1] + "\n" + err[1])
        return [out[p] for p in sorted(out)]

    def run(self, tasks: dict) -> list:
        self.submit(tasks)
        return self.gather()

    @property
    def busy(self) -> bool:
        return self._pending is not None

    def close(self):
        for _, proc, conn in self._procs:
            try:
                conn.send(None)
            except (BrokenPipeError, OSError):
                pass
        for _, proc, conn in self._procs:
            proc.join(timeout=5)
            if proc.is_alive():
                proc.terminate()
            conn.close()
        self._procs = []

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class _Stateless:
    def __init__(self, fn):
        self.fn = fn

    def __call__(self, periods):
        return lambda period, task: self.fn(task)


def parallel_map(plan: WorkPlan, tasks, fn: Optional[Callable] = None) -> list:
    """Run one task per period and return results in period order.

    ``tasks[p]`` is either a zero-argument callable or, when ``fn`` is
    given, the argument passed to ``fn``.  A failure raises WorkerError
    naming the lowest failing period; other results are discarded.
    """
    tasks = list(tasks)
    if not tasks:
        return []
    if len(tasks) != plan.periods:
        raise ValueError(f"plan covers {plan.periods} periods, got {len(tasks)} tasks")
    call = fn if fn is not None else (lambda t: t())
    with WorkerPool(plan, _Stateless(call)) as pool:
        return pool.run(dict(enumerate(tasks)))
