"""Deterministic single-process simulation of asynchronous, partitioned diffusion.

Nodes are split among ``K`` workers.  Each worker owns the fluid and
history of its nodes; fluid pushed to a node owned elsewhere travels as
a :class:`FluidMessage` that arrives after a seeded, bounded delay.
One worker is activated per tick, in a seeded shuffled round-robin.
Everything is driven by ``SimConfig.seed`` so runs replay exactly.
"""

from __future__ import annotations

import hashlib
import heapq
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .core import FixedPointProblem, SparseMatrix
from .engine import (
    DEFAULT_RESYNC,
    DIVERGENCE_FACTOR,
    ErrorBound,
    Schedule,
    Selector,
    SolveReport,
    _Recorder,
    diffusion_cost,
    push,
    schedule_weights,
)

STRATEGIES = ("contiguous", "hash")


@dataclass(frozen=True)
class WorkerBlock:
    """Columns of the nodes owned by one worker, split by target ownership.

    ``local_cols[l]`` holds ``(local target slots, weights)``;
    ``remote_cols[l]`` holds ``(global targets, weights, owning workers)``.
    All entries are plain lists.
    """

    nodes: np.ndarray
    local_cols: List[Tuple[List[int], List[float]]]
    remote_cols: List[Tuple[List[int], List[float], List[int]]]


@dataclass(frozen=True)
class PartitionPlan:
    k: int
    owner: np.ndarray
    slot: np.ndarray
    blocks: List[WorkerBlock]
    n: int

    def reassemble(self) -> SparseMatrix:
        """Rebuild the sparse operator from the split columns."""
        rows, cols, vals = [], [], []
        for block in self.blocks:
            for l, node in enumerate(block.nodes.tolist()):
                lrows, lvals = block.local_cols[l]
                rrows, rvals, _ = block.remote_cols[l]
                rows.extend(block.nodes[lrows].tolist())
                vals.extend(lvals)
                rows.extend(rrows)
                vals.extend(rvals)
                cols.extend([node] * (len(lrows) + len(rrows)))
        return SparseMatrix(self.n, rows, cols, vals)


def partition(prob: FixedPointProblem, k: int, strategy: str = "contiguous") -> PartitionPlan:
    """Assign nodes to ``k`` workers by equal index ranges or by ``i mod k``."""
    n = prob.n
    if not 1 <= k <= n:
        raise ValueError(f"worker count {k} outside [1, {n}]")
    if strategy == "contiguous":
        owner = np.concatenate([np.full(len(chunk), w) for w, chunk in enumerate(np.array_split(np.arange(n), k))])
    elif strategy == "hash":
        owner = np.arange(n) % k
    else:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    owner = owner.astype(np.int64)
    slot = np.zeros(n, dtype=np.int64)
    blocks = []
    m = prob.operator.sparse
    for w in range(k):
        nodes = np.flatnonzero(owner == w)
        slot[nodes] = np.arange(nodes.size)
        local_cols, remote_cols = [], []
        for node in nodes.tolist():
            rows, vals = m.column(node)
            mine = owner[rows] == w
            local_cols.append((slot[rows[mine]].tolist(), vals[mine].tolist()))
            far = rows[~mine]
            remote_cols.append((far.tolist(), vals[~mine].tolist(), owner[far].tolist()))
        blocks.append(WorkerBlock(nodes, local_cols, remote_cols))
    plan = PartitionPlan(k, owner, slot, blocks, n)
    if not plan.reassemble().same_entries(m):
        raise AssertionError("partition does not reproduce the operator")
    return plan


class FluidMessage(NamedTuple):
    dest: int
    amount: float
    worker: int
    step: int


@dataclass(frozen=True)
class SimConfig:
    """Simulation knobs.

    ``delay`` is a constant lag in ticks or an inclusive ``(lo, hi)`` range
    drawn per message.  ``schedule`` is shared by all workers or given per
    worker; random schedules get ``seed + worker`` so workers differ.
    """

    seed: int = 0
    delay: Union[int, Tuple[int, int]] = 0
    batch: int = 1
    schedule: Union[Schedule, Sequence[Schedule]] = Schedule()
    trace_stride: Optional[int] = None
    resync_every: Optional[int] = DEFAULT_RESYNC

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        lo, hi = self.delay_range
        if lo < 0 or hi < lo:
            raise ValueError(f"bad delay range {self.delay!r}")

    @property
    def delay_range(self) -> Tuple[int, int]:
        if isinstance(self.delay, (tuple, list)):
            return int(self.delay[0]), int(self.delay[1])
        return int(self.delay), int(self.delay)

    def schedule_for(self, worker: int, k: int) -> Schedule:
        if isinstance(self.schedule, Schedule):
            s = self.schedule
        else:
            if len(self.schedule) != k:
                raise ValueError(f"need {k} schedules, got {len(self.schedule)}")
            s = self.schedule[worker]
        if s.kind == "random":
            return Schedule("random", s.seed + worker)
        return s


@dataclass
class WorkerStats:
    worker: int
    nodes: int
    diffusions: int = 0
    link_cost: int = 0
    activations: int = 0
    idle_activations: int = 0
    messages_sent: int = 0
    messages_received: int = 0


@dataclass
class SimStats:
    ticks: int
    workers: List[WorkerStats]
    quiescent_checks: int = 0
    digest: str = ""


class _Worker:
    def __init__(self, wid: int, block: WorkerBlock, prob: FixedPointProblem, schedule: Schedule,
                 weights: Optional[np.ndarray], norm_weights: Optional[np.ndarray]):
        self.wid = wid
        self.block = block
        self.nodes = block.nodes
        self.node_list = block.nodes.tolist()
        self.F = np.array(prob.f0[block.nodes], dtype=np.float64)
        self.H = np.zeros(block.nodes.size)
        self.r = float(np.abs(self.F).sum())
        self.selector = Selector(schedule, block.nodes.size, None if weights is None else weights[block.nodes])
        self.norm_weights = None if norm_weights is None else norm_weights[block.nodes]
        self.inbox: Deque[FluidMessage] = deque()
        self.stats = WorkerStats(wid, int(block.nodes.size))

    def weighted(self) -> float:
        if self.norm_weights is None:
            return float(np.abs(self.F).sum())
        return float((self.norm_weights * np.abs(self.F)).sum())

    def resync(self) -> None:
        self.r = float(np.abs(self.F).sum())


class AsyncSimulation:
    """Step-able simulator; :func:`simulate` drives it to completion."""

    def __init__(self, prob: FixedPointProblem, plan: PartitionPlan, cfg: SimConfig = SimConfig(),
                 tol: Optional[float] = 1e-10, max_ticks: Optional[int] = None, *, reference=None,
                 divergence_factor: float = DIVERGENCE_FACTOR, keep_events: bool = False):
        if plan.n != prob.n:
            raise ValueError("plan and problem sizes differ")
        if tol is None and max_ticks is None:
            raise ValueError("need a tolerance or a tick budget")
        self.prob = prob
        self.plan = plan
        self.cfg = cfg
        self.tol = tol
        self.max_ticks = max_ticks
        self.bound = ErrorBound(prob)
        if not self.bound.available and max_ticks is None:
            raise ValueError(f"contraction factor is {self.bound.rho!r} >= 1: no error bound, pass max_ticks")
        self.op = prob.operator
        act_seq, delay_seq = np.random.SeedSequence(cfg.seed).spawn(2)
        self.act_rng = np.random.default_rng(act_seq)
        self.delay_rng = np.random.default_rng(delay_seq)
        self.delay_lo, self.delay_hi = cfg.delay_range
        self.lags: Deque[int] = deque()
        self.workers: List[_Worker] = []
        for w, block in enumerate(plan.blocks):
            sched = cfg.schedule_for(w, plan.k)
            self.workers.append(_Worker(w, block, prob, sched, schedule_weights(sched, prob), prob.norm_weights))
        self.idle_level = None if tol is None else tol / (2.0 * plan.k)
        self.tick = 0
        self.step = 0
        self.link_cost = 0
        self.order: Deque[int] = deque()
        self.heap: List[Tuple[int, int, FluidMessage]] = []
        self.seq = 0
        self.pending = 0
        self.inflight_mass = 0.0
        self.pair_due: Dict[Tuple[int, int], int] = {}
        self.rec = _Recorder(prob, cfg.trace_stride or prob.n, self.bound, reference)
        self.initial_r = self.total_residual()
        self.divergence_factor = divergence_factor
        self.converged = False
        self.diverged = False
        self.done = False
        self.message = ""
        self.quiescent_checks = 0
        self.hasher = hashlib.blake2b(digest_size=16)
        self.events: Optional[List[Tuple[int, int, int]]] = [] if keep_events else None
        self.rec.record(0, 0, self.initial_r, self.global_history(), self.total_weighted, force=True)
        self._check_termination()

    # -- global views ------------------------------------------------------

    def total_residual(self) -> float:
        return sum(w.r for w in self.workers) + self.inflight_mass

    def total_weighted(self) -> float:
        total = sum(w.weighted() for w in self.workers)
        if self.pending:
            weights = self.prob.norm_weights
            for msg in self._pending_messages():
                total += abs(msg.amount) * (1.0 if weights is None else weights[msg.dest])
        return total

    def _pending_messages(self):
        for _, _, msg in self.heap:
            yield msg
        for w in self.workers:
            yield from w.inbox

    def global_history(self) -> np.ndarray:
        H = np.zeros(self.prob.n)
        for w in self.workers:
            H[w.nodes] = w.H
        return H

    def global_fluid(self) -> np.ndarray:
        F = np.zeros(self.prob.n)
        for w in self.workers:
            F[w.nodes] = w.F
        return F

    def inflight_vector(self) -> np.ndarray:
        v = np.zeros(self.prob.n)
        for msg in self._pending_messages():
            v[msg.dest] += msg.amount
        return v

    @property
    def quiescent(self) -> bool:
        return self.pending == 0

    # -- mechanics ---------------------------------------------------------

    def _lag(self) -> int:
        if self.delay_lo == self.delay_hi:
            return self.delay_lo
        if not self.lags:
            self.lags.extend(self.delay_rng.integers(self.delay_lo, self.delay_hi + 1, size=4096).tolist())
        return self.lags.popleft()

    def _emit(self, src: _Worker, dest: int, dest_worker: int, amount: float) -> None:
        lag = self._lag()
        key = (src.wid, dest_worker)
        due = max(self.tick + lag, self.pair_due.get(key, 0))
        self.pair_due[key] = due
        msg = FluidMessage(dest, amount, src.wid, self.step)
        heapq.heappush(self.heap, (due, self.seq, msg))
        self.seq += 1
        self.pending += 1
        self.inflight_mass += abs(amount)
        src.stats.messages_sent += 1

    def _emit_many(self, src: _Worker, dests, vals, dest_workers, sent: float) -> None:
        # inlined _emit for the hot path; must stay equivalent to it
        fixed = self.delay_lo == self.delay_hi
        lag0 = self.delay_lo
        tick = self.tick
        step = self.step
        wid = src.wid
        heap = self.heap
        pair_due = self.pair_due
        seq = self.seq
        count = 0
        mass = 0.0
        for dest, v, dw in zip(dests, vals, dest_workers):
            amount = v * sent
            if amount == 0.0:
                continue
            due = tick + (lag0 if fixed else self._lag())
            key = (wid, dw)
            prev = pair_due.get(key, 0)
            if prev > due:
                due = prev
            pair_due[key] = due
            heapq.heappush(heap, (due, seq, FluidMessage(dest, amount, wid, step)))
            seq += 1
            count += 1
            mass += abs(amount)
        self.seq = seq
        self.pending += count
        self.inflight_mass += mass
        src.stats.messages_sent += count

    def _deliver(self) -> None:
        owner = self.plan.owner
        while self.heap and self.heap[0][0] <= self.tick:
            _, _, msg = heapq.heappop(self.heap)
            self.workers[owner[msg.dest]].inbox.append(msg)

    def _drain(self, w: _Worker) -> None:
        if not w.inbox:
            return
        slot = self.plan.slot
        F = w.F
        inbox = w.inbox
        count = len(inbox)
        r = w.r
        mass = 0.0
        for msg in inbox:
            l = slot[msg.dest]
            old = F[l]
            new = old + msg.amount
            F[l] = new
            r += abs(new) - abs(old)
            mass += abs(msg.amount)
        inbox.clear()
        w.r = r
        self.pending -= count
        self.inflight_mass -= mass
        w.stats.messages_received += count
        if self.pending == 0:
            self.inflight_mass = 0.0

    def _diffuse(self, w: _Worker, l: int) -> None:
        node = w.node_list[l]
        op = self.op
        cost = diffusion_cost(op, node)
        self.step += 1
        self.link_cost += cost
        w.stats.diffusions += 1
        w.stats.link_cost += cost
        F = w.F
        sent = float(F[l])
        if sent == 0.0:
            return
        w.H[l] += sent
        F[l] = 0.0
        r = w.r - abs(sent)
        lrows, lvals = w.block.local_cols[l]
        if lrows:
            r += push(F, lrows, lvals, sent)
        rrows, rvals, rowners = w.block.remote_cols[l]
        if rrows:
            self._emit_many(w, rrows, rvals, rowners, sent)
        scale = op.rank_one_weight(node)
        if scale != 0.0:
            u = op.rank_one.u
            F += (scale * sent) * u[w.nodes]
            r = float(np.abs(F).sum())
            owner = self.plan.owner
            for dest in np.flatnonzero(owner != w.wid).tolist():
                amount = (scale * sent) * u[dest]
                if amount != 0.0:
                    self._emit(w, dest, int(owner[dest]), amount)
        w.r = r
        if self.events is not None:
            self.events.append((self.tick, w.wid, node))
        self.hasher.update(struct.pack("<qqq", self.tick, w.wid, node))

    def _is_idle(self, w: _Worker) -> bool:
        if w.r == 0.0:
            return True
        if self.idle_level is None or not self.bound.available:
            return False
        return self.bound.certify(w.r, self.idle_level, w.weighted)

    def _check_termination(self) -> bool:
        if self.pending:
            return False
        self.quiescent_checks += 1
        total = self.total_residual()
        if total == 0.0:
            self.converged = self.done = True
            return True
        if self.tol is not None and self.bound.certify(total, self.tol, self.total_weighted):
            for w in self.workers:
                w.resync()
            if self.bound.certify(self.total_residual(), self.tol, self.total_weighted):
                self.converged = self.done = True
                return True
        return False

    def _next_worker(self) -> int:
        if not self.order:
            self.order.extend(self.act_rng.permutation(self.plan.k).tolist())
        return self.order.popleft()

    def step_tick(self) -> None:
        """Advance one tick: deliver due messages, then activate one worker."""
        if self.done:
            return
        self._deliver()
        w = self.workers[self._next_worker()]
        w.stats.activations += 1
        self._drain(w)
        if self._check_termination():
            self.tick += 1
            return
        worked = False
        resync_every = self.cfg.resync_every
        for _ in range(self.cfg.batch):
            if self._is_idle(w):
                break
            l = w.selector.select(w.F)
            if w.F[l] == 0.0 and not w.F.any():
                w.resync()
                if self._check_termination():
                    break
                continue
            self._diffuse(w, l)
            worked = True
            if resync_every and w.stats.diffusions % resync_every == 0:
                w.resync()
            total = self.total_residual()
            if total > self.divergence_factor * self.initial_r:
                self.diverged = self.done = True
                self.message = f"residual grew past {self.divergence_factor:g} x its initial value"
                break
            self.rec.record(self.step, self.link_cost, total, self.global_history, self.total_weighted)
            if self._check_termination():
                break
        if not worked:
            w.stats.idle_activations += 1
        self.tick += 1

    def run(self, observer: Optional[Callable[["AsyncSimulation"], None]] = None) -> SolveReport:
        while not self.done:
            if self.max_ticks is not None and self.tick >= self.max_ticks:
                self.message = f"tick budget {self.max_ticks} exhausted"
                break
            self.step_tick()
            if observer is not None:
                observer(self)
        return self.report()

    def report(self) -> SolveReport:
        H = self.global_history()
        total = self.total_residual()
        self.rec.record(self.step, self.link_cost, total, H, self.total_weighted, force=True)
        stats = SimStats(self.tick, [w.stats for w in self.workers], self.quiescent_checks, self.hasher.hexdigest())
        return SolveReport(
            solution=self.prob.recover(H),
            converged=self.converged,
            bound=self.bound.of(total, self.total_weighted()),
            residual=total,
            steps=self.step,
            link_cost=self.link_cost,
            matvec_equiv=self.link_cost / self.rec.nnz,
            history=H,
            fluid=self.global_fluid(),
            trace=self.rec.trace,
            diverged=self.diverged,
            message=self.message,
            stats=stats,
        )


def simulate(prob: FixedPointProblem, plan: PartitionPlan, cfg: SimConfig = SimConfig(),
             tol: Optional[float] = 1e-10, max_ticks: Optional[int] = None, *, reference=None,
             observer: Optional[Callable[[AsyncSimulation], None]] = None) -> SolveReport:
    """Run the asynchronous simulation; ``report.stats`` carries per-worker counters."""
    return AsyncSimulation(prob, plan, cfg, tol, max_ticks, reference=reference).run(observer)


def replay_check(prob: FixedPointProblem, plan: PartitionPlan, cfg: SimConfig = SimConfig(),
                 tol: Optional[float] = 1e-10, max_ticks: Optional[int] = None,
                 first: Optional[SolveReport] = None) -> bool:
    """Run twice with the same seed; True iff both runs match diffusion for diffusion.

    ``first`` may hold the report of an earlier run with the same arguments,
    which then stands in for the first of the two runs.
    """
    def signature(report):
        return report.stats.digest, report.trace.rows, report.history.tobytes(), report.steps

    runs = [] if first is None else [signature(first)]
    while len(runs) < 2:
        runs.append(signature(AsyncSimulation(prob, plan, cfg, tol, max_ticks).run()))
    return runs[0] == runs[1]
