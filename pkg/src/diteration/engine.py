"""The diffusion iteration: per-node pushes, schedules and the solve loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Sequence

import numpy as np

from .core import FixedPointProblem, OperatorSpec, column_abs_sums

log = logging.getLogger(__name__)

SCHEDULE_KINDS = ("cyclic", "greedy-abs", "greedy-degree", "greedy-reduction", "random")
DEFAULT_RESYNC = 2**20
DIVERGENCE_FACTOR = 1e6
STARVATION_FACTOR = 10


@dataclass(frozen=True)
class Schedule:
    """Rule choosing the next node to diffuse.

    ``skip_zero`` only affects the cyclic kind: nodes without fluid are
    passed over instead of being diffused for nothing.
    """

    kind: str = "cyclic"
    seed: Optional[int] = None
    skip_zero: bool = True

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule {self.kind!r}; expected one of {SCHEDULE_KINDS}")
        if self.kind == "random" and self.seed is None:
            raise ValueError("random schedule needs a seed")

    @classmethod
    def parse(cls, text: str) -> "Schedule":
        kind, _, arg = text.partition(":")
        if kind == "random":
            if not arg:
                raise ValueError("random schedule needs a seed, e.g. random:7")
            return cls("random", int(arg))
        if arg:
            raise ValueError(f"schedule {kind!r} takes no argument")
        return cls(kind)

    def __str__(self) -> str:
        return f"random:{self.seed}" if self.kind == "random" else self.kind


def schedule_weights(schedule: Schedule, prob: FixedPointProblem) -> Optional[np.ndarray]:
    """Static per-node factors multiplying ``|F_i|`` in the greedy scores."""
    if schedule.kind in ("cyclic", "random", "greedy-abs"):
        return None
    in_deg, out_deg = prob.operator.degrees
    denom = (in_deg + 1.0) * (out_deg + 1.0)
    if schedule.kind == "greedy-degree":
        return 1.0 / denom
    if prob.origin != "qprime":
        raise ValueError("greedy-reduction needs a problem built by build_qprime")
    reduction = 1.0 - column_abs_sums(prob.operator)
    if np.any(reduction <= 0):
        bad = int(np.flatnonzero(reduction <= 0)[0])
        raise ValueError(f"greedy-reduction needs column sums below 1 (column {bad} is not)")
    return reduction / denom


class Selector:
    """Stateful node picker over ``size`` local slots.

    Greedy and random kinds carry a starvation guard: a slot holding
    fluid that has not been picked for ``STARVATION_FACTOR * size``
    selections is picked next.  Cyclic order cannot starve a slot.
    """

    def __init__(self, schedule: Schedule, size: int, weights: Optional[np.ndarray] = None):
        self.schedule = schedule
        self.size = size
        self.weights = None if weights is None else np.asarray(weights, dtype=np.float64)
        self.cursor = 0
        self.count = 0
        self.limit = STARVATION_FACTOR * size
        self.last = np.zeros(size, dtype=np.int64)
        self.rng = np.random.default_rng(schedule.seed) if schedule.kind == "random" else None
        self.forced = 0

    def select(self, F: np.ndarray) -> int:
        kind = self.schedule.kind
        if kind == "cyclic":
            i = self._cyclic(F)
        else:
            stale = np.flatnonzero((F != 0.0) & (self.count - self.last >= self.limit))
            if stale.size:
                i = int(stale[0])
                self.forced += 1
            elif kind == "random":
                live = np.flatnonzero(F)
                i = int(live[self.rng.integers(live.size)]) if live.size else 0
            elif self.weights is None:
                i = int(np.argmax(np.abs(F)))
            else:
                i = int(np.argmax(np.abs(F) * self.weights))
            self.last[i] = self.count
        self.count += 1
        return i

    def _cyclic(self, F: np.ndarray) -> int:
        start = self.cursor
        if self.schedule.skip_zero and F[start] == 0.0:
            ahead = np.flatnonzero(F[start:])
            if ahead.size:
                i = start + int(ahead[0])
            else:
                behind = np.flatnonzero(F[:start])
                i = int(behind[0]) if behind.size else start
        else:
            i = start
        self.cursor = (i + 1) % self.size
        return i


@dataclass
class DiffusionState:
    F: np.ndarray
    H: np.ndarray
    r: float
    step: int = 0
    link_cost: int = 0
    schedule_cursor: Any = None


def init_state(prob: FixedPointProblem) -> DiffusionState:
    F = np.array(prob.f0, dtype=np.float64)
    return DiffusionState(F=F, H=np.zeros(prob.n), r=float(np.abs(F).sum()))


def push(F: np.ndarray, rows: Sequence[int], vals: Sequence[float], sent: float) -> float:
    """Add ``vals * sent`` into ``F[rows]`` and return the change of ``sum |F|`` over them.

    ``rows``/``vals`` are plain lists; columns are short, so scalar
    updates beat vectorised ones here.
    """
    delta = 0.0
    for j, v in zip(rows, vals):
        old = F[j]
        new = old + v * sent
        F[j] = new
        delta += abs(new) - abs(old)
    return float(delta)


def diffusion_cost(op: OperatorSpec, i: int) -> int:
    return op.costs[i]


def diffuse(state: DiffusionState, i: int, op: OperatorSpec) -> None:
    """Bank the fluid of node ``i`` into its history and push it along its out-links."""
    state.step += 1
    state.link_cost += diffusion_cost(op, i)
    F = state.F
    sent = float(F[i])
    if sent == 0.0:
        return
    state.H[i] += sent
    F[i] = 0.0
    r = state.r - abs(sent)
    rows, vals = op.column_lists[i]
    if rows:
        r += push(F, rows, vals, sent)
    w = op.rank_one_weight(i)
    if w != 0.0:
        F += (w * sent) * op.rank_one.u
        r = float(np.abs(F).sum())
    state.r = r


def select_next(state: DiffusionState, schedule: Schedule, prob: FixedPointProblem) -> int:
    sel = state.schedule_cursor
    if not isinstance(sel, Selector) or sel.schedule != schedule:
        sel = Selector(schedule, prob.n, schedule_weights(schedule, prob))
        state.schedule_cursor = sel
    return sel.select(state.F)


def error_bound(state: DiffusionState, rho: float) -> float:
    """Upper bound ``r / (1 - rho)`` on ``||X - H||_1``; ``rho`` is the largest column sum."""
    if rho >= 1.0:
        raise ValueError(f"no error bound: largest column sum {rho!r} is not below 1")
    return state.r / (1.0 - rho)


def resync_residual(state: DiffusionState) -> None:
    state.r = float(np.abs(state.F).sum())


class ErrorBound:
    """Distance-to-limit bound for a problem, in a possibly weighted L1 norm.

    With weights ``w`` the contraction factor is
    ``max_i sum_j w_j |p_ji| / w_i`` and
    ``||X - H||_1 <= sum_i w_i |F_i| / ((1 - rho) * min w)``.
    Unit weights give the plain ``r / (1 - rho)``.  When the problem
    reports ``H / s`` the bound is divided by ``min |s|`` so that it
    holds for the recovered solution.
    """

    def __init__(self, prob: FixedPointProblem):
        w = prob.norm_weights
        op = prob.operator
        if w is None:
            self.weights = None
            self.rho = op.rho
            self.wmin = self.wmax = 1.0
        else:
            self.weights = np.asarray(w)
            self.rho = float((column_abs_sums(op, w) / w).max())
            self.wmin = float(w.min())
            self.wmax = float(w.max())
        scale = prob.recover_scale
        self.recover = 1.0 if scale is None else float(np.abs(scale).min())
        self.available = self.rho < 1.0

    def weighted_norm(self, F: np.ndarray) -> float:
        if self.weights is None:
            return float(np.abs(F).sum())
        return float((self.weights * np.abs(F)).sum())

    def of(self, r: float, weighted: Optional[float] = None) -> float:
        """Bound for L1 residual ``r``; ``weighted`` is the weighted norm when known."""
        if r == 0.0:
            return 0.0
        if not self.available:
            return float("inf")
        if self.weights is None:
            return r / ((1.0 - self.rho) * self.recover)
        if weighted is None:
            weighted = self.wmax * r
        return weighted / ((1.0 - self.rho) * self.wmin * self.recover)

    def certify(self, r: float, tol: float, weighted: Callable[[], float]) -> bool:
        """True when the bound is at most ``tol``; ``weighted`` is only called if needed."""
        if not self.available:
            return False
        if r / ((1.0 - self.rho) * self.recover) > tol:
            return False
        if self.weights is None or self.of(r) <= tol:
            return True
        return self.of(r, weighted()) <= tol


# -- traces and reports ----------------------------------------------------


@dataclass(frozen=True)
class TraceRow:
    step: int
    link_cost: int
    matvec_equiv: float
    sweeps: float
    residual: float
    error_bound: float
    true_error: Optional[float] = None


@dataclass
class Trace:
    """Sampled convergence log.

    ``matvec_equiv`` divides link cost by the operator's nonzero count;
    ``sweeps`` counts ``n`` diffusions as one matrix-vector product.
    """

    stride: int = 1
    rows: List[TraceRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def first_below(self, threshold: float, attr: str = "residual") -> Optional[TraceRow]:
        for row in self.rows:
            if getattr(row, attr) <= threshold:
                return row
        return None


class _Recorder:
    def __init__(self, prob: FixedPointProblem, stride: int, bound: ErrorBound, reference=None):
        self.prob = prob
        self.trace = Trace(stride=max(1, int(stride)))
        self.bounder = bound
        self.nnz = max(prob.operator.nnz, 1)
        self.reference = None if reference is None else np.asarray(reference, dtype=np.float64)
        self.last_step = -1

    def record(
        self, step: int, link_cost: int, r: float, H: np.ndarray, weighted: Callable[[], float], force: bool = False
    ) -> None:
        if step == self.last_step or not (force or step % self.trace.stride == 0):
            return
        if callable(H):
            H = H()
        true_error = None
        if self.reference is not None:
            true_error = float(np.abs(self.reference - self.prob.recover(H)).sum())
        self.trace.rows.append(
            TraceRow(
                step,
                link_cost,
                link_cost / self.nnz,
                step / self.prob.n,
                r,
                self.bounder.of(r, weighted()),
                true_error,
            )
        )
        self.last_step = step


@dataclass
class SolveReport:
    solution: np.ndarray
    converged: bool
    bound: float
    residual: float
    steps: int
    link_cost: int
    matvec_equiv: float
    history: np.ndarray
    fluid: np.ndarray
    trace: Trace
    diverged: bool = False
    message: str = ""
    stats: Any = None


def run(
    prob: FixedPointProblem,
    schedule: Optional[Schedule] = None,
    tol: Optional[float] = 1e-10,
    max_cost: Optional[int] = None,
    *,
    trace_stride: Optional[int] = None,
    reference=None,
    resync_every: Optional[int] = DEFAULT_RESYNC,
    divergence_factor: float = DIVERGENCE_FACTOR,
    observer: Optional[Callable[[DiffusionState], None]] = None,
) -> SolveReport:
    """Diffuse until the error bound drops to ``tol`` or ``max_cost`` links are used.

    The bound is that of :class:`ErrorBound`.  When no contraction factor
    below 1 is known no bound exists;
    ``max_cost`` is then mandatory and the run only counts as converged
    if the fluid vanishes exactly.  ``observer`` is called after every
    diffusion.
    """
    schedule = schedule or Schedule()
    op = prob.operator
    bound = ErrorBound(prob)
    if tol is None and max_cost is None:
        raise ValueError("need a tolerance or a cost budget")
    if tol is not None and not tol > 0:
        raise ValueError("tolerance must be positive")
    if not bound.available and max_cost is None:
        raise ValueError(f"contraction factor is {bound.rho!r} >= 1: no error bound, pass max_cost")
    state = init_state(prob)
    select_next(state, schedule, prob)  # validates the schedule before any work
    state.schedule_cursor = None
    weighted = lambda: bound.weighted_norm(state.F)  # noqa: E731
    rec = _Recorder(prob, trace_stride or prob.n, bound, reference)
    rec.record(0, 0, state.r, state.H, weighted, force=True)
    initial_r = state.r
    converged = diverged = False
    message = ""
    while True:
        if state.r == 0.0:
            converged = True
            break
        if tol is not None and bound.certify(state.r, tol, weighted):
            resync_residual(state)
            if bound.certify(state.r, tol, weighted):
                converged = True
                break
        if max_cost is not None and state.link_cost >= max_cost:
            message = f"cost budget {max_cost} exhausted"
            break
        i = select_next(state, schedule, prob)
        if state.F[i] == 0.0 and not state.F.any():
            resync_residual(state)
            continue
        diffuse(state, i, op)
        if resync_every and state.step % resync_every == 0:
            resync_residual(state)
        if state.r > divergence_factor * initial_r:
            diverged = True
            message = f"residual grew past {divergence_factor:g} x its initial value at step {state.step}"
            log.warning(message)
            break
        rec.record(state.step, state.link_cost, state.r, state.H, weighted)
        if observer is not None:
            observer(state)
    rec.record(state.step, state.link_cost, state.r, state.H, weighted, force=True)
    return SolveReport(
        solution=prob.recover(state.H),
        converged=converged,
        bound=bound.of(state.r, weighted()),
        residual=state.r,
        steps=state.step,
        link_cost=state.link_cost,
        matvec_equiv=state.link_cost / rec.nnz,
        history=state.H,
        fluid=state.F,
        trace=rec.trace,
        diverged=diverged,
        message=message,
    )
