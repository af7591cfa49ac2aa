"""Command-line front end: file ingestion, experiments and trace export."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import baselines, conditions, distsim, engine, transforms
from .core import FixedPointProblem, SparseMatrix, column_abs_sums
from .engine import Schedule, Trace
from .mmio import FormatError, read_edge_list, read_matrix_market, read_vector

log = logging.getLogger(__name__)

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_USAGE = 0, 1, 2
LINEAR_TRANSFORMS = ("pc", "q", "qprime")
GRAPH_TRANSFORMS = ("pagerank", "eigen", "fixed")
TRANSFORMS = LINEAR_TRANSFORMS + GRAPH_TRANSFORMS
CSV_HEADER = ["method", "step", "link_cost", "matvec_equiv", "residual_l1", "error_bound"]
DENSE_REFERENCE_LIMIT = 10_000
DEFAULT_BENCH_METHODS = (
    "jacobi",
    "gauss-seidel",
    "power:pc",
    "diter:q:cyclic",
    "diter:q:greedy-abs",
    "diter:qprime:greedy-reduction",
)


class ConfigError(ValueError):
    pass


def fmt(x) -> str:
    return f"{x:.17g}"


@dataclass(frozen=True)
class MethodSpec:
    """``jacobi``, ``gauss-seidel``, ``power[:transform]`` or ``diter:<transform>[:<schedule>]``."""

    kind: str
    transform: Optional[str] = None
    schedule: Optional[Schedule] = None

    @classmethod
    def parse(cls, text: str) -> "MethodSpec":
        kind, _, rest = text.strip().partition(":")
        if kind in ("jacobi", "gauss-seidel"):
            if rest:
                raise ConfigError(f"{kind} takes no options")
            return cls(kind)
        if kind == "power":
            transform = rest or "pc"
            if transform not in TRANSFORMS:
                raise ConfigError(f"unknown transform {transform!r} in {text!r}")
            return cls(kind, transform)
        if kind == "diter":
            transform, _, sched = rest.partition(":")
            if transform not in TRANSFORMS:
                raise ConfigError(f"unknown transform {transform!r} in {text!r}; expected one of {TRANSFORMS}")
            try:
                schedule = Schedule.parse(sched) if sched else Schedule()
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            return cls(kind, transform, schedule)
        raise ConfigError(f"unknown method {text!r}")

    @property
    def linear(self) -> bool:
        return self.transform is None or self.transform in LINEAR_TRANSFORMS

    @property
    def label(self) -> str:
        if self.kind == "diter":
            return f"diter:{self.transform}:{self.schedule}"
        if self.kind == "power":
            return f"power:{self.transform}"
        return self.kind

    @property
    def slug(self) -> str:
        return self.label.replace(":", "_")


@dataclass
class ExperimentConfig:
    input: Path
    methods: List[MethodSpec]
    fmt: str = "mm"
    rhs: Optional[Path] = None
    tol: Optional[float] = 1e-10
    max_cost: Optional[int] = None
    trace_stride: Optional[int] = None
    output: Optional[Path] = None
    c: Optional[float] = None
    damping: float = 0.85
    alpha: float = 1.0
    personalization: Optional[Path] = None
    reference: Optional[Path] = None
    weight_mode: str = "uniform"
    gnuplot: bool = False

    def validate(self) -> None:
        if not self.methods:
            raise ConfigError("at least one method is required")
        if self.tol is None and self.max_cost is None:
            raise ConfigError("need --tol or --max-cost")
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("tolerance must be positive")
        if self.fmt not in ("mm", "edges"):
            raise ConfigError(f"unknown input format {self.fmt!r}")
        for m in self.methods:
            if m.schedule is not None and m.schedule.kind == "greedy-reduction" and m.transform != "qprime":
                raise ConfigError(f"{m.label}: greedy-reduction needs the qprime transform")
        kinds = {m.linear for m in self.methods}
        if len(kinds) > 1:
            raise ConfigError("cannot mix linear-system methods with pagerank/eigen/fixed transforms")
        if self.gnuplot and self.output is None:
            raise ConfigError("--gnuplot needs an output directory")


@dataclass
class MethodResult:
    method: str
    converged: bool
    solution: np.ndarray
    trace: Trace
    steps: int
    link_cost: int
    sweeps: float
    residual: float
    true_error: Optional[float]
    cost_to_tol: Optional[int]
    message: str = ""


@dataclass
class ExperimentResult:
    results: List[MethodResult]
    csv_paths: List[Path] = field(default_factory=list)
    gnuplot_path: Optional[Path] = None

    @property
    def all_converged(self) -> bool:
        return all(r.converged for r in self.results)


@dataclass
class InputData:
    matrix: SparseMatrix
    rhs: np.ndarray
    personalization: Optional[np.ndarray] = None


def load_input(cfg: ExperimentConfig) -> InputData:
    if cfg.fmt == "edges":
        m = read_edge_list(cfg.input, cfg.weight_mode)
    else:
        m = read_matrix_market(cfg.input)
    rhs = np.ones(m.n) if cfg.rhs is None else read_vector(cfg.rhs)
    if rhs.size != m.n:
        raise ConfigError(f"right-hand side has {rhs.size} entries, matrix is {m.n}x{m.n}")
    v = None
    if cfg.personalization is not None:
        v = read_vector(cfg.personalization)
        if v.size != m.n:
            raise ConfigError(f"personalization vector has {v.size} entries, graph has {m.n} nodes")
    return InputData(m, rhs, v)


def build_problem(transform: str, data: InputData, cfg: ExperimentConfig) -> FixedPointProblem:
    m = data.matrix
    if transform == "pc":
        c = cfg.c if cfg.c is not None else conditions.theorem1_c_bound(m)
        return transforms.build_pc(m, data.rhs, c)
    if transform == "q":
        return transforms.build_q(m, data.rhs)
    if transform == "qprime":
        return transforms.build_qprime(m, data.rhs)
    if transform == "pagerank":
        return transforms.build_pagerank(m, cfg.damping, data.personalization)
    if transform == "eigen":
        return transforms.build_eigen_shift(m, cfg.alpha)
    if transform == "fixed":
        return transforms.build_fixed(m, data.rhs)
    raise ConfigError(f"unknown transform {transform!r}")


def _reference(cfg: ExperimentConfig, data: InputData, prob: Optional[FixedPointProblem]):
    if cfg.reference is not None:
        return read_vector(cfg.reference)
    if data.matrix.n > DENSE_REFERENCE_LIMIT:
        return None
    try:
        if prob is None:
            return baselines.dense_solve(data.matrix, data.rhs)
        return baselines.fixed_point_reference(prob)
    except baselines.SingularMatrixError:
        log.warning("no dense reference: matrix is singular")
        return None


def _iterations(max_cost: Optional[int], nnz: int, default: int = 100_000) -> int:
    if max_cost is None:
        return default
    return max(1, math.ceil(max_cost / max(nnz, 1)))


def _default_stride(n: int) -> int:
    return 1 if n <= 100 else n


def run_method(method: MethodSpec, data: InputData, cfg: ExperimentConfig) -> MethodResult:
    """Run one method and summarize it."""
    tol = cfg.tol if cfg.tol is not None else 0.0
    stride = cfg.trace_stride or _default_stride(data.matrix.n)
    if method.kind in ("jacobi", "gauss-seidel"):
        reference = _reference(cfg, data, None)
        solver = baselines.jacobi if method.kind == "jacobi" else baselines.gauss_seidel
        kwargs = {"certify": True} if method.kind == "jacobi" else {}
        rep = solver(data.matrix, data.rhs, tol, _iterations(cfg.max_cost, data.matrix.nnz),
                     trace_stride=stride, reference=reference, **kwargs)
        steps, link_cost, sweeps, residual = rep.iterations, rep.link_cost, rep.matvec_equiv, rep.trace.rows[-1].residual
    else:
        prob = build_problem(method.transform, data, cfg)
        reference = _reference(cfg, data, None if method.linear else prob)
        if method.kind == "power":
            rep = baselines.power_affine(prob, tol, _iterations(cfg.max_cost, prob.operator.nnz),
                                         trace_stride=stride, reference=reference, certify=True)
            steps, link_cost, sweeps, residual = (rep.iterations, rep.link_cost, rep.matvec_equiv,
                                                  rep.trace.rows[-1].residual)
        else:
            max_cost = cfg.max_cost
            if max_cost is None and not engine.ErrorBound(prob).available:
                max_cost = max(10**6, 1000 * prob.operator.nnz)
            rep = engine.run(prob, method.schedule, cfg.tol, max_cost, trace_stride=stride, reference=reference)
            steps, link_cost, sweeps, residual = rep.steps, rep.link_cost, rep.steps / prob.n, rep.residual
    true_error = None
    if reference is not None:
        true_error = float(np.abs(np.asarray(reference) - rep.solution).sum())
    hit = rep.trace.first_below(cfg.tol) if cfg.tol is not None else None
    return MethodResult(method.label, rep.converged, rep.solution, rep.trace, steps, link_cost, sweeps,
                        residual, true_error, None if hit is None else hit.link_cost, rep.message)


def write_trace_csv(path: Path, result: MethodResult) -> None:
    with_err = any(row.true_error is not None for row in result.trace)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER + (["true_error"] if with_err else []))
        for row in result.trace:
            line = [result.method, row.step, row.link_cost, fmt(row.matvec_equiv), fmt(row.residual),
                    fmt(row.error_bound)]
            if with_err:
                line.append("" if row.true_error is None else fmt(row.true_error))
            w.writerow(line)


def write_gnuplot(path: Path, csv_paths: Sequence[Path], labels: Sequence[str]) -> None:
    plots = ", \\\n     ".join(
        f"'{p.name}' using 3:5 skip 1 with linespoints title '{label}'" for p, label in zip(csv_paths, labels)
    )
    path.write_text(
        "set datafile separator ','\n"
        "set logscale y\n"
        "set xlabel 'link cost'\n"
        "set ylabel 'residual (L1)'\n"
        "set key top right\n"
        f"plot {plots}\n",
        encoding="utf-8",
    )


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run every configured method, writing one CSV trace each when ``output`` is set."""
    cfg.validate()
    data = load_input(cfg)
    for m in cfg.methods:
        # surface transform errors (zero diagonals, non-stochastic input) before any run
        if m.transform is not None:
            build_problem(m.transform, data, cfg)
    out = ExperimentResult([run_method(m, data, cfg) for m in cfg.methods])
    if cfg.output is not None:
        cfg.output.mkdir(parents=True, exist_ok=True)
        for res, m in zip(out.results, cfg.methods):
            path = cfg.output / f"{m.slug}.csv"
            write_trace_csv(path, res)
            out.csv_paths.append(path)
        if cfg.gnuplot:
            out.gnuplot_path = cfg.output / "plot.gp"
            write_gnuplot(out.gnuplot_path, out.csv_paths, [m.label for m in cfg.methods])
    return out


def summary_table(results: Sequence[MethodResult]) -> str:
    head = ["method", "converged", "steps", "link_cost", "sweeps", "cost_to_tol", "residual_l1", "true_error"]
    rows = [head]
    for r in results:
        rows.append([
            r.method,
            "yes" if r.converged else "no",
            str(r.steps),
            str(r.link_cost),
            f"{r.sweeps:.4g}",
            "-" if r.cost_to_tol is None else str(r.cost_to_tol),
            f"{r.residual:.3e}",
            "-" if r.true_error is None else f"{r.true_error:.3e}",
        ])
    widths = [max(len(row[k]) for row in rows) for k in range(len(head))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows)


def _print_vector(x, out) -> None:
    print(" ".join(fmt(v) for v in x), file=out)


# -- argument parsing ------------------------------------------------------


def _add_input(p: argparse.ArgumentParser, edges_flag: bool = True) -> None:
    p.add_argument("matrix", type=Path, help="Matrix Market file (or edge list with --edges)")
    p.add_argument("--rhs", type=Path, help="right-hand side / initial fluid vector (default: all ones)")
    if edges_flag:
        p.add_argument("--edges", action="store_true", help="read a TSV edge list instead of Matrix Market")
        p.add_argument("--weights", choices=("uniform", "given"), default="uniform")


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-cost", type=int, help="link budget")
    p.add_argument("--trace-stride", type=int)
    p.add_argument("--c", type=float, help="scaling for the pc transform (default: 1/max|a_ij|)")
    p.add_argument("--damping", type=float, default=0.85)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--personalization", type=Path)
    p.add_argument("--reference", type=Path, help="reference solution vector for true_error")
    p.add_argument("--output", type=Path, help="directory for CSV traces")
    p.add_argument("--gnuplot", action="store_true", help="also write a gnuplot script")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diteration", description="Diffusion-based sparse fixed-point solver.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one method")
    _add_input(p)
    p.add_argument("--method", default="diter:q:cyclic")
    _add_run_options(p)

    p = sub.add_parser("bench", help="compare several methods")
    _add_input(p)
    p.add_argument("--methods", default=",".join(DEFAULT_BENCH_METHODS), help="comma-separated method list")
    _add_run_options(p)
    p.set_defaults(output=None)

    p = sub.add_parser("check", help="report convergence conditions")
    _add_input(p)
    p.add_argument("--alpha", type=float, default=1.0)

    p = sub.add_parser("eliminate", help="solve exactly by link elimination")
    _add_input(p)
    p.add_argument("--form", choices=("fixed", "pc", "q", "qprime"), default="fixed",
                   help="fixed: the matrix is P and --rhs is F0")
    p.add_argument("--c", type=float)
    p.add_argument("--order", help="comma-separated node order (default ascending)")
    p.add_argument("--fill-limit", type=float, default=50.0)

    p = sub.add_parser("pagerank", help="PageRank of a TSV edge list")
    p.add_argument("edges", type=Path)
    p.add_argument("--damping", type=float, default=0.85)
    p.add_argument("--personalization", type=Path)
    p.add_argument("--weights", choices=("uniform", "given"), default="uniform")
    p.add_argument("--schedule", default="cyclic")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-cost", type=int)

    p = sub.add_parser("distsim", help="simulate asynchronous multi-worker diffusion")
    _add_input(p)
    p.add_argument("--transform", choices=TRANSFORMS, help="default: q, or pagerank with --edges")
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strategy", choices=distsim.STRATEGIES, default="contiguous")
    p.add_argument("--delay", default="0", help="constant lag or lo:hi range in ticks")
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--schedule", default="cyclic")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-ticks", type=int)
    p.add_argument("--c", type=float)
    p.add_argument("--damping", type=float, default=0.85)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--personalization", type=Path)
    return parser


def _config(args, methods: List[MethodSpec]) -> ExperimentConfig:
    return ExperimentConfig(
        input=args.matrix,
        methods=methods,
        fmt="edges" if getattr(args, "edges", False) else "mm",
        rhs=getattr(args, "rhs", None),
        tol=getattr(args, "tol", 1e-10),
        max_cost=getattr(args, "max_cost", None),
        trace_stride=getattr(args, "trace_stride", None),
        output=getattr(args, "output", None),
        c=getattr(args, "c", None),
        damping=getattr(args, "damping", 0.85),
        alpha=getattr(args, "alpha", 1.0),
        personalization=getattr(args, "personalization", None),
        reference=getattr(args, "reference", None),
        weight_mode=getattr(args, "weights", "uniform"),
        gnuplot=getattr(args, "gnuplot", False),
    )


def cmd_solve(args, out) -> int:
    cfg = _config(args, [MethodSpec.parse(args.method)])
    res = run_experiment(cfg)
    r = res.results[0]
    _print_vector(r.solution, out)
    print(f"# method {r.method} converged={'yes' if r.converged else 'no'} steps={r.steps} "
          f"link_cost={r.link_cost} residual_l1={fmt(r.residual)}", file=out)
    if r.message:
        print(f"# {r.message}", file=out)
    return EXIT_OK if res.all_converged else EXIT_NOT_CONVERGED


def cmd_bench(args, out) -> int:
    if args.output is None:
        args.output = Path("traces")
    methods = [MethodSpec.parse(t) for t in args.methods.split(",") if t.strip()]
    res = run_experiment(_config(args, methods))
    print(summary_table(res.results), file=out)
    for p in res.csv_paths:
        print(f"# wrote {p}", file=out)
    if res.gnuplot_path is not None:
        print(f"# wrote {res.gnuplot_path}", file=out)
    return EXIT_OK if res.all_converged else EXIT_NOT_CONVERGED


def _yes(flag: bool) -> str:
    return "yes" if flag else "no"


def _report_line(name: str, rep: conditions.ConditionReport) -> str:
    text = f"{name}: {_yes(rep.satisfied)}"
    if rep.witness is not None:
        text += f" (witness {rep.witness})"
    if rep.weak is not None:
        text += f"; weak: {_yes(rep.weak)}"
    return text


def cmd_check(args, out) -> int:
    cfg = _config(args, [MethodSpec("jacobi")])
    m = load_input(cfg).matrix
    print(_report_line("column-SDD", conditions.is_sdd_columns(m)), file=out)
    print(_report_line("row-SDD", conditions.is_sdd_rows(m)), file=out)
    print(_report_line("fluid reduction (as P)", conditions.fluid_reduction(m)), file=out)
    print(_report_line("fluid reduction by rows (as P)", conditions.fluid_reduction_rows(m)), file=out)
    print(_report_line("weak fluid reduction (as P)", conditions.weak_fluid_reduction(m)), file=out)
    print(f"irreducible: {_yes(conditions.is_irreducible(m))}", file=out)
    if m.nnz:
        bound = conditions.theorem1_c_bound(m)
        print(f"c-bound: {fmt(bound)}", file=out)
        diag = m.diagonal()
        if np.all(diag > 0):
            pc = transforms.build_pc(m, np.ones(m.n), 0.99 * bound)
            print(_report_line("fluid reduction of P(0.99 c-bound)", conditions.fluid_reduction(pc.operator)),
                  file=out)
        if np.all(diag != 0):
            q = transforms.build_q(m, np.ones(m.n))
            print(_report_line("fluid reduction of Q", conditions.fluid_reduction(q.operator)), file=out)
            qp = transforms.build_qprime(m, np.ones(m.n))
            print(_report_line("fluid reduction of Q'", conditions.fluid_reduction(qp.operator)), file=out)
        else:
            print("zero diagonal entry: Q and Q' undefined", file=out)
    sums = column_abs_sums(m)
    stochastic = m.nnz > 0 and m.data.min() >= 0 and np.all(np.abs(sums - 1.0) <= conditions.STOCHASTIC_TOL)
    if stochastic:
        print(_report_line(f"rank-one shift (alpha={fmt(args.alpha)})", conditions.theorem2_check(m, args.alpha)),
              file=out)
    else:
        print("rank-one shift: not applicable (matrix is not column-stochastic)", file=out)
    return EXIT_OK


def cmd_eliminate(args, out) -> int:
    cfg = _config(args, [MethodSpec("jacobi")])
    data = load_input(cfg)
    prob = build_problem(args.form, data, cfg)
    order = None
    if args.order:
        order = [int(t) for t in args.order.split(",")]
    x, elog = transforms.eliminate_all(prob, order, args.fill_limit)
    _print_vector(x, out)
    print(f"# eliminations {len(elog)} fill_in {elog.fill_in}", file=out)
    return EXIT_OK


def cmd_pagerank(args, out) -> int:
    schedule = Schedule.parse(args.schedule)
    p = read_edge_list(args.edges, args.weights)
    v = None if args.personalization is None else read_vector(args.personalization)
    prob = transforms.build_pagerank(p, args.damping, v)
    if schedule.kind == "greedy-reduction":
        raise ConfigError("greedy-reduction needs the qprime transform")
    rep = engine.run(prob, schedule, args.tol, args.max_cost)
    _print_vector(rep.solution, out)
    print(f"# converged={_yes(rep.converged)} steps={rep.steps} link_cost={rep.link_cost} "
          f"residual_l1={fmt(rep.residual)} bound={fmt(rep.bound)}", file=out)
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def _parse_delay(text: str):
    lo, sep, hi = text.partition(":")
    try:
        return (int(lo), int(hi)) if sep else int(lo)
    except ValueError:
        raise ConfigError(f"bad delay {text!r}; expected N or LO:HI") from None


def cmd_distsim(args, out) -> int:
    transform = args.transform or ("pagerank" if args.edges else "q")
    cfg = _config(args, [MethodSpec("diter", transform, Schedule.parse(args.schedule))])
    cfg.validate()
    data = load_input(cfg)
    prob = build_problem(transform, data, cfg)
    sim_cfg = distsim.SimConfig(seed=args.seed, delay=_parse_delay(args.delay), batch=args.batch,
                                schedule=Schedule.parse(args.schedule))
    plan = distsim.partition(prob, args.workers, args.strategy)
    rep = distsim.simulate(prob, plan, sim_cfg, args.tol, args.max_ticks)
    _print_vector(rep.solution, out)
    st = rep.stats
    print(f"# converged={_yes(rep.converged)} ticks={st.ticks} diffusions={rep.steps} "
          f"link_cost={rep.link_cost} residual_l1={fmt(rep.residual)} digest={st.digest}", file=out)
    for w in st.workers:
        print(f"# worker {w.worker}: nodes={w.nodes} diffusions={w.diffusions} link_cost={w.link_cost} "
              f"sent={w.messages_sent} received={w.messages_received} idle={w.idle_activations}", file=out)
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


COMMANDS = {
    "solve": cmd_solve,
    "bench": cmd_bench,
    "check": cmd_check,
    "eliminate": cmd_eliminate,
    "pagerank": cmd_pagerank,
    "distsim": cmd_distsim,
}


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except (OSError, FormatError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
