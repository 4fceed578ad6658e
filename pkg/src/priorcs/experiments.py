"""Phase-transition sweeps over (sparsity, measurements) and contour extraction."""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .model import (
    AMPLITUDE_LAW,
    CASES,
    PriorShift,
    SensingProblem,
    SparseSignal,
    TrialSeed,
    derive_substream,
    generate_bernoulli_matrix,
    generate_sparse_signal,
    make_prior_case,
)
from .prox import Regularizer
from .solvers import SolverConfig, recovery_error, solve

METHOD_ALIASES = {
    "lasso": "lasso",
    "mc": "max_corr",
    "max_corr": "max_corr",
    "l1l1": "l1_l1",
    "l1_l1": "l1_l1",
    "l1l2": "l1_l2",
    "l1_l2": "l1_l2",
}


def canonical_method(name: str) -> str:
    try:
        return METHOD_ALIASES[name]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; expected one of {sorted(METHOD_ALIASES)}") from None


@dataclass(frozen=True)
class PhaseProtocol:
    """One phase-transition experiment.

    ``prior_weight`` is the ``lam`` used by the l1-l1 and l1-l2 baselines,
    which receive the prior ``phi = p / lam`` so that ``lam * phi`` equals the
    case's shift ``p``.
    """

    n: int = 128
    grid_step: int = 2
    trials_per_cell: int = 50
    tol: float = 1e-2
    delta: float = 0.0
    case_tag: str = "a"
    method: str = "max_corr"
    base_seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    prior_weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "method", canonical_method(self.method))
        if self.case_tag not in CASES:
            raise ValueError(f"unknown case {self.case_tag!r}; expected one of {CASES}")
        if self.n < 1 or self.grid_step < 1 or self.trials_per_cell < 1:
            raise ValueError("need n >= 1, grid_step >= 1, trials_per_cell >= 1")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if not self.delta >= 0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")
        if not self.prior_weight > 0:
            raise ValueError(f"prior_weight must be > 0, got {self.prior_weight}")

    @property
    def axis(self) -> np.ndarray:
        return np.arange(0, self.n + 1, self.grid_step)

    def to_metadata(self) -> dict[str, str]:
        meta = {k: repr(v) if isinstance(v, float) else str(v)
                for k, v in asdict(self).items() if k != "solver"}
        for k, v in asdict(self.solver).items():
            meta[f"solver.{k}"] = repr(v) if isinstance(v, float) else str(v)
        return meta

    @classmethod
    def from_metadata(cls, meta: dict[str, str]) -> "PhaseProtocol":
        def convert(typ, raw):
            if typ in ("bool", bool):
                return raw == "True"
            if typ in ("int", int):
                return int(raw)
            if typ in ("float", float):
                return float(raw)
            return raw

        solver = SolverConfig(**{
            f.name: convert(f.type, meta[f"solver.{f.name}"])
            for f in fields(SolverConfig) if f"solver.{f.name}" in meta
        })
        kwargs = {f.name: convert(f.type, meta[f.name])
                  for f in fields(cls) if f.name != "solver" and f.name in meta}
        return cls(solver=solver, **kwargs)


@dataclass(frozen=True, eq=False)
class TrialInstance:
    signal: SparseSignal
    problem: SensingProblem
    shift: PriorShift


def draw_instance(protocol: PhaseProtocol, s: int, m: int, trial_index: int) -> TrialInstance:
    """Signal, Bernoulli matrix and prior shift of one trial.

    The draw does not depend on the method, so methods compared on the same
    protocol see identical instances. Case ``e`` at full support has no
    off-support index to shift; its support part (case ``b``) is used.
    """
    n = protocol.n
    if not (0 <= s <= n and 0 <= m):
        raise ValueError(f"need 0 <= s <= n and m >= 0, got s={s}, m={m}")
    rng = derive_substream(TrialSeed(protocol.base_seed, s, m, trial_index, protocol.case_tag))
    signal = generate_sparse_signal(n, s, rng)
    A = generate_bernoulli_matrix(m, n, rng)
    case = protocol.case_tag
    if case == "e" and s == n:
        case = "b"
    shift = make_prior_case(case, signal, rng)
    y = A @ signal.values
    if protocol.delta > 0 and m > 0:
        u = rng.standard_normal(m)
        y = y + protocol.delta * u / np.linalg.norm(u)
    return TrialInstance(signal, SensingProblem(A, y, protocol.delta), shift)


def regularizer_for(method: str, shift, prior_weight: float = 1.0) -> Regularizer:
    method = canonical_method(method)
    p = np.asarray(shift, dtype=float)
    if method == "lasso":
        return Regularizer.lasso()
    if method == "max_corr":
        return Regularizer.max_corr(p)
    return Regularizer(method, prior=p / prior_weight, lam=prior_weight)


def _trial(protocol: PhaseProtocol, s: int, m: int, trial_index: int) -> tuple[bool, str]:
    inst = draw_instance(protocol, s, m, trial_index)
    reg = regularizer_for(protocol.method, inst.shift, protocol.prior_weight)
    report = solve(inst.problem, reg, protocol.solver)
    if report.status == "diverged":
        return False, report.status
    err = recovery_error(report.solution, inst.signal.values)
    return bool(err < protocol.tol), report.status


def run_trial(protocol: PhaseProtocol, s: int, m: int, trial_index: int) -> bool:
    """True iff the relative recovery error is below ``protocol.tol``.

    For ``s = 0`` the absolute error is used instead; a diverged solve is a failure.
    """
    return _trial(protocol, s, m, trial_index)[0]


def _run_row(protocol: PhaseProtocol, s: int) -> tuple[list[int], Counter]:
    counts = []
    statuses = Counter()
    for m in protocol.axis:
        hits = 0
        for k in range(protocol.trials_per_cell):
            ok, status = _trial(protocol, int(s), int(m), k)
            hits += ok
            statuses[status] += 1
        counts.append(hits)
    return counts, statuses


@dataclass
class PhaseGrid:
    """Success counts ``counts[i, j]`` at ``s_values[i]``, ``m_values[j]``."""

    s_values: np.ndarray
    m_values: np.ndarray
    counts: np.ndarray
    trials: int
    protocol: PhaseProtocol | None = None
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def success_rate(self) -> np.ndarray:
        return self.counts / self.trials

    def mean_success(self) -> float:
        return float(self.success_rate.mean())

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "m", "successes", "trials"])
        for i, s in enumerate(self.s_values):
            for j, m in enumerate(self.m_values):
                w.writerow([int(s), int(m), int(self.counts[i, j]), self.trials])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.csv_text())

    @classmethod
    def read_csv(cls, path) -> "PhaseGrid":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: empty grid")
        s_vals = sorted({int(r["s"]) for r in rows})
        m_vals = sorted({int(r["m"]) for r in rows})
        trials = {int(r["trials"]) for r in rows}
        if len(trials) != 1:
            raise ValueError(f"{path}: inconsistent trial counts {sorted(trials)}")
        si = {s: i for i, s in enumerate(s_vals)}
        mi = {m: j for j, m in enumerate(m_vals)}
        counts = np.full((len(s_vals), len(m_vals)), -1, dtype=int)
        for r in rows:
            counts[si[int(r["s"])], mi[int(r["m"])]] = int(r["successes"])
        if (counts < 0).any():
            raise ValueError(f"{path}: grid has missing cells")
        meta_path = Path(str(path) + ".meta")
        metadata = read_metadata(meta_path) if meta_path.exists() else {}
        protocol = PhaseProtocol.from_metadata(metadata) if metadata else None
        return cls(np.array(s_vals), np.array(m_vals), counts, trials.pop(), protocol, metadata)


def write_metadata(path, meta: dict[str, str]) -> None:
    Path(path).write_text("".join(f"{k}={v}\n" for k, v in meta.items()))


def read_metadata(path) -> dict[str, str]:
    meta = {}
    for line in Path(path).read_text().splitlines():
        if line.strip() and not line.startswith("#"):
            key, _, value = line.partition("=")
            meta[key.strip()] = value.strip()
    return meta


def run_phase_grid(protocol: PhaseProtocol, workers: int = 1) -> PhaseGrid:
    """Run every cell of the (s, m) grid.

    Rows are independent and each trial owns its random stream, so the counts
    do not depend on ``workers`` or on scheduling order.
    """
    s_axis = protocol.axis
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_row, [protocol] * len(s_axis), s_axis))
    else:
        rows = [_run_row(protocol, s) for s in s_axis]
    counts = np.array([r[0] for r in rows], dtype=int)
    statuses = sum((r[1] for r in rows), Counter())
    meta = {
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "code_version": __version__,
        "amplitude_law": AMPLITUDE_LAW,
        "matrix_ensemble": "symmetric_bernoulli",
        **protocol.to_metadata(),
    }
    for status in ("converged", "max_iters", "diverged"):
        meta[f"status.{status}"] = str(statuses.get(status, 0))
    return PhaseGrid(s_axis.copy(), protocol.axis.copy(), counts,
                     protocol.trials_per_cell, protocol, meta)


def extract_contour(grid: PhaseGrid, level: float) -> list[tuple[int, int | None]]:
    """Transition point per sparsity: the smallest ``m`` with success rate >= ``level``.

    A cell only counts if the next larger ``m`` also reaches ``level`` (the
    last column needs only itself). Rows that never qualify map to ``None``.
    """
    if not 0 < level < 1:
        raise ValueError(f"level must be in (0, 1), got {level}")
    ok = grid.success_rate >= level
    ok[:, :-1] &= ok[:, 1:]
    out = []
    for i, s in enumerate(grid.s_values):
        hits = np.flatnonzero(ok[i])
        out.append((int(s), int(grid.m_values[hits[0]]) if hits.size else None))
    return out


def contour_csv_text(contour) -> str:
    lines = ["s,m_star"] + [f"{s},{m}" for s, m in contour if m is not None]
    return "\n".join(lines) + "\n"


_SHARED = ("n", "grid_step", "trials_per_cell", "tol", "base_seed", "case_tag")


@dataclass
class ComparisonTable:
    methods: list[str]
    s_values: np.ndarray
    contours: dict[str, list[int | None]]
    grids: dict[str, PhaseGrid] = field(default_factory=dict, repr=False)

    def csv_text(self) -> str:
        lines = [",".join(["s", *self.methods])]
        for i, s in enumerate(self.s_values):
            cells = ["" if self.contours[k][i] is None else str(self.contours[k][i])
                     for k in self.methods]
            lines.append(",".join([str(int(s)), *cells]))
        return "\n".join(lines) + "\n"


def compare_methods(protocols, level: float = 0.5, workers: int = 1) -> ComparisonTable:
    """Contours of several methods on common random numbers.

    All protocols must share the grid, trial count, tolerance, seed and case;
    since instances do not depend on the method, every method sees the same
    signals and matrices.
    """
    protocols = list(protocols)
    if not protocols:
        raise ValueError("need at least one protocol")
    ref = protocols[0]
    for pr in protocols[1:]:
        for name in _SHARED:
            if getattr(pr, name) != getattr(ref, name):
                raise ValueError(f"protocols disagree on {name}: "
                                 f"{getattr(ref, name)!r} vs {getattr(pr, name)!r}")
    methods = [pr.method for pr in protocols]
    if len(set(methods)) != len(methods):
        raise ValueError(f"duplicate methods in {methods}")
    grids = {pr.method: run_phase_grid(pr, workers) for pr in protocols}
    contours = {k: [m for _, m in extract_contour(g, level)] for k, g in grids.items()}
    return ComparisonTable(methods, ref.axis.copy(), contours, grids)


def with_method(protocol: PhaseProtocol, method: str) -> PhaseProtocol:
    return replace(protocol, method=method)


def ordering_fraction(table: ComparisonTable, order: list[str]) -> float:
    """Fraction of sparsity columns (all contours defined) with ``order`` non-decreasing."""
    good = total = 0
    for i in range(len(table.s_values)):
        vals = [table.contours[k][i] for k in order]
        if any(v is None for v in vals):
            continue
        total += 1
        good += all(a <= b for a, b in zip(vals, vals[1:]))
    return good / total if total else math.nan


def best_fraction(table: ComparisonTable, best: str) -> float:
    """Fraction of columns (all contours defined) where ``best`` is <= every other method."""
    good = total = 0
    for i in range(len(table.s_values)):
        vals = {k: table.contours[k][i] for k in table.methods}
        if any(v is None for v in vals.values()):
            continue
        total += 1
        good += all(vals[best] <= v for v in vals.values())
    return good / total if total else math.nan
