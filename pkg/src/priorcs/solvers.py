"""Solvers for ``min f(x)  s.t.  ||A x - y||_2 <= delta``.

``solve`` is an operator-splitting (ADMM) method over the copies ``w = x`` and
``z = A x``; every subproblem is closed form. ``solve_subgradient_oracle`` is a
slow, independent projected-subgradient method used to cross-check it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .model import SensingProblem
from .prox import KINDS, Regularizer, _prox_l1_l1_scalar, soft_threshold

STATUSES = ("converged", "max_iters", "diverged")
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}


@dataclass(frozen=True)
class SolverConfig:
    rho: float = 1.0
    max_iters: int = 5000
    tol_abs: float = 1e-6
    tol_rel: float = 1e-5
    divergence_guard: float = 1e8
    adaptive_rho: bool = True
    # residual balancing is only applied during the first ``adapt_window``
    # iterations; an eventually constant penalty keeps ADMM convergent
    adapt_window: int = 500

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not (self.tol_abs > 0 and self.tol_rel > 0):
            raise ValueError("tolerances must be > 0")
        if not self.divergence_guard > 0:
            raise ValueError("divergence_guard must be > 0")


@dataclass
class SolveReport:
    solution: np.ndarray
    objective_value: float
    primal_residual: float
    dual_residual: float
    iterations: int
    status: str
    relative_error: float | None = None
    rho: float = 1.0

    @property
    def converged(self) -> bool:
        return self.status == "converged"


# ---------------------------------------------------------------------------
# compiled helpers


@njit(cache=True)
def _matvec(A, x, out):
    m, n = A.shape
    for i in range(m):
        acc = 0.0
        for j in range(n):
            acc += A[i, j] * x[j]
        out[i] = acc


@njit(cache=True)
def _rmatvec(A, v, out):
    m, n = A.shape
    for j in range(n):
        out[j] = 0.0
    for i in range(m):
        vi = v[i]
        for j in range(n):
            out[j] += A[i, j] * vi


@njit(cache=True)
def _chol_solve(L, b, out):
    n = b.size
    for i in range(n):
        acc = b[i]
        for j in range(i):
            acc -= L[i, j] * out[j]
        out[i] = acc / L[i, i]
    for i in range(n - 1, -1, -1):
        acc = out[i]
        for j in range(i + 1, n):
            acc -= L[j, i] * out[j]
        out[i] = acc / L[i, i]


@njit(cache=True)
def _prox_into(kind, v, t, p, phi, lam, out):
    n = v.size
    if kind == 0:
        for i in range(n):
            out[i] = soft_threshold(v[i], t)
    elif kind == 1:
        for i in range(n):
            out[i] = soft_threshold(v[i] + t * p[i], t)
    elif kind == 2:
        for i in range(n):
            out[i] = _prox_l1_l1_scalar(v[i], t, phi[i], lam)
    else:
        d = 1.0 + t * lam
        for i in range(n):
            out[i] = soft_threshold((v[i] + t * lam * phi[i]) / d, t / d)


@njit(cache=True)
def _admm(A, L, y, delta, kind, p, phi, lam, rho, max_iters, tol_abs, tol_rel,
          guard, adaptive, adapt_window):
    m, n = A.shape
    x = np.zeros(n)
    w = np.zeros(n)
    z = np.zeros(m)
    uw = np.zeros(n)
    uz = np.zeros(m)
    Ax = np.zeros(m)
    rhs = np.zeros(n)
    tmp_n = np.zeros(n)
    tmp_m = np.zeros(m)
    w_new = np.zeros(n)
    z_new = np.zeros(m)
    eps_p0 = np.sqrt(n + m) * tol_abs
    eps_d0 = np.sqrt(n) * tol_abs
    ynorm = np.sqrt(np.sum(y * y))
    r = np.inf
    s = np.inf
    status = 1
    k = 0
    while k < max_iters:
        k += 1
        # x-update: (I + A^T A) x = (w - u_w) + A^T (z - u_z)
        for i in range(m):
            tmp_m[i] = z[i] - uz[i]
        _rmatvec(A, tmp_m, rhs)
        for j in range(n):
            rhs[j] += w[j] - uw[j]
        _chol_solve(L, rhs, x)
        _matvec(A, x, Ax)

        xnorm2 = 0.0
        for j in range(n):
            xnorm2 += x[j] * x[j]
        if not xnorm2 <= guard * guard:
            status = 2
            break

        # w-update: prox with step 1/rho
        for j in range(n):
            tmp_n[j] = x[j] + uw[j]
        _prox_into(kind, tmp_n, 1.0 / rho, p, phi, lam, w_new)

        # z-update: projection onto the ball around y
        nrm = 0.0
        for i in range(m):
            tmp_m[i] = Ax[i] + uz[i] - y[i]
            nrm += tmp_m[i] * tmp_m[i]
        nrm = np.sqrt(nrm)
        if nrm <= delta:
            for i in range(m):
                z_new[i] = y[i] + tmp_m[i]
        else:
            scale = delta / nrm
            for i in range(m):
                z_new[i] = y[i] + scale * tmp_m[i]

        # residuals and scaled dual update
        r2 = 0.0
        xx = xnorm2
        ww = 0.0
        for j in range(n):
            dj = x[j] - w_new[j]
            r2 += dj * dj
            ww += w_new[j] * w_new[j]
            uw[j] += dj
        for i in range(m):
            di = Ax[i] - z_new[i]
            r2 += di * di
            xx += Ax[i] * Ax[i]
            ww += z_new[i] * z_new[i]
            uz[i] += di
            tmp_m[i] = z_new[i] - z[i]
        _rmatvec(A, tmp_m, tmp_n)
        s2 = 0.0
        for j in range(n):
            dj = (w_new[j] - w[j]) + tmp_n[j]
            s2 += dj * dj
        r = np.sqrt(r2)
        s = rho * np.sqrt(s2)
        _rmatvec(A, uz, tmp_n)
        uu = 0.0
        for j in range(n):
            uu += uw[j] * uw[j] + tmp_n[j] * tmp_n[j]
        w[:] = w_new
        z[:] = z_new

        eps_p = eps_p0 + tol_rel * max(np.sqrt(xx), np.sqrt(ww))
        eps_d = eps_d0 + tol_rel * rho * np.sqrt(uu)
        if r <= eps_p and s <= eps_d:
            # the returned iterate is w, so also require it to be feasible
            _matvec(A, w, tmp_m)
            res2 = 0.0
            for i in range(m):
                res2 += (tmp_m[i] - y[i]) ** 2
            if np.sqrt(res2) - delta <= tol_rel * (1.0 + ynorm):
                status = 0
                break
        if adaptive and k <= adapt_window:
            if r > 10.0 * s:
                rho *= 2.0
                uw /= 2.0
                uz /= 2.0
            elif s > 10.0 * r:
                rho /= 2.0
                uw *= 2.0
                uz *= 2.0
    return w, k, status, r, s, rho


def _kernel_args(reg: Regularizer, n: int):
    empty = np.zeros(n)
    p = reg.shift if reg.kind == "max_corr" else empty
    phi = reg.prior if reg.kind in ("l1_l1", "l1_l2") else empty
    return _KIND_CODE[reg.kind], np.ascontiguousarray(p), np.ascontiguousarray(phi), float(reg.lam)


def solve(problem: SensingProblem, reg: Regularizer, cfg: SolverConfig | None = None,
          truth=None) -> SolveReport:
    """Solve ``min f(x) s.t. ||Ax - y|| <= delta`` for the objective ``reg``.

    The returned solution is the prox iterate ``w``, so its zero pattern is
    exact. Besides the primal and dual residual tests, ``converged`` requires
    ``||A w - y|| - delta <= tol_rel (1 + ||y||)``. If ``truth`` is given, ``relative_error`` is filled in (absolute
    error when ``truth`` is the zero vector).
    """
    cfg = cfg or SolverConfig()
    A = np.ascontiguousarray(problem.matrix)
    m, n = A.shape
    reg.check_dim(n)
    L = np.linalg.cholesky(np.eye(n) + A.T @ A)
    kind, p, phi, lam = _kernel_args(reg, n)
    w, its, code, r, s, rho = _admm(
        A, L, np.ascontiguousarray(problem.observation), problem.noise_bound,
        kind, p, phi, lam, float(cfg.rho), int(cfg.max_iters), float(cfg.tol_abs),
        float(cfg.tol_rel), float(cfg.divergence_guard), bool(cfg.adaptive_rho),
        int(cfg.adapt_window),
    )
    report = SolveReport(
        solution=w,
        objective_value=reg.objective(w) if np.all(np.isfinite(w)) else float("nan"),
        primal_residual=float(r),
        dual_residual=float(s),
        iterations=int(its),
        status=STATUSES[code],
        rho=float(rho),
    )
    if truth is not None:
        report.relative_error = recovery_error(w, truth)
    return report


def recovery_error(x_hat, truth) -> float:
    """``||x_hat - truth|| / ||truth||``, or the plain distance if ``truth`` is 0."""
    truth = np.asarray(truth, dtype=float)
    err = float(np.linalg.norm(np.asarray(x_hat) - truth))
    scale = float(np.linalg.norm(truth))
    return err / scale if scale > 0 else err


def check_feasibility(problem: SensingProblem, x) -> float:
    """``||A x - y||_2 - delta``; values <= a small tolerance mean feasible."""
    x = np.asarray(x, dtype=float)
    if x.size != problem.n:
        raise ValueError(f"x has length {x.size}, expected {problem.n}")
    return float(np.linalg.norm(problem.matrix @ x - problem.observation) - problem.noise_bound)


# ---------------------------------------------------------------------------
# projected subgradient reference


@dataclass
class OracleResult:
    solution: np.ndarray
    objective_value: float
    iterations: int
    rank_deficient: bool = False
    history: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)


@njit(cache=True)
def _oracle_objective(kind, x, p, phi, lam):
    val = 0.0
    for j in range(x.size):
        val += abs(x[j])
        if kind == 1:
            val -= p[j] * x[j]
        elif kind == 2:
            val += lam * abs(x[j] - phi[j])
        elif kind == 3:
            val += 0.5 * lam * (x[j] - phi[j]) ** 2
    return val


@njit(cache=True)
def _secular_norm(c, ev, mu):
    return np.sqrt(np.sum((c / (1.0 + mu * ev)) ** 2))


@njit(cache=True)
def _oracle_project(A, At, y, delta, U, ev, x):
    # exact projection onto {x : ||Ax - y|| <= delta} through the
    # eigendecomposition AA^T = U diag(ev) U^T
    if A.shape[0] == 0:
        return x
    r = A @ x - y
    rn = np.sqrt(r @ r)
    if rn <= delta:
        return x
    c = U.T @ r
    if delta == 0.0:
        return x - At @ (U @ (c / ev))

    lo, hi = 0.0, 1.0
    while _secular_norm(c, ev, hi) > delta and hi < 1e300:
        lo = hi
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _secular_norm(c, ev, mid) > delta:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    mu = hi
    rp = U @ (c / (1.0 + mu * ev))
    return x - mu * (At @ rp)


@njit(cache=True)
def _oracle_loop(A, y, delta, U, ev, kind, p, phi, lam, c, iters):
    n = A.shape[1]
    At = np.ascontiguousarray(A.T)
    x = _oracle_project(A, At, y, delta, U, ev, np.zeros(n))
    best = x.copy()
    fbest = _oracle_objective(kind, x, p, phi, lam)
    history = np.empty(iters + 1)
    history[0] = fbest
    g = np.empty(n)
    for k in range(1, iters + 1):
        for j in range(n):
            gj = np.sign(x[j])
            if kind == 1:
                gj -= p[j]
            elif kind == 2:
                gj += lam * np.sign(x[j] - phi[j])
            elif kind == 3:
                gj += lam * (x[j] - phi[j])
            g[j] = gj
        x = _oracle_project(A, At, y, delta, U, ev, x - (c / np.sqrt(k)) * g)
        f = _oracle_objective(kind, x, p, phi, lam)
        if f < fbest:
            fbest = f
            best[:] = x
        history[k] = fbest
    return best, fbest, history


def solve_subgradient_oracle(problem: SensingProblem, reg: Regularizer, iters: int = 100_000,
                             rng: np.random.Generator | None = None) -> OracleResult:
    """Projected subgradient method with step ``c / sqrt(k)``, ``c = 1 / ||A||``.

    Every iterate is projected exactly onto the feasible set; the best
    objective iterate is returned. ``history[k]`` is the best objective after
    ``k`` steps. If ``A A^T`` is singular it is regularized by ``1e-10 I`` and
    ``rank_deficient`` is set.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    A = np.ascontiguousarray(problem.matrix)
    m, n = A.shape
    reg.check_dim(n)
    if m == 0:
        U, ev = np.zeros((0, 0)), np.zeros(0)
        c = 1.0
        deficient = False
    else:
        v = rng.standard_normal(n)
        for _ in range(20):
            v = A.T @ (A @ v)
            v /= np.linalg.norm(v)
        opnorm = np.linalg.norm(A @ v)
        c = 1.0 / opnorm if opnorm > 0 else 1.0
        ev, U = np.linalg.eigh(A @ A.T)
        deficient = bool(ev.min() <= 1e-12 * max(ev.max(), 1e-300))
        if deficient:
            ev = ev + 1e-10
    kind, p, phi, lam = _kernel_args(reg, n)
    best, fbest, history = _oracle_loop(
        A, np.ascontiguousarray(problem.observation), problem.noise_bound,
        np.ascontiguousarray(U), ev, kind, p, phi, lam, float(c), int(iters),
    )
    return OracleResult(best, float(fbest), int(iters), deficient, history)
