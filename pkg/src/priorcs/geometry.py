"""Descent-cone geometry of ``f(x) = ||x||_1 - <p, x>`` at a sparse point.

The normal cone is the conical hull of the shifted subdifferential
``S = d||x*||_1 - p``: the single value ``sign(x*_i) - p_i`` on the support and
the interval ``[-1 - p_i, 1 - p_i]`` off it. That description is only valid
when ``0`` is not in ``S``; operations that rely on it raise
``ConeHypothesisError`` otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import PriorShift, SparseSignal

#: psi_2 (Orlicz) norm of a symmetric +-1 variable: ``E exp(1/t^2) <= 2``.
BERNOULLI_PSI2_NORM = 1.0 / math.sqrt(math.log(2.0))

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class ConeHypothesisError(ValueError):
    """Zero lies in the shifted subdifferential, so the normal cone is not cone(S)."""


class SamplerDegenerateError(RuntimeError):
    """Too many random directions could not be moved into the descent cone."""


@dataclass(frozen=True, eq=False)
class ConeDescriptor:
    signal: SparseSignal
    shift: PriorShift

    def __post_init__(self):
        if not isinstance(self.signal, SparseSignal):
            object.__setattr__(self, "signal", SparseSignal(self.signal))
        if not isinstance(self.shift, PriorShift):
            object.__setattr__(self, "shift", PriorShift(self.shift))
        if self.signal.n != self.shift.n:
            raise ValueError(
                f"signal has length {self.signal.n} but shift has length {self.shift.n}"
            )

    @property
    def n(self) -> int:
        return self.signal.n

    @property
    def s(self) -> int:
        return self.signal.sparsity

    @property
    def on(self) -> np.ndarray:
        return self.signal.support_mask

    @property
    def support_point(self) -> np.ndarray:
        """``sign(x*_i) - p_i`` on the support."""
        return self.signal.sign()[self.on] - self.shift.shift[self.on]

    @property
    def off_interval(self) -> tuple[np.ndarray, np.ndarray]:
        """Bounds ``(-1 - p_i, 1 - p_i)`` off the support."""
        p = self.shift.shift[~self.on]
        return -1.0 - p, 1.0 - p


@dataclass(frozen=True)
class WidthEstimate:
    mean_sq_dist: float
    std_error: float
    samples: int
    closed_form_bound: float


def compute_v(cone: ConeDescriptor) -> float:
    """Largest squared norm over the shifted subdifferential.

    Entries with ``p_i = 0`` off the support contribute 1 from either branch.
    """
    p = cone.shift.shift
    on = cone.on
    off = ~on
    neg = p < 0
    v = np.sum((cone.signal.sign()[on] - p[on]) ** 2)
    v += np.sum((1.0 - p[off & neg]) ** 2)
    v += np.sum((1.0 + p[off & ~neg]) ** 2)
    return float(v)


def zero_in_shifted_subdiff(cone: ConeDescriptor) -> bool:
    on = cone.on
    p = cone.shift.shift
    return bool(np.all(p[on] == cone.signal.sign()[on]) and np.all(np.abs(p[~on]) <= 1.0))


def _require_hypothesis(cone: ConeDescriptor) -> None:
    if zero_in_shifted_subdiff(cone):
        raise ConeHypothesisError(
            "0 lies in the shifted subdifferential d||x*||_1 - p; the normal cone "
            "is not the conical hull of that set and the width bound does not apply"
        )


def width_bound_sq(n: int, s: int, v: float) -> float:
    """Upper bound ``n (1 - (n/v)(2/pi)(1 - s/n)^2)`` on the squared width, clamped at 0."""
    if not v > 0:
        raise ValueError(f"v must be > 0, got {v}")
    if not 0 <= s <= n:
        raise ValueError(f"need 0 <= s <= n, got n={n}, s={s}")
    return max(0.0, n * (1.0 - (n / v) * (2.0 / math.pi) * (1.0 - s / n) ** 2))


def sample_size_bound(width_sq: float, K: float = BERNOULLI_PSI2_NORM, C: float = 1.0,
                      eps: float = 0.0) -> float:
    """Measurement count ``(C K^2 sqrt(width_sq) + eps)^2``.

    ``C`` and ``eps`` are unspecified absolute constants, so only relative
    comparisons of the result are meaningful.
    """
    if width_sq < 0 or K <= 0 or C <= 0 or eps < 0:
        raise ValueError("need width_sq >= 0, K > 0, C > 0, eps >= 0")
    return (C * K * K * math.sqrt(width_sq) + eps) ** 2


def gamma_upper_from_width(width: float, witness_norm: float = 1.0) -> float:
    """Gaussian complexity bound ``2 w(E) + ||y||`` for a point ``y`` of ``E``."""
    if width < 0 or witness_norm < 0:
        raise ValueError("width and witness_norm must be >= 0")
    return 2.0 * width + witness_norm


def optimal_scale(cone: ConeDescriptor) -> float:
    """Minimizer ``sqrt(2/pi) (n - s) / v`` of the quadratic width bound in ``t``."""
    return math.sqrt(2.0 / math.pi) * (cone.n - cone.s) / compute_v(cone)


def scaled_sq_dist(G, t, cone: ConeDescriptor) -> np.ndarray:
    """``F(t) = dist(g, t S)^2`` for each row ``g`` of ``G`` and scale ``t >= 0``."""
    G = np.atleast_2d(np.asarray(G, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), G.shape[:1])[:, None]
    on = cone.on
    lo, hi = cone.off_interval
    g_on = G[:, on]
    g_off = G[:, ~on]
    out = np.sum((g_on - t * cone.support_point) ** 2, axis=1)
    out += np.sum((g_off - np.clip(g_off, t * lo, t * hi)) ** 2, axis=1)
    return out


def _sq_dist_rows(G: np.ndarray, cone: ConeDescriptor, rtol: float = 1e-10) -> np.ndarray:
    # F is convex in t. Bracket by doubling from t = 1, then golden-section
    # search every row for a fixed number of steps.
    N = G.shape[0]
    F0 = np.sum(G * G, axis=1)
    t = np.ones(N)
    Ft = scaled_sq_dist(G, t, cone)
    grow = Ft < F0
    doubled = np.zeros(N, dtype=bool)
    active = grow.copy()
    while active.any():
        idx = np.flatnonzero(active)
        F2 = scaled_sq_dist(G[idx], 2.0 * t[idx], cone)
        better = F2 < Ft[idx]
        step = idx[better]
        t[step] *= 2.0
        Ft[step] = F2[better]
        doubled[step] = True
        active[idx[~better]] = False
        active &= t < 1e150
    a = np.where(doubled, t / 2.0, 0.0)
    b = np.where(grow, 2.0 * t, 1.0)

    steps = int(math.ceil(math.log(rtol) / math.log(_GOLDEN)))
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    Fc = scaled_sq_dist(G, c, cone)
    Fd = scaled_sq_dist(G, d, cone)
    for _ in range(steps):
        left = Fc < Fd
        # left: keep [a, d]; otherwise keep [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - _GOLDEN * (b - a)
        new_d = a + _GOLDEN * (b - a)
        nc, nd = np.where(left, new_c, d), np.where(left, c, new_d)
        Fnew = scaled_sq_dist(G, np.where(left, nc, nd), cone)
        Fc, Fd = np.where(left, Fnew, Fd), np.where(left, Fc, Fnew)
        c, d = nc, nd
    best = np.minimum(np.minimum(Fc, Fd), F0)
    return np.maximum(best, 0.0)


def sq_dist_to_normal_cone(g, cone: ConeDescriptor) -> float:
    _require_hypothesis(cone)
    g = np.asarray(g, dtype=float)
    if g.shape != (cone.n,):
        raise ValueError(f"g must have shape ({cone.n},), got {g.shape}")
    return float(_sq_dist_rows(g[None, :], cone)[0])


def dist_to_normal_cone(g, cone: ConeDescriptor) -> float:
    """Euclidean distance from ``g`` to the normal cone ``cone(S)``."""
    return math.sqrt(sq_dist_to_normal_cone(g, cone))


def mc_width_estimate(cone: ConeDescriptor, samples: int, rng: np.random.Generator,
                      chunk: int = 8192) -> WidthEstimate:
    """Monte-Carlo estimate of ``E dist(g, N_f)^2`` for standard normal ``g``.

    This is the statistical dimension of the descent cone and bounds the
    squared spherical width from above. ``closed_form_bound`` is the quadratic
    bound ``n - 2t sqrt(2/pi)(n - s) + t^2 v`` at its optimal ``t``.
    """
    _require_hypothesis(cone)
    if samples < 2:
        raise ValueError("need at least 2 samples")
    n, s = cone.n, cone.s
    vals = np.empty(samples)
    for start in range(0, samples, chunk):
        stop = min(samples, start + chunk)
        vals[start:stop] = _sq_dist_rows(rng.standard_normal((stop - start, n)), cone)
    v = compute_v(cone)
    t = math.sqrt(2.0 / math.pi) * (n - s) / v
    bound = n - 2.0 * t * math.sqrt(2.0 / math.pi) * (n - s) + t * t * v
    return WidthEstimate(
        mean_sq_dist=float(vals.mean()),
        std_error=float(vals.std(ddof=1) / math.sqrt(samples)),
        samples=samples,
        closed_form_bound=float(bound),
    )


def directional_derivative(cone: ConeDescriptor, d) -> float:
    """One-sided derivative ``f'(x*; d)``; ``d`` is a descent direction iff it is <= 0."""
    d = np.asarray(d, dtype=float)
    return float(_dir_deriv_rows(d[None, :], cone)[0])


def _dir_deriv_rows(D: np.ndarray, cone: ConeDescriptor) -> np.ndarray:
    on = cone.on
    sgn = cone.signal.sign()[on]
    return D[:, on] @ sgn + np.abs(D[:, ~on]).sum(axis=1) - D @ cone.shift.shift


def empirical_restricted_infimum(cone: ConeDescriptor, A, samples: int,
                                 rng: np.random.Generator, margin: float = 1e-6,
                                 max_repairs: int = 100) -> float:
    """Smallest ``||A h||`` over sampled unit descent directions ``h``.

    This is an upper bound on the infimum over the whole cone. Gaussian
    directions outside the cone are pushed in by repeated subgradient
    projection steps onto ``{d : f'(x*; d) <= -margin}``; those still outside
    after ``max_repairs`` steps are discarded.
    """
    _require_hypothesis(cone)
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] != cone.n:
        raise ValueError(f"A must have {cone.n} columns")
    on = cone.on
    p = cone.shift.shift
    D = rng.standard_normal((samples, cone.n))
    for _ in range(max_repairs):
        fd = _dir_deriv_rows(D, cone)
        bad = np.flatnonzero(fd > 0)
        if bad.size == 0:
            break
        Db = D[bad]
        Q = np.empty_like(Db)
        Q[:, on] = cone.support_point
        Q[:, ~on] = np.sign(Db[:, ~on]) - p[~on]
        qq = np.sum(Q * Q, axis=1)
        ok = qq > 0
        step = np.zeros(bad.size)
        step[ok] = (fd[bad][ok] + margin) / qq[ok]
        D[bad] = Db - step[:, None] * Q
    norms = np.linalg.norm(D, axis=1)
    keep = (_dir_deriv_rows(D, cone) <= 0) & (norms > 0)
    if keep.sum() < 0.5 * samples:
        raise SamplerDegenerateError(
            f"only {keep.sum()} of {samples} sampled directions reached the descent cone"
        )
    H = D[keep] / norms[keep, None]
    return float(np.min(np.linalg.norm(H @ A.T, axis=1)))
