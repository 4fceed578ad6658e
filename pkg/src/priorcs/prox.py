"""Proximal operators for the four objectives and the l2-ball projection.

The scalar kernels are numba ufuncs so the splitting solver can call the very
same code from inside its compiled loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import vectorize

from .model import PriorShift

KINDS = ("lasso", "max_corr", "l1_l1", "l1_l2")


@vectorize(["float64(float64, float64)"], nopython=True, cache=True)
def soft_threshold(q, t):
    a = abs(q) - t
    if a <= 0.0:
        return 0.0
    return a if q > 0.0 else -a


@vectorize(["float64(float64, float64, float64, float64)"], nopython=True, cache=True)
def _prox_l1_l1_scalar(q, t, phi, lam):
    # the minimizer is a kink (0 or phi) or a stationary point of one smooth piece
    best_w = 0.0
    best_h = lam * abs(phi) + q * q / (2.0 * t)
    for w in (phi, q - t * (1.0 + lam), q - t * (1.0 - lam),
              q + t * (1.0 + lam), q + t * (1.0 - lam)):
        h = abs(w) + lam * abs(w - phi) + (w - q) * (w - q) / (2.0 * t)
        if h < best_h:
            best_h = h
            best_w = w
    return best_w


def _vec(v, name="vector") -> np.ndarray:
    if isinstance(v, PriorShift):
        v = v.shift
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {arr.shape}")
    return arr


def _check_step(t):
    if not t > 0:
        raise ValueError(f"step must be > 0, got {t}")


def _check_same(a, b):
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def prox_l1(q, t: float) -> np.ndarray:
    """Soft thresholding, ``sign(q) * max(|q| - t, 0)``."""
    _check_step(t)
    return soft_threshold(_vec(q, "q"), float(t))


def prox_max_corr(q, t: float, p) -> np.ndarray:
    """Prox of ``||w||_1 - <p, w>``: the linear term just shifts the argument."""
    _check_step(t)
    q, p = _vec(q, "q"), _vec(p, "p")
    _check_same(q, p)
    return soft_threshold(q + t * p, float(t))


def prox_l1_l2(q, t: float, phi, lam: float) -> np.ndarray:
    """Prox of ``||w||_1 + lam/2 ||w - phi||_2^2``."""
    _check_step(t)
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    q, phi = _vec(q, "q"), _vec(phi, "phi")
    _check_same(q, phi)
    d = 1.0 + t * lam
    return soft_threshold((q + t * lam * phi) / d, t / d)


def prox_l1_l1(q, t: float, phi, lam: float) -> np.ndarray:
    """Prox of ``||w||_1 + lam ||w - phi||_1`` by candidate enumeration."""
    _check_step(t)
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    q, phi = _vec(q, "q"), _vec(phi, "phi")
    _check_same(q, phi)
    return _prox_l1_l1_scalar(q, float(t), phi, float(lam))


def project_l2_ball(z, center, radius: float) -> np.ndarray:
    """Euclidean projection of ``z`` onto ``{u : ||u - center||_2 <= radius}``."""
    if not radius >= 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    z, center = _vec(z, "z"), _vec(center, "center")
    _check_same(z, center)
    diff = z - center
    norm = np.linalg.norm(diff)
    if norm <= radius:
        return z.copy()
    return center + (radius / norm) * diff


def prox_oracle_1d(objective, q: float, t: float) -> float:
    """Brute-force scalar prox: grid argmin of ``objective(w) + (w - q)^2 / (2t)``.

    The grid is ``{-10R, ..., 10R}`` with spacing ``1e-5 R``, ``R = max(1, |q|, t)``.
    It is scanned in two passes (every 1000th point, then the fine points within
    two coarse steps of the coarse winner), which returns the same grid point as
    a full scan whenever ``objective`` is convex. ``objective`` must accept
    numpy arrays. Test oracle only.
    """
    R = max(1.0, abs(q), t)
    h = 1e-5 * R
    lo = -10.0 * R
    last = 2_000_000

    def total(k):
        w = lo + k * h
        return objective(w) + (w - q) ** 2 / (2.0 * t)

    coarse = np.arange(0, last + 1, 1000)
    kc = coarse[np.argmin(total(coarse))]
    fine = np.arange(max(0, kc - 2000), min(last, kc + 2000) + 1)
    return float(lo + fine[np.argmin(total(fine))] * h)


@dataclass(frozen=True, eq=False)
class Regularizer:
    """One of the four objectives.

    ``shift`` is used by ``max_corr``; ``prior`` and ``lam`` by ``l1_l1`` and
    ``l1_l2``. ``lasso`` ignores all of them.
    """

    kind: str = "lasso"
    shift: np.ndarray | None = None
    prior: np.ndarray | None = None
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown regularizer kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "max_corr":
            if self.shift is None:
                raise ValueError("max_corr needs a shift vector")
            object.__setattr__(self, "shift", _vec(self.shift, "shift").copy())
        if self.kind in ("l1_l1", "l1_l2"):
            if self.prior is None:
                raise ValueError(f"{self.kind} needs a prior vector")
            if not self.lam >= 0:
                raise ValueError(f"lam must be >= 0, got {self.lam}")
            object.__setattr__(self, "prior", _vec(self.prior, "prior").copy())
            object.__setattr__(self, "lam", float(self.lam))

    @classmethod
    def lasso(cls) -> "Regularizer":
        return cls("lasso")

    @classmethod
    def max_corr(cls, shift) -> "Regularizer":
        return cls("max_corr", shift=shift)

    @classmethod
    def l1_l1(cls, prior, lam: float) -> "Regularizer":
        return cls("l1_l1", prior=prior, lam=lam)

    @classmethod
    def l1_l2(cls, prior, lam: float) -> "Regularizer":
        return cls("l1_l2", prior=prior, lam=lam)

    def check_dim(self, n: int) -> None:
        for v in (self.shift, self.prior):
            if v is not None and v.size != n:
                raise ValueError(f"regularizer vector has length {v.size}, expected {n}")

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        val = np.abs(x).sum()
        if self.kind == "max_corr":
            val -= self.shift @ x
        elif self.kind == "l1_l1":
            val += self.lam * np.abs(x - self.prior).sum()
        elif self.kind == "l1_l2":
            val += 0.5 * self.lam * np.sum((x - self.prior) ** 2)
        return float(val)

    def prox(self, q, t: float) -> np.ndarray:
        if self.kind == "lasso":
            return prox_l1(q, t)
        if self.kind == "max_corr":
            return prox_max_corr(q, t, self.shift)
        if self.kind == "l1_l1":
            return prox_l1_l1(q, t, self.prior, self.lam)
        return prox_l1_l2(q, t, self.prior, self.lam)

    def subgradient(self, x) -> np.ndarray:
        """One element of the subdifferential (``sign(0) = 0`` convention)."""
        x = np.asarray(x, dtype=float)
        g = np.sign(x)
        if self.kind == "max_corr":
            g = g - self.shift
        elif self.kind == "l1_l1":
            g = g + self.lam * np.sign(x - self.prior)
        elif self.kind == "l1_l2":
            g = g + self.lam * (x - self.prior)
        return g
