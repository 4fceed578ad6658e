"""Domain types, random instance generators and deterministic seeding.

Every generator takes an explicit ``numpy.random.Generator`` so that a trial
is a pure function of its parameters and its substream.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

CASES = ("a", "b", "c", "d", "e", "f")

#: Law of the nonzero amplitudes of generated signals; recorded in experiment
#: metadata so runs can be told apart if it is ever swapped.
AMPLITUDE_LAW = "standard_normal"

_MASK64 = (1 << 64) - 1


def _frozen(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SparseSignal:
    """Ground-truth vector; support and sparsity are derived from ``values``."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, "values"))

    def __array__(self, dtype=None, copy=None):
        return np.array(self.values, dtype=dtype)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values)

    @property
    def support_mask(self) -> np.ndarray:
        return self.values != 0

    @property
    def sparsity(self) -> int:
        return int(np.count_nonzero(self.values))

    def sign(self) -> np.ndarray:
        return np.sign(self.values)


@dataclass(frozen=True, eq=False)
class PriorShift:
    """The product ``p = lam * phi`` of prior weight and prior signal.

    Objective and cone geometry depend on the prior only through this product,
    so the two factors are never stored separately.
    """

    shift: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shift", _frozen(self.shift, "shift"))

    def __array__(self, dtype=None, copy=None):
        return np.array(self.shift, dtype=dtype)

    @property
    def n(self) -> int:
        return self.shift.size

    @property
    def negative_set(self) -> np.ndarray:
        return np.flatnonzero(self.shift < 0)


@dataclass(frozen=True, eq=False)
class SensingProblem:
    """Observation model ``y = A x + noise`` with ``||noise||_2 <= noise_bound``."""

    matrix: np.ndarray
    observation: np.ndarray
    noise_bound: float = 0.0

    def __post_init__(self):
        A = np.array(self.matrix, dtype=float)
        if A.ndim != 2:
            raise ValueError(f"matrix must be 2-D, got shape {A.shape}")
        y = np.array(self.observation, dtype=float).reshape(-1)
        if y.size != A.shape[0]:
            raise ValueError(
                f"observation has length {y.size} but matrix has {A.shape[0]} rows"
            )
        if not self.noise_bound >= 0:
            raise ValueError(f"noise_bound must be >= 0, got {self.noise_bound}")
        A.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "observation", y)
        object.__setattr__(self, "noise_bound", float(self.noise_bound))

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    def scaled(self, c: float) -> "SensingProblem":
        """Same feasible set, with ``A``, ``y`` and the noise bound scaled by ``c``."""
        return SensingProblem(c * self.matrix, c * self.observation, c * self.noise_bound)


@dataclass(frozen=True)
class TrialSeed:
    """Coordinates of one random stream: a base seed plus the trial's cell."""

    base_seed: int
    s: int = 0
    m: int = 0
    trial_index: int = 0
    case_tag: str = "a"


def derive_substream(seed: TrialSeed) -> np.random.Generator:
    """Independent generator for ``seed``; a pure function of its fields.

    The coordinates go into the spawn key of a ``SeedSequence``, whose hash
    mixing separates streams that differ in any coordinate, so trials can be
    run in any order or in parallel.
    """
    tag = sum(ord(ch) << (8 * i) for i, ch in enumerate(str(seed.case_tag)))
    key = (int(seed.s), int(seed.m), int(seed.trial_index), tag)
    if min(key) < 0:
        raise ValueError(f"stream coordinates must be non-negative, got {key}")
    ss = np.random.SeedSequence(entropy=int(seed.base_seed) & _MASK64, spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def generate_sparse_signal(n: int, s: int, rng: np.random.Generator) -> SparseSignal:
    """``s`` standard-normal amplitudes at uniformly chosen distinct positions."""
    if n < 0 or not 0 <= s <= n:
        raise ValueError(f"need 0 <= s <= n, got n={n}, s={s}")
    values = np.zeros(n)
    idx = rng.choice(n, size=s, replace=False)
    amp = rng.standard_normal(s)
    # a standard normal draw of exactly 0.0 would break |support| == s
    amp[amp == 0.0] = 1.0
    values[idx] = amp
    return SparseSignal(values)


def generate_bernoulli_matrix(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``m x n`` matrix with i.i.d. entries uniform on {+1, -1} (unnormalized)."""
    if m < 0 or n < 1:
        raise ValueError(f"invalid dimensions m={m}, n={n}")
    return 2.0 * rng.integers(0, 2, size=(m, n)) - 1.0


def make_prior_case(case: str, signal: SparseSignal, rng: np.random.Generator) -> PriorShift:
    """Prior shift for one of the six benchmark cases ``a`` .. ``f``.

    ``a``: no prior. ``b``/``c``: plus/minus half the sign pattern on the
    support. ``d``: ones off the support. ``e``: ``b`` plus a single 1/4 at a
    uniformly chosen off-support index. ``f``: ``c`` on the support, ones off it.
    """
    sgn = signal.sign()
    on = signal.support_mask
    p = np.zeros(signal.n)
    if case == "a":
        pass
    elif case == "b":
        p = sgn / 2
    elif case == "c":
        p = -sgn / 2
    elif case == "d":
        p[~on] = 1.0
    elif case == "e":
        off = np.flatnonzero(~on)
        if off.size == 0:
            raise ValueError("case 'e' needs at least one off-support index")
        p = sgn / 2
        p[off[rng.integers(off.size)]] = 0.25
    elif case == "f":
        p = -sgn / 2
        p[~on] = 1.0
    else:
        raise ValueError(f"unknown case {case!r}; expected one of {CASES}")
    return PriorShift(p)


# headerless CSV, 17 significant digits so values round-trip exactly


def write_vector(path, v) -> None:
    np.savetxt(Path(path), np.asarray(v, dtype=float).reshape(-1, 1), fmt="%.17g")


def read_vector(path) -> np.ndarray:
    return np.loadtxt(Path(path), delimiter=",", ndmin=1, dtype=float).reshape(-1)


def write_matrix(path, A) -> None:
    np.savetxt(Path(path), np.atleast_2d(np.asarray(A, dtype=float)), fmt="%.17g", delimiter=",")


def read_matrix(path) -> np.ndarray:
    return np.loadtxt(Path(path), delimiter=",", ndmin=2, dtype=float)
