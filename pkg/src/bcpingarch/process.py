"""BCP-INGARCH(1,1) dynamics.

``Y_t | F_{t-1} ~ BCP(lambda_1t, lambda_2t, phi)`` with
``lambda_t = omega + A lambda_{t-1} + B Y_{t-1}``.
"""
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ._backend import kernels
from .exceptions import DataError, DomainError, NonStationaryError

FULL_NAMES = ("alpha1", "alpha2", "beta11", "beta12", "beta21", "beta22",
              "omega1", "omega2", "phi")
DIAG_NAMES = ("alpha1", "alpha2", "beta11", "beta22", "omega1", "omega2", "phi")
# positions of the diagonal-B parameters inside the full nine-vector
DIAG_INDEX = np.array([0, 1, 2, 5, 6, 7, 8])

DEFAULT_BURN_IN = 300


def param_names(b_diagonal: bool, include_phi: bool = True) -> tuple:
    names = DIAG_NAMES if b_diagonal else FULL_NAMES
    return names if include_phi else names[:-1]


def free_index(b_diagonal: bool, include_phi: bool = True) -> np.ndarray:
    """Indices of the free parameters inside the full nine-vector."""
    idx = DIAG_INDEX if b_diagonal else np.arange(9)
    return idx if include_phi else idx[:-1]


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Parameters ``(omega, A, B, phi)`` of a BCP-INGARCH(1,1) process.

    ``a`` and ``b`` are 2x2 non-negative matrices.  ``a`` may be full for
    simulation; estimation only handles diagonal ``a``.  When
    ``b_diagonal`` is set the off-diagonal entries of ``b`` must be zero.
    Stationarity is checked, not enforced.
    """

    omega: np.ndarray
    a: np.ndarray
    b: np.ndarray
    phi: float
    b_diagonal: bool = False

    def __post_init__(self):
        omega = np.array(self.omega, dtype=np.float64).reshape(2)
        a = np.array(self.a, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64)
        if a.shape == (2,):
            a = np.diag(a)
        if b.shape == (2,):
            b = np.diag(b)
        if a.shape != (2, 2) or b.shape != (2, 2):
            raise DomainError("A and B must be 2x2")
        if not np.all(omega > 0) or not np.all(np.isfinite(omega)):
            raise DomainError(f"omega must be positive, got {omega}")
        if np.any(a < 0) or np.any(b < 0) or not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise DomainError("A and B must have finite non-negative entries")
        if not np.isfinite(self.phi):
            raise DomainError("phi must be finite")
        if self.b_diagonal and (b[0, 1] != 0 or b[1, 0] != 0):
            raise DomainError("b_diagonal is set but B has non-zero off-diagonal entries")
        for arr in (omega, a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "phi", float(self.phi))

    @classmethod
    def from_vector(cls, values, b_diagonal: bool = False):
        """Build from a vector ordered as :func:`param_names`."""
        values = np.asarray(values, dtype=np.float64)
        full = np.zeros(9)
        full[free_index(b_diagonal)] = values
        return cls.from_full_vector(full, b_diagonal)

    @classmethod
    def from_full_vector(cls, full, b_diagonal: bool = False):
        full = np.asarray(full, dtype=np.float64)
        a1, a2, b11, b12, b21, b22, w1, w2, phi = full
        return cls(omega=[w1, w2], a=np.diag([a1, a2]), b=[[b11, b12], [b21, b22]],
                   phi=phi, b_diagonal=b_diagonal)

    @property
    def a_is_diagonal(self) -> bool:
        return self.a[0, 1] == 0 and self.a[1, 0] == 0

    def full_vector(self) -> np.ndarray:
        """``(alpha1, alpha2, beta11, beta12, beta21, beta22, omega1, omega2, phi)``."""
        if not self.a_is_diagonal:
            raise DomainError("parameter vector requires a diagonal A")
        return np.array([self.a[0, 0], self.a[1, 1], self.b[0, 0], self.b[0, 1],
                         self.b[1, 0], self.b[1, 1], self.omega[0], self.omega[1],
                         self.phi])

    def to_vector(self) -> np.ndarray:
        return self.full_vector()[free_index(self.b_diagonal)]

    @property
    def names(self) -> tuple:
        return param_names(self.b_diagonal)

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.to_vector().tolist()))

    def replace(self, **changes):
        kw = dict(omega=self.omega, a=self.a, b=self.b, phi=self.phi,
                  b_diagonal=self.b_diagonal)
        kw.update(changes)
        return ModelParams(**kw)

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (np.array_equal(self.omega, other.omega) and np.array_equal(self.a, other.a)
                and np.array_equal(self.b, other.b) and self.phi == other.phi
                and self.b_diagonal == other.b_diagonal)

    def __repr__(self):
        if self.a_is_diagonal:
            body = ", ".join(f"{k}={v:.6g}" for k, v in self.as_dict().items())
        else:
            body = f"omega={self.omega.tolist()}, a={self.a.tolist()}, b={self.b.tolist()}, phi={self.phi}"
        return f"ModelParams({body})"


@dataclass(frozen=True, eq=False)
class SeriesPair:
    """Observed bivariate count series of common length ``n >= 2``."""

    y1: np.ndarray
    y2: np.ndarray
    labels: Optional[Sequence[str]] = field(default=None, compare=False)

    def __post_init__(self):
        y1 = _as_counts(self.y1, "y1")
        y2 = _as_counts(self.y2, "y2")
        if y1.shape != y2.shape:
            raise DataError(f"series lengths differ: {y1.shape[0]} vs {y2.shape[0]}")
        if y1.shape[0] < 2:
            raise DataError("need at least two observations")
        if self.labels is not None and len(self.labels) != y1.shape[0]:
            raise DataError("labels must match the series length")
        values = np.ascontiguousarray(np.column_stack([y1, y2]), dtype=np.int64)
        values.setflags(write=False)
        object.__setattr__(self, "y1", values[:, 0])
        object.__setattr__(self, "y2", values[:, 1])
        object.__setattr__(self, "_values", values)

    @classmethod
    def from_array(cls, values, labels=None):
        values = np.asarray(values)
        if values.ndim != 2 or values.shape[1] != 2:
            raise DataError("expected an (n, 2) array of counts")
        return cls(values[:, 0], values[:, 1], labels)

    @property
    def values(self) -> np.ndarray:
        """``(n, 2)`` C-contiguous int64 view."""
        return self._values

    def __len__(self):
        return self._values.shape[0]

    def head(self, n: int) -> "SeriesPair":
        labels = None if self.labels is None else list(self.labels)[:n]
        return SeriesPair(self.y1[:n], self.y2[:n], labels)

    def swapped(self) -> "SeriesPair":
        return SeriesPair(self.y2, self.y1, self.labels)

    def __eq__(self, other):
        if not isinstance(other, SeriesPair):
            return NotImplemented
        return np.array_equal(self._values, other._values)


def _as_counts(values, name):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise DataError(f"{name} must be one-dimensional")
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise DataError(f"{name} contains non-integer values")
    elif arr.dtype.kind not in "iub":
        raise DataError(f"{name} must contain integers")
    arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise DataError(f"{name} contains negative counts")
    return arr


@dataclass(frozen=True)
class LambdaPath:
    """Conditional-mean path ``(lambda_1t, lambda_2t)``."""

    lam1: np.ndarray
    lam2: np.ndarray

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=np.float64)
        return cls(values[:, 0].copy(), values[:, 1].copy())

    @property
    def values(self) -> np.ndarray:
        return np.column_stack([self.lam1, self.lam2])

    def __len__(self):
        return self.lam1.shape[0]


class StationarityCheck(NamedTuple):
    satisfied: bool
    margin: float


def lambda_update(prev_lambda, prev_y, p: ModelParams) -> np.ndarray:
    """One step of ``lambda_t = omega + A lambda_{t-1} + B y_{t-1}``."""
    prev_lambda = np.asarray(prev_lambda, dtype=np.float64)
    prev_y = np.asarray(prev_y, dtype=np.float64)
    return p.omega + p.a @ prev_lambda + p.b @ prev_y


def norm1(m) -> float:
    """Induced 1-norm (maximum absolute column sum)."""
    return float(np.abs(np.asarray(m)).sum(axis=0).max())


def stationarity_check(p: ModelParams) -> StationarityCheck:
    """Check ``||A||_1 + ||B||_1 < 1``, the sufficient condition for a unique
    stationary and ergodic solution."""
    margin = 1.0 - (norm1(p.a) + norm1(p.b))
    return StationarityCheck(margin > 0.0, margin)


def _solve2(m, v):
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    if det == 0.0 or not np.isfinite(det):
        raise NonStationaryError("nonstationary mean: singular (I - A - B)")
    return np.array([m[1, 1] * v[0] - m[0, 1] * v[1],
                     -m[1, 0] * v[0] + m[0, 0] * v[1]]) / det


def unconditional_mean(p: ModelParams) -> np.ndarray:
    """Stationary mean ``(I - A - B)^{-1} omega``."""
    ab = p.a + p.b
    if norm1(ab) >= 1.0:
        radius = np.max(np.abs(np.linalg.eigvals(ab)))
        if radius >= 1.0:
            raise NonStationaryError(
                f"nonstationary mean: spectral radius of A + B is {radius:.6g}"
            )
    return _solve2(np.eye(2) - ab, p.omega)


def simulate(p: ModelParams, n: int, burn_in: int = DEFAULT_BURN_IN, lambda_init=None,
             seed=None):
    """Simulate ``n`` observations after discarding ``burn_in`` steps.

    Parameters
    ----------
    p : ModelParams
    n : int
    burn_in : int, default 300
    lambda_init : pair of float, optional
        Conditional mean at the first (burn-in) step.  Defaults to the
        unconditional mean.
    seed : int, SeedSequence or Generator, optional

    Returns
    -------
    (SeriesPair, LambdaPath)
    """
    if n < 2:
        raise DomainError("n must be at least 2")
    if burn_in < 0:
        raise DomainError("burn_in must be non-negative")
    check = stationarity_check(p)
    if not check.satisfied:
        warnings.warn(
            f"||A||_1 + ||B||_1 >= 1 (margin {check.margin:.4g}); the process may "
            "not be stationary", RuntimeWarning, stacklevel=2)
    if lambda_init is None:
        lambda_init = unconditional_mean(p)
    lambda_init = np.asarray(lambda_init, dtype=np.float64)
    if lambda_init.shape != (2,) or np.any(lambda_init <= 0):
        raise DomainError("lambda_init must be a positive pair")
    rng = np.random.default_rng(seed)
    stream = kernels.UniformStream(rng)
    y, lam = kernels.simulate_path(p.omega, p.a, p.b, p.phi, n + burn_in,
                                   float(lambda_init[0]), float(lambda_init[1]), stream)
    return SeriesPair.from_array(y[burn_in:]), LambdaPath.from_array(lam[burn_in:])


# Parameter settings used in the simulation studies.
def config_a() -> ModelParams:
    return ModelParams.from_vector([0.3, 0.2, 0.3, 0.1, 0.2, 0.2, 1.0, 1.0, 0.1])


def config_b() -> ModelParams:
    return ModelParams.from_vector([0.3, 0.2, 0.3, 0.1, 0.2, 0.2, 1.0, 1.0, -0.1])


def scenario_i(phi: float = 0.0) -> ModelParams:
    return ModelParams.from_vector([0.4, 0.3, 0.2, 0.4, 1.0, 1.0, phi], b_diagonal=True)


def scenario_ii(phi: float = 0.0) -> ModelParams:
    return ModelParams.from_vector([0.3, 0.2, 0.3, 0.1, 0.2, 0.2, 1.0, 0.5, phi])


def se_setting() -> ModelParams:
    return ModelParams.from_vector([0.4, 0.3, 0.2, 0.4, 1.0, 0.5, 0.7], b_diagonal=True)


PRESETS = {
    "a": config_a,
    "b": config_b,
    "scenario1": scenario_i,
    "scenario2": scenario_ii,
    "se": se_setting,
}
