"""Local Gaussian-process surrogates over a growing store of exact
model evaluations.

The surrogate never fits one global model. Each query point gets its own
small kriging model built from the nearest stored evaluations: a quadratic
trend fitted by least squares plus a zero-mean GP on the residuals with an
anisotropic exponential kernel

    K(x, x') = a * exp(-sum_i |x_i - x'_i|^p / l_i),    p in {1, 2}.

Lengthscales are calibrated once from the initial design by a coordinate-wise
grid search on the profile marginal likelihood and then frozen; the amplitude
a is recalibrated in closed form for every local model, so the predictive
variance tracks the local residual scale as the store grows.

The support size follows a square-root rule between the number of quadratic
basis terms and the cost of the dense solve:

    n(d) = ceil(sqrt(d) * (d + 1) * (d + 2) / 2)

which gives 9 points in 2 dimensions, 47 in 5, and 209 in 10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve
from scipy.spatial.distance import cdist

from .errors import SurrogateError

__all__ = [
    "EvaluationStore", "KernelParams", "QuadraticMean", "LocalGP",
    "kernel_eval", "local_size", "nearest_neighbors", "fit_quadratic_mean",
    "gp_posterior", "calibrate_amplitude", "calibrate_lengthscales",
    "build_local_surrogate",
]

DUPLICATE_TOL = 1e-12
AMPLITUDE_FLOOR = 1e-12
JITTER_START = 1e-10
JITTER_MAX = 1e-4

_TRIU_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def local_size(d: int) -> int:
    """Support size n(d); see the module docstring."""
    if d < 1:
        raise ValueError("dimension must be positive")
    return math.ceil(math.sqrt(d) * (d + 1) * (d + 2) / 2)


@dataclass(frozen=True)
class KernelParams:
    """Kernel amplitude a, per-coordinate lengthscales, and exponent p."""

    a: float
    lengths: np.ndarray
    p: int

    def __post_init__(self):
        object.__setattr__(self, "lengths",
                           np.atleast_1d(np.asarray(self.lengths, dtype=float)))
        if not (self.a > 0 and math.isfinite(self.a)):
            raise ValueError("kernel amplitude must be positive and finite")
        if np.any(self.lengths <= 0) or not np.all(np.isfinite(self.lengths)):
            raise ValueError("kernel lengthscales must be positive and finite")
        if self.p not in (1, 2):
            raise ValueError(f"kernel exponent must be 1 or 2, got {self.p}")


def kernel_eval(params: KernelParams, x1: np.ndarray, x2: np.ndarray) -> float:
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    expo = np.abs(x1 - x2) ** params.p / params.lengths
    return params.a * math.exp(-float(expo.sum()))


def _scaled(X: np.ndarray, lengths: np.ndarray, p: int) -> np.ndarray:
    # |x - x'|^p / l == |x/l^(1/p) - x'/l^(1/p)|^p, so fold the lengthscales
    # into the coordinates and use plain distance kernels afterwards.
    if p == 1:
        return X / lengths
    return X / np.sqrt(lengths)


def _corr_matrix(X: np.ndarray, lengths: np.ndarray, p: int) -> np.ndarray:
    Xs = _scaled(X, lengths, p)
    metric = "cityblock" if p == 1 else "sqeuclidean"
    D = cdist(Xs, Xs, metric)
    return np.exp(-D)


def _corr_vec(X: np.ndarray, x: np.ndarray, lengths: np.ndarray, p: int) -> np.ndarray:
    Xs = _scaled(X, lengths, p)
    xs = _scaled(x[None, :], lengths, p)
    metric = "cityblock" if p == 1 else "sqeuclidean"
    return np.exp(-cdist(Xs, xs, metric))[:, 0]


class EvaluationStore:
    """Append-only set of exact evaluations (x, y) with duplicate suppression
    and nearest-neighbor queries.

    Points closer than 1e-12 (Euclidean) to a stored point are considered
    duplicates and silently skipped on insert, so the correlation matrices
    built from any subset never contain an exactly repeated row.
    """

    def __init__(self, dimension: int, capacity: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self._x = np.empty((max(capacity, 1), dimension))
        self._y = np.empty(max(capacity, 1))
        self._sqn = np.empty(max(capacity, 1))
        self._n = 0

    @property
    def size(self) -> int:
        return self._n

    @property
    def points(self) -> np.ndarray:
        """(size, d) view of stored points; do not mutate."""
        return self._x[:self._n]

    @property
    def values(self) -> np.ndarray:
        return self._y[:self._n]

    def _grow(self):
        cap = self._x.shape[0] * 2
        for name in ("_x", "_y", "_sqn"):
            old = getattr(self, name)
            shape = (cap,) + old.shape[1:]
            new = np.empty(shape)
            new[:self._n] = old[:self._n]
            setattr(self, name, new)

    def insert(self, x: np.ndarray, y: float) -> bool:
        """Add one evaluation; returns False when skipped as a duplicate."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"expected shape ({self.dimension},), got {x.shape}")
        if not (np.all(np.isfinite(x)) and math.isfinite(y)):
            raise ValueError("cannot store non-finite evaluations")
        if self._n > 0:
            # direct differences: exact zeros for exact re-inserts, which the
            # fast inner-product form cannot guarantee
            d2 = ((self._x[:self._n] - x) ** 2).sum(axis=1)
            if d2.min() <= DUPLICATE_TOL**2:
                return False
        if self._n == self._x.shape[0]:
            self._grow()
        self._x[self._n] = x
        self._y[self._n] = y
        self._sqn[self._n] = x @ x
        self._n += 1
        return True

    def _sq_distances(self, x: np.ndarray) -> np.ndarray:
        d2 = self._sqn[:self._n] - 2.0 * (self._x[:self._n] @ x) + x @ x
        return d2

    def nearest(self, x: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
        """The n stored evaluations nearest to x, ordered by distance with
        exact ties broken by insertion order. Returns the whole store when it
        holds fewer than n points."""
        if self._n == 0:
            raise RuntimeError("evaluation store is empty")
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dimension,):
            raise ValueError(f"expected shape ({self.dimension},), got {x.shape}")
        n = min(n, self._n)
        d2 = self._sq_distances(x)
        if n == self._n:
            cand = np.arange(self._n)
        else:
            part = np.argpartition(d2, n - 1)[:n]
            # pull in every point tied with the current cutoff so ties resolve
            # by insertion order, not by partition internals
            cand = np.flatnonzero(d2 <= d2[part].max())
        order = cand[np.lexsort((cand, d2[cand]))][:n]
        return self._x[order].copy(), self._y[order].copy()

    def save_csv(self, path) -> None:
        with open(path, "w") as fh:
            cols = [f"x_{i + 1}" for i in range(self.dimension)] + ["y"]
            fh.write(",".join(cols) + "\n")
            for i in range(self._n):
                row = [repr(float(v)) for v in self._x[i]]
                row.append(repr(float(self._y[i])))
                fh.write(",".join(row) + "\n")

    @classmethod
    def load_csv(cls, path) -> "EvaluationStore":
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            if header[-1] != "y" or len(header) < 2:
                raise ValueError(f"{path}: not an evaluation-store file")
            d = len(header) - 1
            store = cls(d)
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                vals = [float(v) for v in line.split(",")]
                if len(vals) != d + 1:
                    raise ValueError(f"{path}: row with {len(vals)} fields, "
                                     f"expected {d + 1}")
                store.insert(np.array(vals[:d]), vals[d])
        return store


def nearest_neighbors(store: EvaluationStore, x: np.ndarray,
                      n: int) -> tuple[np.ndarray, np.ndarray]:
    return store.nearest(x, n)


def _design(Z: np.ndarray, degree: int) -> np.ndarray:
    n, d = Z.shape
    if degree == 0:
        return np.ones((n, 1))
    if degree == 1:
        return np.hstack([np.ones((n, 1)), Z])
    if d not in _TRIU_CACHE:
        _TRIU_CACHE[d] = np.triu_indices(d)
    ii, jj = _TRIU_CACHE[d]
    return np.hstack([np.ones((n, 1)), Z, Z[:, ii] * Z[:, jj]])


def _n_terms(d: int, degree: int) -> int:
    if degree == 0:
        return 1
    if degree == 1:
        return 1 + d
    return 1 + d + d * (d + 1) // 2


@dataclass
class QuadraticMean:
    """Polynomial trend fitted on standardized coordinates.

    degree is 2 when the full quadratic fit succeeded and drops to 1 or 0
    when the design was rank-deficient. Coefficients are stored in the
    standardized basis; ``coef`` maps them back to plain monomials
    [1, x_1..x_d, x_1^2, x_1 x_2, .., x_d^2] for inspection.
    """

    degree: int
    center: np.ndarray
    scale: np.ndarray
    scaled_coef: np.ndarray

    def __call__(self, X: np.ndarray) -> np.ndarray | float:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        Z = (np.atleast_2d(X) - self.center) / self.scale
        vals = _design(Z, self.degree) @ self.scaled_coef
        return float(vals[0]) if single else vals

    @property
    def coef(self) -> np.ndarray:
        """Coefficients over raw monomials, constant first."""
        d = self.center.size
        c, s, q = self.center, self.scale, self.scaled_coef
        out = np.zeros(_n_terms(d, self.degree))
        out[0] = q[0]
        if self.degree >= 1:
            for i in range(d):
                out[0] += q[1 + i] * (-c[i] / s[i])
                out[1 + i] += q[1 + i] / s[i]
        if self.degree == 2:
            ii, jj = np.triu_indices(d)
            for k, (i, j) in enumerate(zip(ii, jj)):
                w = q[1 + d + k] / (s[i] * s[j])
                out[0] += w * c[i] * c[j]
                out[1 + i] -= w * c[j]
                out[1 + j] -= w * c[i]
                out[1 + d + k] += w
        return out


def fit_quadratic_mean(X: np.ndarray, y: np.ndarray) -> QuadraticMean:
    """Least-squares polynomial trend with automatic degree reduction.

    Tries the full quadratic basis first and falls back to linear and then
    to a constant whenever the support is too small or the (standardized)
    design is rank-deficient, so the fit always succeeds.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if y.shape != (n,):
        raise ValueError("X and y lengths differ")
    if n < 1:
        raise ValueError("cannot fit a trend to an empty support")
    center = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - center) / scale
    for degree in (2, 1, 0):
        nb = _n_terms(d, degree)
        if n < nb:
            continue
        B = _design(Z, degree)
        coef, _, rank, _ = np.linalg.lstsq(B, y, rcond=None)
        if rank == nb:
            return QuadraticMean(degree, center, scale, coef)
    # constant basis is always full rank; only reachable if n >= 1 failed above
    return QuadraticMean(0, center, scale, np.array([y.mean()]))


def _chol_with_jitter(corr: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky factor of corr + jitter*I, escalating jitter tenfold from
    1e-10 to 1e-4 before giving up. The matrix has unit diagonal, so these
    levels are relative to the kernel amplitude after scaling."""
    jitter = JITTER_START
    eye = np.eye(corr.shape[0])
    while jitter <= JITTER_MAX * (1 + 1e-9):
        try:
            return np.linalg.cholesky(corr + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise SurrogateError(
        f"correlation matrix of size {corr.shape[0]} not positive definite "
        f"even with jitter {JITTER_MAX}")


def calibrate_amplitude(residuals: np.ndarray, corr: np.ndarray) -> float:
    """Closed-form amplitude a = r' C^{-1} r / n, floored at 1e-12."""
    r = np.asarray(residuals, dtype=float)
    L, _ = _chol_with_jitter(np.asarray(corr, dtype=float))
    alpha = cho_solve((L, True), r, check_finite=False)
    return max(float(r @ alpha) / r.size, AMPLITUDE_FLOOR)


def _profile_loglik(X: np.ndarray, r: np.ndarray, lengths: np.ndarray,
                    p: int) -> float:
    """Marginal log likelihood of the residuals with the amplitude profiled
    out, up to constants: -n log(r' C^{-1} r / n) - log det C."""
    n = r.size
    try:
        L, _ = _chol_with_jitter(_corr_matrix(X, lengths, p))
    except SurrogateError:
        return -math.inf
    alpha = cho_solve((L, True), r, check_finite=False)
    a_hat = max(float(r @ alpha) / n, AMPLITUDE_FLOOR)
    logdet = 2.0 * float(np.log(np.diag(L)).sum())
    return -n * math.log(a_hat) - logdet


def calibrate_lengthscales(X: np.ndarray, y: np.ndarray, p: int,
                           grid_size: int = 13,
                           span: tuple[float, float] = (0.01, 100.0),
                           sweeps: int = 2) -> np.ndarray:
    """Lengthscales from the initial design by coordinate-wise grid search.

    Each coordinate gets a log-spaced grid spanning span[0]..span[1] times
    its data standard deviation. Starting from the grid centers, coordinates
    are optimized one at a time against the profile marginal likelihood of
    the trend residuals, with the number of full sweeps fixed rather than
    iterated to convergence. Degenerate data with no residual signal falls
    back to the per-coordinate data ranges.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n < 2:
        raise ValueError("need at least two points to calibrate lengthscales")
    mean = fit_quadratic_mean(X, y)
    r = y - mean(X)
    if np.max(np.abs(r)) <= 1e-12 * max(1.0, float(np.max(np.abs(y)))):
        ranges = X.max(axis=0) - X.min(axis=0)
        ranges[ranges <= 0] = 1.0
        return ranges
    std = X.std(axis=0)
    std[std <= 0] = 1.0
    grids = [np.geomspace(span[0] * s, span[1] * s, grid_size) for s in std]
    lengths = np.array([g[grid_size // 2] for g in grids])
    best = _profile_loglik(X, r, lengths, p)
    for _ in range(sweeps):
        for j in range(d):
            for cand in grids[j]:
                trial = lengths.copy()
                trial[j] = cand
                ll = _profile_loglik(X, r, trial, p)
                if ll > best:
                    best, lengths = ll, trial
    return lengths


@dataclass
class LocalGP:
    """One local kriging model, ready for posterior evaluation.

    Holds the support set, the fitted trend, the calibrated kernel, the
    Cholesky factor of the jittered unit-amplitude correlation matrix, and
    the precomputed weight vector alpha = C^{-1} (y - trend)."""

    X: np.ndarray
    y: np.ndarray
    mean: Callable
    params: KernelParams
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float

    def posterior(self, x: np.ndarray) -> tuple[float, float]:
        """Posterior mean and variance at a single point."""
        c = _corr_vec(self.X, np.asarray(x, dtype=float),
                      self.params.lengths, self.params.p)
        w = cho_solve((self.chol, True), c, check_finite=False)
        mu = float(self.mean(x)) + float(c @ self.alpha)
        var = self.params.a * (1.0 - float(c @ w))
        return mu, max(var, 0.0)


def gp_posterior(gp: LocalGP, x: np.ndarray) -> tuple[float, float]:
    return gp.posterior(x)


def build_local_surrogate(store: EvaluationStore, x: np.ndarray,
                          lengths: np.ndarray, p: int,
                          n: int | None = None) -> LocalGP:
    """Local model at x from its nearest stored evaluations.

    Uses local_size(d) support points by default (the whole store when it is
    smaller), fits the trend, recalibrates the amplitude in closed form from
    the trend residuals, and factors the correlation matrix once so posterior
    queries are two triangular solves. Raises SurrogateError when the
    correlation matrix cannot be factored at the maximum jitter; callers fall
    back to the true model in that case.
    """
    x = np.asarray(x, dtype=float)
    if store.size == 0:
        raise SurrogateError("evaluation store is empty; no surrogate support")
    if n is None:
        n = local_size(store.dimension)
    Xs, ys = store.nearest(x, n)
    mean = fit_quadratic_mean(Xs, ys)
    r = ys - mean(Xs)
    corr = _corr_matrix(Xs, np.asarray(lengths, dtype=float), p)
    L, jitter = _chol_with_jitter(corr)
    alpha = cho_solve((L, True), r, check_finite=False)
    a = max(float(r @ alpha) / r.size, AMPLITUDE_FLOOR)
    params = KernelParams(a=a, lengths=lengths, p=p)
    return LocalGP(X=Xs, y=ys, mean=mean, params=params, chol=L,
                   alpha=alpha, jitter=jitter)
