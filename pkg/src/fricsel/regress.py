"""Wide-model and submodel least-squares machinery.

Blocked second-moment geometry for every covariate subset: the building
blocks every scoring module consumes.  All solves go through orthogonal (QR)
decompositions; explicit normal-equation inverses appear only where the
downstream formulas need the matrix itself (``Sigma_n_inv``).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import RankDeficient, SingularSubmodel, TooFewRows, TooManySubsets

RCOND_MIN = 1e-12  # reciprocal-condition threshold below which we refuse to fit
MAX_FREE_DEFAULT = 24  # exhaustive enumeration guardrail (2^24 subsets)


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Design matrix with named columns, response vector, and forced-in mask.

    Column 0 is the all-ones intercept by convention (and must then be
    forced).  Construction validates shapes, finiteness, n > p >= 1, and full
    column rank.
    """

    X: np.ndarray
    y: np.ndarray
    names: tuple[str, ...]
    forced: np.ndarray

    def __post_init__(self):
        X = _readonly(np.atleast_2d(self.X))
        y = _readonly(np.asarray(self.y, dtype=float).ravel())
        forced = np.array(self.forced, dtype=bool, copy=True)
        forced.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", tuple(str(s) for s in self.names))
        object.__setattr__(self, "forced", forced)

        n, p = X.shape
        if not (n > p >= 1):
            raise ValueError(f"need n > p >= 1, got n={n}, p={p}")
        if y.shape != (n,):
            raise ValueError("response length does not match design rows")
        if len(self.names) != p or forced.shape != (p,):
            raise ValueError("names and forced mask must have one entry per column")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("design and response must be finite")
        rdiag = np.abs(np.diag(np.linalg.qr(X, mode="r")))
        if rdiag.min() <= RCOND_MIN * rdiag.max():
            raise RankDeficient("design matrix is rank deficient")
        if np.all(X[:, 0] == 1.0) and not forced[0]:
            raise ValueError("the intercept column must be marked as forced")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class WideFit:
    """Ordinary least squares results for the model with all columns."""

    beta_hat: np.ndarray
    sigma2_hat: float  # unbiased, divisor m = n - p
    m: int
    Sigma_n: np.ndarray
    Sigma_n_inv: np.ndarray
    rss_wide: float

    def __post_init__(self):
        object.__setattr__(self, "beta_hat", _readonly(self.beta_hat))
        object.__setattr__(self, "Sigma_n", _readonly(self.Sigma_n))
        object.__setattr__(self, "Sigma_n_inv", _readonly(self.Sigma_n_inv))

    @property
    def p(self) -> int:
        return self.beta_hat.shape[0]

    @property
    def n(self) -> int:
        return self.m + self.p

    @property
    def sigma_hat(self) -> float:
        return float(np.sqrt(self.sigma2_hat))


@dataclass(frozen=True, eq=True)
class Subset:
    """A covariate subset, stored as a boolean in-or-out mask."""

    mask: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "mask", tuple(bool(b) for b in self.mask))
        if not any(self.mask):
            raise ValueError("a subset must contain at least one column")

    @classmethod
    def from_indices(cls, indices: Iterable[int], p: int) -> "Subset":
        mask = [False] * p
        for j in indices:
            mask[j] = True
        return cls(tuple(mask))

    @property
    def size(self) -> int:
        return sum(self.mask)

    @property
    def p(self) -> int:
        return len(self.mask)

    @property
    def key(self) -> int:
        """Canonical ordering key: the mask read as a little-endian integer."""
        return sum(1 << j for j, b in enumerate(self.mask) if b)

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.mask))

    @property
    def complement(self) -> np.ndarray:
        return np.flatnonzero(~np.asarray(self.mask))

    def is_full(self) -> bool:
        return all(self.mask)

    def contains(self, other: "Subset") -> bool:
        return all(b or not o for b, o in zip(self.mask, other.mask))

    def bits_string(self, skip: Sequence[int] = (0,)) -> str:
        """In-or-out string like ``\"0 1 0 1 0\"`` over columns not in ``skip``."""
        return " ".join(
            "1" if self.mask[j] else "0" for j in range(self.p) if j not in skip
        )


@dataclass(frozen=True)
class SubsetGeometry:
    """Blocked second-moment matrices and the OLS fit for one subset.

    ``Q`` is the inverse of the conditional block
    Sigma11 - Sigma10 Sigma00^{-1} Sigma01 (the submatrix of Sigma_n^{-1}
    belonging to the excluded columns); it has size (p - |S|) x (p - |S|)
    and dimension zero for the full subset.
    """

    subset: Subset
    Sigma00: np.ndarray
    Sigma01: np.ndarray
    Sigma11: np.ndarray
    Q: np.ndarray
    beta_hat_S: np.ndarray
    rss: float
    sigma2_mle: float

    def __post_init__(self):
        for name in ("Sigma00", "Sigma01", "Sigma11", "Q", "beta_hat_S"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))

    @property
    def q_inv(self) -> np.ndarray:
        """The conditional block itself, Sigma11 - Sigma10 Sigma00^{-1} Sigma01."""
        if self.Q.shape[0] == 0:
            return self.Q
        return self.Sigma11 - self.Sigma01.T @ np.linalg.solve(self.Sigma00, self.Sigma01)


def _qr_solve(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """Least squares via reduced QR; returns (beta_hat, rss)."""
    Q1, R = np.linalg.qr(X)
    beta = solve_triangular(R, Q1.T @ y, lower=False)
    resid = y - X @ beta
    return beta, float(resid @ resid)


def fit_wide(data: Dataset) -> WideFit:
    """Fit the wide model by orthogonal decomposition.

    Returns the coefficient vector, the unbiased residual variance (divisor
    m = n - p), and the second-moment matrix Sigma_n = X'X / n together with
    its explicit inverse (needed downstream for x0' Sigma_n^{-1} x0 terms).

    Raises
    ------
    RankDeficient
        If the triangular factor signals reciprocal condition below 1e-12.
    TooFewRows
        If n - p < 3; the finite-sample bias corrections degenerate at m <= 2.
    """
    n, p = data.X.shape
    m = n - p
    if m < 3:
        raise TooFewRows(f"need at least p + 3 rows, got n={n} for p={p}")

    Q1, R = np.linalg.qr(data.X)
    rdiag = np.abs(np.diag(R))
    if rdiag.min() <= RCOND_MIN * rdiag.max():
        raise RankDeficient("design matrix is rank deficient")

    beta = solve_triangular(R, Q1.T @ data.y, lower=False)
    resid = data.y - data.X @ beta
    rss = float(resid @ resid)

    Sigma_n = (R.T @ R) / n
    Rinv = solve_triangular(R, np.eye(p), lower=False)
    Sigma_n_inv = n * (Rinv @ Rinv.T)

    return WideFit(
        beta_hat=beta,
        sigma2_hat=rss / m,
        m=m,
        Sigma_n=Sigma_n,
        Sigma_n_inv=Sigma_n_inv,
        rss_wide=rss,
    )


def subset_geometry(fit: WideFit, data: Dataset, subset: Subset) -> SubsetGeometry:
    """Blocked geometry and submodel OLS fit for one subset.

    The blocks partition ``fit.Sigma_n`` into inside-S and outside-S parts;
    the submodel coefficients come from a fresh QR of the selected columns so
    the full subset reproduces the wide fit bit for bit.

    Raises
    ------
    SingularSubmodel
        If the inside-S block has reciprocal condition below 1e-12.
    """
    if subset.p != data.p:
        raise ValueError("subset length does not match the dataset")
    if not all(f <= s for f, s in zip(data.forced, subset.mask)):
        raise ValueError("subset drops a forced column")

    idx = subset.indices
    cdx = subset.complement
    S00 = fit.Sigma_n[np.ix_(idx, idx)]
    S01 = fit.Sigma_n[np.ix_(idx, cdx)]
    S11 = fit.Sigma_n[np.ix_(cdx, cdx)]

    sv = np.linalg.svd(S00, compute_uv=False)
    if sv.min() <= RCOND_MIN * sv.max():
        raise SingularSubmodel(
            "subset %s has a numerically singular moment block" % (subset.mask,)
        )

    if cdx.size:
        q_inv = S11 - S01.T @ np.linalg.solve(S00, S01)
        Q = np.linalg.inv(q_inv)
        Q = (Q + Q.T) / 2.0
    else:
        Q = np.empty((0, 0))

    beta_S, rss = _qr_solve(data.X[:, idx], data.y)
    return SubsetGeometry(
        subset=subset,
        Sigma00=S00,
        Sigma01=S01,
        Sigma11=S11,
        Q=Q,
        beta_hat_S=beta_S,
        rss=rss,
        sigma2_mle=rss / data.n,
    )


def hat_matrix(data: Dataset, subset: Subset) -> np.ndarray:
    """Projection (hat) matrix of the subset's columns, n x n.

    Verification use only; the scoring path never materializes it.
    """
    XS = data.X[:, subset.indices]
    sv = np.linalg.svd(XS, compute_uv=False)
    if sv.min() <= RCOND_MIN * sv.max():
        raise SingularSubmodel("subset columns are numerically dependent")
    Q1 = np.linalg.qr(XS)[0]
    return Q1 @ Q1.T


def enumerate_subsets(
    data: Dataset,
    screen: Callable[[Subset], bool] | None = None,
    max_free: int = MAX_FREE_DEFAULT,
) -> list[Subset]:
    """All subsets containing the forced columns, in canonical key order.

    Parameters
    ----------
    data : Dataset
        Supplies the column count and forced mask.
    screen : callable, optional
        Predicate applied to each candidate; subsets for which it returns
        False are dropped (hierarchy rules, initial screening, ...).
    max_free : int
        Guardrail on the number of free columns (default 24).

    Raises
    ------
    TooManySubsets
        If more than ``max_free`` columns are free.
    """
    free = [j for j in range(data.p) if not data.forced[j]]
    if len(free) > max_free:
        raise TooManySubsets(
            f"{len(free)} free columns exceed the guardrail of {max_free}"
        )
    base = [bool(f) for f in data.forced]
    out: list[Subset] = []
    for k in range(1 << len(free)):
        mask = list(base)
        for i, j in enumerate(free):
            if (k >> i) & 1:
                mask[j] = True
        if not any(mask):
            continue
        s = Subset(tuple(mask))
        if screen is None or screen(s):
            out.append(s)
    out.sort(key=lambda s: s.key)
    return out
