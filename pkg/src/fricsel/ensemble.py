"""Averaged relative-risk scoring over a weighted ensemble of focus vectors.

Where the focused module scores submodels for one covariate vector, this one
averages the squared-error loss over a whole collection of vectors with
importance weights.  The special case "every data row, equal weight" turns
the machinery into an overall variable-selection criterion with closed-form
geometry (the averaged variance factors collapse to |S| and p, and the
bias-variance matrix collapses to the conditional moment block), and it is
the only case with an exact confidence distribution for the averaged risk
ratio; explicit ensembles get point scores only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import UnsupportedEnsemble
from .focus import ConfidenceDistribution
from .regress import Dataset, Subset, SubsetGeometry, WideFit, subset_geometry

EQUAL_ROWS = "all_rows_equal"
EXPLICIT = "explicit"


@dataclass(frozen=True)
class FocusEnsemble:
    """Covariate vectors of interest with importance weights.

    ``kind`` is ``all_rows_equal`` only when the points are exactly the
    dataset rows with weight 1/n each; any other collection (strata, custom
    grids, single points) is ``explicit``.  Weights need not sum to one: all
    scores are ratios, so a common rescaling cancels.
    """

    points: np.ndarray
    weights: np.ndarray
    kind: str

    def __post_init__(self):
        pts = np.array(np.atleast_2d(self.points), dtype=float, copy=True)
        w = np.array(self.weights, dtype=float, copy=True).ravel()
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        if pts.shape[0] == 0:
            raise ValueError("ensemble must contain at least one point")
        if w.shape != (pts.shape[0],):
            raise ValueError("one weight per point required")
        if not (np.isfinite(pts).all() and np.isfinite(w).all()):
            raise ValueError("points and weights must be finite")
        if np.any(w <= 0.0):
            raise ValueError("weights must be positive")
        if self.kind not in (EQUAL_ROWS, EXPLICIT):
            raise ValueError(f"unknown ensemble kind: {self.kind!r}")

    @classmethod
    def all_rows(cls, data: Dataset) -> "FocusEnsemble":
        """Every data row, weight 1/n: the neutral overall-selection case."""
        n = data.n
        return cls(points=data.X, weights=np.full(n, 1.0 / n), kind=EQUAL_ROWS)

    @classmethod
    def from_points(cls, points, weights=None) -> "FocusEnsemble":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if weights is None:
            weights = np.full(pts.shape[0], 1.0)
        return cls(points=pts, weights=np.asarray(weights, dtype=float), kind=EXPLICIT)

    @classmethod
    def from_predicate(
        cls, data: Dataset, predicate: Callable[[np.ndarray], bool]
    ) -> "FocusEnsemble":
        """Stratum ensemble: the data rows satisfying ``predicate``, weights
        1/|stratum|.  Flagged explicit, so no exact confidence distribution."""
        keep = np.array([bool(predicate(row)) for row in data.X])
        if not keep.any():
            raise ValueError("predicate selects no rows")
        pts = data.X[keep]
        return cls(points=pts, weights=np.full(pts.shape[0], 1.0 / pts.shape[0]), kind=EXPLICIT)

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class EnsembleGeometry:
    """Averaged geometry of one subset under a focus ensemble.

    ``A`` is the weighted outer-product matrix of the per-point bias
    directions; ``gamma_tilde`` the observed standardized quadratic bias
    statistic; ``trAQ`` its geometry-induced mean inflation.  For the
    equal-rows ensemble the closed forms hold exactly:
    denom = p, num_var = |S|, A = (conditional moment block), trAQ = p - |S|.
    """

    subset: Subset
    A: np.ndarray
    denom: float
    num_var: float
    gamma_tilde: float
    trAQ: float
    equal_weights: bool

    def __post_init__(self):
        A = np.array(self.A, dtype=float, copy=True)
        A.setflags(write=False)
        object.__setattr__(self, "A", A)


def ensemble_geometry(
    fit: WideFit, geom: SubsetGeometry, ens: FocusEnsemble
) -> EnsembleGeometry:
    """Averaged variance factors and the quadratic bias statistic for one subset.

    For the equal-rows ensemble the exact closed forms replace the explicit
    sums (which the test suite cross-checks against direct summation); for
    explicit ensembles everything is accumulated point by point.
    """
    subset = geom.subset
    if subset.is_full():
        raise ValueError("ensemble geometry is defined for proper subsets only")
    idx, cdx = subset.indices, subset.complement
    n = fit.n
    beta_c = fit.beta_hat[cdx]

    if ens.kind == EQUAL_ROWS:
        A = geom.q_inv
        denom = float(fit.p)
        num_var = float(subset.size)
        trAQ = float(fit.p - subset.size)
    else:
        xS = ens.points[:, idx]
        xC = ens.points[:, cdx]
        t = np.linalg.solve(geom.Sigma00, xS.T)  # (|S|, k)
        omegas = geom.Sigma01.T @ t - xC.T  # (|S^c|, k)
        A = (omegas * ens.weights) @ omegas.T
        denom = float(np.einsum("ij,jk,ik,i->", ens.points, fit.Sigma_n_inv, ens.points, ens.weights))
        num_var = float(np.einsum("ki,ik,k->", xS, t, ens.weights))
        trAQ = float(np.trace(A @ geom.Q))

    gamma_tilde = n * float(beta_c @ A @ beta_c) / fit.sigma2_hat
    return EnsembleGeometry(
        subset=subset,
        A=A,
        denom=denom,
        num_var=num_var,
        gamma_tilde=gamma_tilde,
        trAQ=trAQ,
        equal_weights=ens.kind == EQUAL_ROWS,
    )


def afric_scores(eg: EnsembleGeometry, m: int) -> tuple[float, float]:
    """Unbiased and truncated averaged relative-risk scores.

    The quadratic bias parameter gamma is estimated by
    ``(m-2)/m * gamma_tilde - trAQ`` (exactly unbiased under the wide model);
    the truncated variant clips negative estimates to zero.  In the
    equal-rows case the unbiased score reduces to
    ``(|S| + (m-2)/m * gamma_tilde - (p - |S|)) / p``.
    """
    if m < 3:
        raise ValueError("need m >= 3 residual degrees of freedom")
    shrunk = (m - 2.0) / m * eg.gamma_tilde
    gamma_u = shrunk - eg.trAQ
    gamma_t = max(shrunk - eg.trAQ, 0.0)
    return (eg.num_var + gamma_u) / eg.denom, (eg.num_var + gamma_t) / eg.denom


def afric_confidence(eg: EnsembleGeometry, p: int, m: int) -> ConfidenceDistribution:
    """Exact confidence distribution of risk_S / risk_wide, equal weights only.

    The statistic gamma_tilde is an exact pivot: divided by p - |S| it
    follows a noncentral F(p-|S|, m) law with noncentrality gamma, and the
    averaged risk ratio is (|S| + gamma)/p, so the noncentrality is affine
    in the risk ratio with slope p and offset -|S|.  The distribution starts
    at rr_min = |S|/p with pointmass one minus the central F CDF of the
    scaled statistic.

    Raises
    ------
    UnsupportedEnsemble
        For explicit ensembles: the general quadratic-form statistic has no
        clean noncentral-F law, and we refuse to fake exactness.
    """
    if not eg.equal_weights:
        raise UnsupportedEnsemble(
            "exact confidence distributions require the equal-weights ensemble"
        )
    k = eg.subset.size
    if k >= p:
        raise ValueError("confidence distribution is defined for proper subsets")
    return ConfidenceDistribution(
        kind="afric",
        d1=p - k,
        m=m,
        stat_obs=eg.gamma_tilde,
        rr_min=k / p,
        ncp_slope=float(p),
        ncp_offset=-float(k),
    )


@dataclass(frozen=True)
class AfricRow:
    """One submodel's entry in the averaged ranking table.

    ``afric_median`` and ``conf`` are available only under the equal-weights
    ensemble (``None`` otherwise, and for the wide row).
    """

    subset: Subset
    afric_u: float
    afric_t: float
    afric_median: float | None
    conf: float | None


def afric_table(
    fit: WideFit,
    data: Dataset,
    ens: FocusEnsemble,
    subsets: Sequence[Subset],
) -> list[AfricRow]:
    """Averaged ranking table, ascending by the truncated score.

    The wide row is pinned at one.  Ties break on the canonical subset key.
    """
    rows: list[AfricRow] = []
    for subset in subsets:
        if subset.is_full():
            median = 1.0 if ens.kind == EQUAL_ROWS else None
            rows.append(AfricRow(subset, 1.0, 1.0, median, None))
            continue
        geom = subset_geometry(fit, data, subset)
        eg = ensemble_geometry(fit, geom, ens)
        a_u, a_t = afric_scores(eg, fit.m)
        if eg.equal_weights:
            cd = afric_confidence(eg, fit.p, fit.m)
            rows.append(AfricRow(subset, a_u, a_t, cd.quantile(0.5), cd.conf()))
        else:
            rows.append(AfricRow(subset, a_u, a_t, None, None))
    rows.sort(key=lambda r: (r.afric_t, r.subset.key))
    return rows
