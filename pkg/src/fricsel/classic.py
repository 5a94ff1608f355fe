"""Classic selection criteria and their documented equivalences.

AIC (exact Gaussian profile form), its Taylor approximation with the wide
residual variance plugged in, and the Mallows statistic.  Additive constants
common to all submodels are dropped throughout: only score differences
matter for ranking.  Sign conventions: the AIC variants are
higher-is-better, Mallows is lower-is-better.

Also houses the diagonal-design fast path: when the covariate second-moment
matrix is diagonal, the averaged-risk objective separates across columns and
the exhaustive argmin collapses to a per-column threshold rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NotDiagonal
from .regress import Dataset, Subset, SubsetGeometry, WideFit, hat_matrix

DIAG_TOL = 1e-10


@dataclass(frozen=True)
class ClassicScores:
    """Classic criterion values for one subset.

    ``aic`` is -2n log(sigma_mle_S) - 2|S|; ``aic_star`` the Taylor variant
    -rss(S)/sigma2_wide_mle - 2|S| (both higher-is-better, constants
    dropped); ``mallows`` is rss(S)/sigma2 - n + 2|S| (lower-is-better),
    equal to p exactly for the wide model when the unbiased variance is used.
    """

    subset: Subset
    aic: float
    aic_star: float
    mallows: float


def classic_scores(
    fit: WideFit,
    data: Dataset,
    geoms: Iterable[SubsetGeometry],
    variance: str = "unbiased",
) -> list[ClassicScores]:
    """AIC, approximate AIC, and Mallows scores for the given geometries.

    Parameters
    ----------
    variance : str
        Denominator variance for Mallows: ``"unbiased"`` (divisor n - p,
        the traditional choice, giving M_wide = p exactly) or ``"mle"``
        (divisor n, making the ranking the exact mirror of ``aic_star``).
    """
    if variance not in ("unbiased", "mle"):
        raise ValueError("variance must be 'unbiased' or 'mle'")
    n = data.n
    sigma2_mle_wide = fit.rss_wide / n
    sigma2 = fit.sigma2_hat if variance == "unbiased" else sigma2_mle_wide

    out = []
    for geom in geoms:
        k = geom.subset.size
        aic = -2.0 * n * math.log(math.sqrt(geom.sigma2_mle)) - 2.0 * k
        aic_star = -geom.rss / sigma2_mle_wide - 2.0 * k
        mallows = geom.rss / sigma2 - n + 2.0 * k
        out.append(ClassicScores(geom.subset, aic, aic_star, mallows))
    return out


@dataclass(frozen=True)
class MallowsMean:
    """Population mean of the known-variance Mallows variable.

    Both routes compute the same number: ``gamma_route`` through the blocked
    conditional moment matrix, ``projection_route`` through the submodel hat
    matrix acting on the omitted mean component.  Their agreement is the
    matrix identity the verification suite checks.
    """

    subset: Subset
    gamma: float
    phi: float

    @property
    def gamma_route(self) -> float:
        return self.subset.size + self.gamma

    @property
    def projection_route(self) -> float:
        return self.subset.size + self.phi

    @property
    def value(self) -> float:
        return self.gamma_route


def mallows_population_mean(
    data: Dataset, subset: Subset, beta: np.ndarray, sigma: float
) -> MallowsMean:
    """Exact mean |S| + gamma_S of rss(S)/sigma^2 - n + 2|S| at known truth.

    ``gamma_S = n beta_c' Q_S^{-1} beta_c / sigma^2`` with beta_c the omitted
    coefficients; the hat-matrix route ``phi_S = b'(I - H_S)b / sigma^2``
    with b = X_c beta_c is exposed alongside for the cross-check.
    """
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape != (data.p,):
        raise ValueError("beta must have one entry per column")
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    idx, cdx = subset.indices, subset.complement
    n = data.n
    if cdx.size == 0:
        return MallowsMean(subset, 0.0, 0.0)

    Sigma_n = data.X.T @ data.X / n
    S00 = Sigma_n[np.ix_(idx, idx)]
    S01 = Sigma_n[np.ix_(idx, cdx)]
    S11 = Sigma_n[np.ix_(cdx, cdx)]
    q_inv = S11 - S01.T @ np.linalg.solve(S00, S01)
    beta_c = beta[cdx]
    gamma = n * float(beta_c @ q_inv @ beta_c) / sigma**2

    b = data.X[:, cdx] @ beta_c
    H = hat_matrix(data, subset)
    phi = float(b @ (b - H @ b)) / sigma**2
    return MallowsMean(subset, gamma, phi)


def _check_diagonal(Sigma_n: np.ndarray) -> np.ndarray:
    d = np.diag(Sigma_n)
    off = Sigma_n - np.diag(d)
    scale = np.abs(d).max()
    if np.abs(off).max() > DIAG_TOL * scale:
        raise NotDiagonal("covariate second-moment matrix is not diagonal")
    return d


def column_inclusion_stats(fit: WideFit) -> np.ndarray:
    """Per-column inclusion statistics for a diagonal design.

    Returns ``phi_j = (m-2)/m * n * d_j * beta_j^2 / sigma2_hat - 1``, the
    exact numerator contribution of leaving column j out of a submodel in
    the separable averaged-risk objective (d_j the diagonal second moment).
    Column j earns its place iff ``phi_j > 1``, i.e. iff its standardized
    squared coefficient exceeds 2m/(m-2) = 2 + 4/(m-2).
    """
    d = _check_diagonal(fit.Sigma_n)
    m = fit.m
    t = fit.n * d * fit.beta_hat**2 / fit.sigma2_hat
    return (m - 2.0) / m * t - 1.0


def diagonal_fast_winner(fit: WideFit, data: Dataset) -> Subset:
    """Best subset under a diagonal design, without enumeration.

    Keeps the forced columns and every free column whose inclusion statistic
    exceeds one.  On diagonal designs this equals the exhaustive argmin of
    the averaged risk score exactly, and likewise the argmin of the
    separable per-column relative-risk objective for any focus vector (see
    :func:`diagonal_fric_scores`).

    Raises
    ------
    NotDiagonal
        If any off-diagonal entry of Sigma_n exceeds 1e-10 relative to the
        diagonal scale.
    """
    phi = column_inclusion_stats(fit)
    mask = [bool(data.forced[j]) or phi[j] > 1.0 for j in range(data.p)]
    if not any(mask):
        mask[int(np.argmax(phi))] = True  # degenerate: keep the strongest column
    return Subset(tuple(mask))


def diagonal_fric_scores(
    fit: WideFit, x0: np.ndarray, subsets: Sequence[Subset]
) -> list[float]:
    """Separable per-column relative-risk scores on a diagonal design.

    For diagonal Sigma_n the focused squared-bias statistic decomposes
    column by column, and the unbiased score of subset S reduces to

        sum_j c_j^2 * [ 1{j in S} + phi_j * 1{j not in S} ] / sum_j c_j^2,

    with weights ``c_j^2 = x0_j^2 / d_j`` and the inclusion statistics of
    :func:`column_inclusion_stats`.  Its argmin over all subsets is the fast
    winner, independently of x0.  (With a non-diagonal design, or scored by
    the generic non-separable bias statistic, no such reduction holds.)
    """
    d = _check_diagonal(fit.Sigma_n)
    phi = column_inclusion_stats(fit)
    x0 = np.asarray(x0, dtype=float).ravel()
    c2 = x0**2 / d
    denom = float(c2.sum())
    out = []
    for subset in subsets:
        s = np.asarray(subset.mask)
        out.append(float(np.sum(c2 * np.where(s, 1.0, phi))) / denom)
    return out
