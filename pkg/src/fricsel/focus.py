"""Focused relative-risk scoring for a single covariate vector of interest.

For a focus vector x0 and each covariate subset S this module produces the
point estimate of E(Y | x0), exact relative-risk scores against the wide
model (FRIC, in unbiased / truncated / median-confidence variants), the
exact confidence distribution of the risk ratio, and the confidence that the
submodel beats the wide model.  The wide model itself gets a confidence
curve for the root mean squared error of its focus estimate.

Risk ratios are mse_S / mse_wide; values below one mean the submodel is the
better estimator of E(Y | x0).  Every ratio is bounded below by the
observable variance ratio ``rr_min``, and the confidence distributions carry
a pointmass there because the squared-bias component cannot be negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import ncdist
from .regress import Dataset, Subset, SubsetGeometry, WideFit, subset_geometry

DEGENERATE_REL_TOL = 1e-14
IDENTITY_REL_TOL = 1e-8  # runtime guard for the variance-split identity


@dataclass(frozen=True)
class FocusGeometry:
    """Subset-specific geometry of one focus vector.

    ``omega`` is the bias-direction vector of the excluded columns: the
    submodel estimator of x0'beta has bias omega' beta_excluded.  The split
    ``v_wide = v_sub + wQw`` (wide variance factor = submodel variance factor
    + bias-variance factor) is asserted at construction.  ``kappa_hat`` is
    the standardized bias estimate whose square follows a noncentral
    F(1, m) law exactly.
    """

    subset: Subset
    omega: np.ndarray
    wQw: float
    v_wide: float
    v_sub: float
    rr_min: float
    kappa_hat: float
    mu_hat: float
    degenerate: bool

    @property
    def kappa_hat_sq(self) -> float:
        return self.kappa_hat * self.kappa_hat


def focus_geometry(fit: WideFit, geom: SubsetGeometry, x0: np.ndarray) -> FocusGeometry:
    """Bias direction, variance factors, and standardized bias for one subset.

    Parameters
    ----------
    fit : WideFit
        The wide-model fit the geometry was built from.
    geom : SubsetGeometry
        Blocked geometry of a proper subset (|S| < p).
    x0 : ndarray
        Focus covariate vector, length p, same column order as the dataset.

    Returns
    -------
    FocusGeometry
        With ``degenerate=True`` when the bias-variance factor wQw vanishes
        relative to v_wide: the submodel estimator is then provably unbiased
        for this focus and the risk ratio equals rr_min deterministically.
    """
    subset = geom.subset
    if subset.is_full():
        raise ValueError("focus geometry is defined for proper subsets only")
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.shape != (fit.p,):
        raise ValueError("focus vector length must equal the column count")

    idx, cdx = subset.indices, subset.complement
    x0S, x0C = x0[idx], x0[cdx]
    t = np.linalg.solve(geom.Sigma00, x0S)
    omega = geom.Sigma01.T @ t - x0C
    wQw = float(omega @ geom.Q @ omega)
    v_sub = float(x0S @ t)
    v_wide = float(x0 @ fit.Sigma_n_inv @ x0)
    mu_hat = float(x0S @ geom.beta_hat_S)

    rel_gap = abs(v_wide - v_sub - wQw) / max(v_wide, 1e-300)
    if rel_gap > IDENTITY_REL_TOL:
        raise ArithmeticError(
            "variance-split identity violated (relative gap %.3g)" % rel_gap
        )

    if wQw <= DEGENERATE_REL_TOL * v_wide:
        return FocusGeometry(
            subset=subset,
            omega=omega,
            wQw=wQw,
            v_wide=v_wide,
            v_sub=v_sub,
            rr_min=min(v_sub / v_wide, 1.0),
            kappa_hat=0.0,
            mu_hat=mu_hat,
            degenerate=True,
        )

    n = fit.n
    kappa_hat = (
        math.sqrt(n) * float(omega @ fit.beta_hat[cdx]) / math.sqrt(wQw) / fit.sigma_hat
    )
    return FocusGeometry(
        subset=subset,
        omega=omega,
        wQw=wQw,
        v_wide=v_wide,
        v_sub=v_sub,
        rr_min=v_sub / v_wide,
        kappa_hat=kappa_hat,
        mu_hat=mu_hat,
        degenerate=False,
    )


def fric_scores(fg: FocusGeometry, m: int) -> tuple[float, float]:
    """Unbiased and truncated relative-risk scores for one subset.

    The squared standardized bias is estimated by ``(m-2)/m * kappa_hat^2 - 1``,
    which is exactly unbiased for kappa^2 under the wide model; the truncated
    variant clips a negative estimate of this nonnegative quantity to zero,
    so the truncated score never falls below ``rr_min``.

    Returns
    -------
    (fric_u, fric_t) : tuple of float
        For a degenerate focus direction both equal ``rr_min``.
    """
    if m < 3:
        raise ValueError("need m >= 3 residual degrees of freedom")
    if fg.degenerate:
        return fg.rr_min, fg.rr_min
    correction = (m - 2.0) / m * fg.kappa_hat_sq - 1.0
    fric_u = (fg.v_sub + fg.wQw * correction) / fg.v_wide
    fric_t = (fg.v_sub + fg.wQw * max(correction, 0.0)) / fg.v_wide
    return fric_u, fric_t


@dataclass(frozen=True)
class ConfidenceDistribution:
    """Exact confidence distribution of a relative risk.

    The distribution lives on ``[rr_min, inf)`` with a pointmass at
    ``rr_min``; above it,

        C(rr) = 1 - ncF_cdf(stat_obs / d1_scale; d1, m; ncp(rr)),

    where the noncentrality is affine in the risk ratio,
    ``ncp(rr) = ncp_slope * rr + ncp_offset``, vanishing exactly at
    ``rr_min``.  ``kind`` is one of ``focused`` (d1 = 1, statistic = observed
    kappa_hat^2), ``afric`` (d1 = p - |S|, statistic = observed gamma_tilde),
    or ``degenerate`` (unit step at rr_min).
    """

    kind: str
    d1: int
    m: int
    stat_obs: float
    rr_min: float
    ncp_slope: float
    ncp_offset: float

    @property
    def f_stat(self) -> float:
        """The observed statistic on the F(d1, m) scale."""
        return self.stat_obs / self.d1

    def ncp_at(self, rr: float) -> float:
        return max(self.ncp_slope * rr + self.ncp_offset, 0.0)

    def pointmass(self) -> float:
        """Confidence mass sitting on the minimal risk ratio."""
        if self.kind == "degenerate":
            return 1.0
        return 1.0 - ncdist.f_cdf(self.f_stat, self.d1, self.m)

    def evaluate(self, rr) -> float | np.ndarray:
        """C(rr); 0 below rr_min, right-continuous, tending to 1."""
        scalar = np.isscalar(rr)
        rrs = np.atleast_1d(np.asarray(rr, dtype=float))
        out = np.zeros_like(rrs)
        if self.kind == "degenerate":
            out[rrs >= self.rr_min] = 1.0
        else:
            for i, r in enumerate(rrs):
                if r < self.rr_min:
                    continue
                out[i] = 1.0 - ncdist.noncentral_f_cdf(
                    self.f_stat, self.d1, self.m, self.ncp_at(r)
                )
        return float(out[0]) if scalar else out

    def quantile(self, level: float) -> float:
        """Smallest rr >= rr_min with C(rr) >= level.

        Levels at or below the pointmass return ``rr_min``; above it the
        affine noncentrality map reduces the search to a monotone bracketed
        root solve in the noncentrality parameter.
        """
        if not 0.0 < level < 1.0:
            raise ValueError("level must lie strictly in (0, 1)")
        if self.kind == "degenerate" or level <= self.pointmass():
            return self.rr_min
        ncp = ncdist.invert_ncp(1.0 - level, self.f_stat, self.d1, self.m)
        return (ncp - self.ncp_offset) / self.ncp_slope

    def conf(self) -> float:
        """Confidence that the submodel beats the wide model: C(1)."""
        return float(self.evaluate(1.0))


def confidence_distribution(fg: FocusGeometry, m: int) -> ConfidenceDistribution:
    """Exact confidence distribution of mse_S / mse_wide for one subset.

    The observed squared standardized bias follows a noncentral F(1, m) law
    whose noncentrality is an affine function of the risk ratio; inverting
    the upper-tail probability at the observed statistic yields a
    distribution that is exact at every level, including the pointmass at
    ``rr_min`` (equal to one minus the central F CDF at the statistic).
    """
    if fg.degenerate:
        return ConfidenceDistribution(
            kind="degenerate",
            d1=1,
            m=m,
            stat_obs=0.0,
            rr_min=fg.rr_min,
            ncp_slope=1.0,
            ncp_offset=-fg.rr_min,
        )
    return ConfidenceDistribution(
        kind="focused",
        d1=1,
        m=m,
        stat_obs=fg.kappa_hat_sq,
        rr_min=fg.rr_min,
        ncp_slope=fg.v_wide / fg.wQw,
        ncp_offset=-fg.v_sub / fg.wQw,
    )


def median_fric(cd: ConfidenceDistribution) -> float:
    """Median-confidence risk-ratio estimate, C^{-1}(0.50).

    Equals ``rr_min`` whenever the pointmass already reaches one half; this
    variant sidesteps the truncate-to-zero decision entirely.
    """
    return cd.quantile(0.5)


@dataclass(frozen=True)
class ScoreRow:
    """One submodel's entry in a focused ranking table.

    ``conf`` and ``rr_interval`` are ``None`` for the wide model (its risk
    ratio is identically one).  ``mu_interval`` is the submodel-native
    t-based interval for the focus mean, using that submodel's own unbiased
    variance estimate; it ignores submodel bias by construction.
    """

    subset: Subset
    mu_hat: float
    fric_u: float
    fric_t: float
    fric_median: float
    conf: float | None
    rr_min: float
    rr_interval: tuple[float, float] | None
    mu_interval: tuple[float, float]


def _mu_interval(
    data: Dataset, geom: SubsetGeometry, v_sub: float, mu_hat: float, level: float
) -> tuple[float, float]:
    n = data.n
    df = n - geom.subset.size
    sigma2_unb = geom.rss / df
    se = math.sqrt(sigma2_unb * v_sub / n)
    tq = ncdist.t_quantile(0.5 + level / 2.0, df)
    return (mu_hat - tq * se, mu_hat + tq * se)


def score_table(
    fit: WideFit,
    data: Dataset,
    x0: np.ndarray,
    subsets: Sequence[Subset],
    sort: str = "fric",
    level: float = 0.80,
) -> list[ScoreRow]:
    """Focused ranking table over the given subsets (wide row included).

    Parameters
    ----------
    sort : str
        ``"fric"`` sorts ascending by the truncated score, ``"conf"``
        descending by the confidence of beating the wide model (rows without
        a conf value go last).  Ties break on the canonical subset key, so
        the ordering is total and reproducible.
    level : float
        Level of the equal-tailed risk-ratio interval and of the
        submodel-based mean interval (default 0.80).

    Notes
    -----
    The risk-ratio interval is read off the confidence distribution as
    ``[C^{-1}((1-level)/2), C^{-1}((1+level)/2)]``; its lower endpoint sits
    at ``rr_min`` whenever the pointmass exceeds the lower tail.
    """
    if sort not in ("fric", "conf"):
        raise ValueError("sort must be 'fric' or 'conf'")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie strictly in (0, 1)")
    x0 = np.asarray(x0, dtype=float).ravel()
    lo_q, hi_q = (1.0 - level) / 2.0, (1.0 + level) / 2.0

    rows: list[ScoreRow] = []
    for subset in subsets:
        geom = subset_geometry(fit, data, subset)
        if subset.is_full():
            mu_hat = float(x0 @ fit.beta_hat)
            v_wide = float(x0 @ fit.Sigma_n_inv @ x0)
            rows.append(
                ScoreRow(
                    subset=subset,
                    mu_hat=mu_hat,
                    fric_u=1.0,
                    fric_t=1.0,
                    fric_median=1.0,
                    conf=None,
                    rr_min=1.0,
                    rr_interval=None,
                    mu_interval=_mu_interval(data, geom, v_wide, mu_hat, level),
                )
            )
            continue
        fg = focus_geometry(fit, geom, x0)
        fric_u, fric_t = fric_scores(fg, fit.m)
        cd = confidence_distribution(fg, fit.m)
        rows.append(
            ScoreRow(
                subset=subset,
                mu_hat=fg.mu_hat,
                fric_u=fric_u,
                fric_t=fric_t,
                fric_median=median_fric(cd),
                conf=cd.conf(),
                rr_min=fg.rr_min,
                rr_interval=(cd.quantile(lo_q), cd.quantile(hi_q)),
                mu_interval=_mu_interval(data, geom, fg.v_sub, fg.mu_hat, level),
            )
        )

    if sort == "fric":
        rows.sort(key=lambda r: (r.fric_t, r.subset.key))
    else:
        rows.sort(
            key=lambda r: (r.conf is None, -(r.conf if r.conf is not None else 0.0), r.subset.key)
        )
    return rows


@dataclass(frozen=True)
class RmseCurve:
    """Confidence curve for the root-mse of the wide-model focus estimate.

    ``evaluate`` gives cc(r) = |1 - 2 Gamma_m(m * rmse_hat^2 / r^2)| with
    Gamma_m the chi-square(m) CDF; the curve touches zero at the
    median-confidence estimate and intervals at any level are read off as
    sublevel sets.
    """

    rmse_hat: float
    m: int

    def evaluate(self, r) -> float | np.ndarray:
        scalar = np.isscalar(r)
        rs = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(rs <= 0.0):
            raise ValueError("rmse values must be positive")
        val = np.abs(
            1.0 - 2.0 * ncdist.chi2_cdf(self.m * self.rmse_hat**2 / rs**2, self.m)
        )
        return float(val[0]) if scalar else val

    @property
    def median(self) -> float:
        """The zero of the curve: rmse_hat * sqrt(m / Gamma_m^{-1}(1/2))."""
        return self.rmse_hat * math.sqrt(self.m / ncdist.chi2_quantile(0.5, self.m))

    def interval(self, level: float) -> tuple[float, float]:
        """The sublevel set {r : cc(r) <= level}, an exact confidence interval."""
        if not 0.0 < level < 1.0:
            raise ValueError("level must lie strictly in (0, 1)")
        hi_c = ncdist.chi2_quantile(0.5 + level / 2.0, self.m)
        lo_c = ncdist.chi2_quantile(0.5 - level / 2.0, self.m)
        base = self.m * self.rmse_hat**2
        return (math.sqrt(base / hi_c), math.sqrt(base / lo_c))


def rmse_wide_curve(fit: WideFit, x0: np.ndarray) -> RmseCurve:
    """Point estimate and confidence curve for rmse of the wide focus estimate.

    The estimate is (sigma_hat / sqrt(n)) * sqrt(x0' Sigma_n^{-1} x0); the
    curve is exact because sigma_hat^2 / sigma^2 is a pivotal chi-square(m)/m.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    v_wide = float(x0 @ fit.Sigma_n_inv @ x0)
    rmse_hat = fit.sigma_hat / math.sqrt(fit.n) * math.sqrt(v_wide)
    return RmseCurve(rmse_hat=rmse_hat, m=fit.m)
