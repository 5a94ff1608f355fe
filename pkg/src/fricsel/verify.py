"""Monte Carlo harness certifying the engine's exactness claims.

Simulates response vectors from the wide model at known truth and checks,
against 3-sigma bands computed from the run itself:

* exact coverage of the focused and averaged confidence distributions
  (the probability transform of the true risk ratio is uniform),
* exact unbiasedness of the unbiased score variants,
* the population mean of the known-variance Mallows variable,
* the overshoot factor of the squared standardized bias estimate.

Also the home of all "true value" computations (risk ratios, noncentrality
parameters) at supplied truth.

Reproducibility: replicate r of a run with seed s draws its noise from a
dedicated counter-based Philox stream derived as SeedSequence(s, spawn=(r,)),
mapped through the high-accuracy inverse normal CDF.  Results are therefore
independent of chunking and safe to parallelize across replicates; every
collector accumulates only sums and counts, so partial summaries merge
associatively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtri

from . import ncdist
from .ensemble import FocusEnsemble
from .focus import focus_geometry
from .regress import Dataset, Subset, WideFit, fit_wide, subset_geometry

DEFAULT_ALPHAS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
MIN_REPLICATES = 1000


# ---------------------------------------------------------------------------
# True values at known truth
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrueRisk:
    """Population risk quantities for one subset at known (beta, sigma).

    For a focus vector: ``lam`` is the standardized bias, ``Lambda`` its
    n-scaled square, ``kappa`` the bias in units of its own sampling standard
    deviation, ``tau2`` that variance, and ``gamma`` the quadratic-form bias
    parameter (equal to ``Lambda`` in the single-focus case).  For an
    ensemble only ``gamma`` and ``rr_true`` are defined; the focus-specific
    fields are NaN.
    """

    rr_true: float
    kappa: float
    lam: float
    Lambda: float
    gamma: float
    tau2: float
    rr_min: float


def true_risk(
    data: Dataset,
    subset: Subset,
    beta: np.ndarray,
    sigma: float,
    x0: np.ndarray | None = None,
    ensemble: FocusEnsemble | None = None,
) -> TrueRisk:
    """Exact relative risk of one subset at supplied truth.

    Exactly one of ``x0`` and ``ensemble`` must be given.  The two algebraic
    routes to the focused risk ratio (variance-plus-squared-bias over wide
    variance, and one minus the variance-gap times one-minus-kappa-squared)
    are both evaluated and cross-asserted at 1e-12; the equal-weights
    ensemble route is asserted against the explicit row-by-row sum.
    """
    if (x0 is None) == (ensemble is None):
        raise ValueError("supply exactly one of x0 and ensemble")
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape != (data.p,):
        raise ValueError("beta must have one entry per column")
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    if subset.is_full():
        raise ValueError("true risk is defined for proper subsets")

    n = data.n
    Sigma_n = data.X.T @ data.X / n
    idx, cdx = subset.indices, subset.complement
    S00 = Sigma_n[np.ix_(idx, idx)]
    S01 = Sigma_n[np.ix_(idx, cdx)]
    S11 = Sigma_n[np.ix_(cdx, cdx)]
    q_inv = S11 - S01.T @ np.linalg.solve(S00, S01)
    beta_c = beta[cdx]

    if x0 is not None:
        x0 = np.asarray(x0, dtype=float).ravel()
        x0S, x0C = x0[idx], x0[cdx]
        t = np.linalg.solve(S00, x0S)
        omega = S01.T @ t - x0C
        v_sub = float(x0S @ t)
        v_wide = float(np.linalg.solve(Sigma_n, x0) @ x0)
        wQw = v_wide - v_sub  # variance-split identity
        lam = float(omega @ beta_c) / sigma
        Lambda = n * lam * lam
        rr_first = (v_sub + Lambda) / v_wide
        if wQw <= 1e-14 * v_wide:
            kappa, tau2 = 0.0, 0.0
            rr_second = rr_first
        else:
            kappa = math.sqrt(n) * float(omega @ beta_c) / (math.sqrt(wQw) * sigma)
            tau2 = sigma**2 * wQw
            rr_second = 1.0 - wQw / v_wide * (1.0 - kappa * kappa)
        if abs(rr_first - rr_second) > 1e-12 * max(1.0, abs(rr_first)):
            raise ArithmeticError("the two risk-ratio routes disagree")
        return TrueRisk(
            rr_true=rr_first,
            kappa=kappa,
            lam=lam,
            Lambda=Lambda,
            gamma=Lambda,
            tau2=tau2,
            rr_min=v_sub / v_wide,
        )

    # ensemble route
    pts, w = ensemble.points, ensemble.weights
    xS, xC = pts[:, idx], pts[:, cdx]
    t = np.linalg.solve(S00, xS.T)
    omegas = S01.T @ t - xC.T
    A = (omegas * w) @ omegas.T
    Sigma_inv = np.linalg.inv(Sigma_n)
    denom = float(np.einsum("ij,jk,ik,i->", pts, Sigma_inv, pts, w))
    num_var = float(np.einsum("ki,ik,k->", xS, t, w))
    gamma = n * float(beta_c @ A @ beta_c) / sigma**2
    rr = (num_var + gamma) / denom
    if ensemble.kind == "all_rows_equal":
        gamma_closed = n * float(beta_c @ q_inv @ beta_c) / sigma**2
        rr_closed = (subset.size + gamma_closed) / data.p
        if abs(rr - rr_closed) > 1e-10 * max(1.0, abs(rr)):
            raise ArithmeticError("equal-weights risk routes disagree")
        rr, gamma = rr_closed, gamma_closed
    return TrueRisk(
        rr_true=rr,
        kappa=float("nan"),
        lam=float("nan"),
        Lambda=float("nan"),
        gamma=gamma,
        tau2=float("nan"),
        rr_min=num_var / denom,
    )


# ---------------------------------------------------------------------------
# Simulation driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    """One simulation setting: fixed design, truth, and replication plan."""

    X: np.ndarray
    beta: np.ndarray
    sigma: float
    replicates: int
    seed: int
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHAS

    def __post_init__(self):
        X = np.array(self.X, dtype=float, copy=True)
        beta = np.array(self.beta, dtype=float, copy=True).ravel()
        X.setflags(write=False)
        beta.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "beta", beta)
        if self.replicates < MIN_REPLICATES:
            raise ValueError(
                f"replicates below minimum ({self.replicates} < {MIN_REPLICATES})"
            )
        if beta.shape[0] != X.shape[1]:
            raise ValueError("beta length must match the design columns")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if not all(0.0 < a < 1.0 for a in self.alpha_grid):
            raise ValueError("alpha grid entries must lie in (0, 1)")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def m(self) -> int:
        return self.n - self.p


@dataclass(frozen=True)
class ReplicateBatch:
    """Per-replicate wide-model statistics for a contiguous block of replicates."""

    start: int
    count: int
    y: np.ndarray  # (n, count)
    beta_hat: np.ndarray  # (p, count)
    sigma2_hat: np.ndarray  # (count,)
    rss_wide: np.ndarray  # (count,)


def replicate_normals(seed: int, start: int, count: int, n: int) -> np.ndarray:
    """Standard normal draws for replicates [start, start+count), shape (n, count).

    Each replicate owns a Philox stream keyed by (seed, replicate index);
    uniforms are taken as (k + 1/2)/2^53 on the open interval and mapped
    through the inverse normal CDF, so the draw is bit-reproducible and
    independent of batching.
    """
    u = np.empty((n, count))
    for i in range(count):
        g = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(start + i,)))
        )
        k = g.integers(0, 1 << 53, size=n).astype(np.float64)
        u[:, i] = (k + 0.5) * 2.0**-53
    return ndtri(u)


def simulate_replicates(cfg: SimConfig, collector, chunk_size: int = 4096):
    """Drive a simulation: draw, fit, and feed batches to the collector.

    For every replicate, a fresh error vector is drawn from its own derived
    stream, the response y = X beta + sigma * eps is formed, and the
    wide-model statistics (coefficients, residual variance) are computed
    through the same orthogonal decomposition the production fit uses.  The
    collector sees ``ReplicateBatch`` objects and its ``summary()`` is
    returned.
    """
    n, p = cfg.n, cfg.p
    Q1, R = np.linalg.qr(cfg.X)
    xb = cfg.X @ cfg.beta
    m = cfg.m

    done = 0
    while done < cfg.replicates:
        count = min(chunk_size, cfg.replicates - done)
        eps = replicate_normals(cfg.seed, done, count, n)
        Y = xb[:, None] + cfg.sigma * eps
        B = solve_triangular(R, Q1.T @ Y, lower=False)
        resid = Y - cfg.X @ B
        rss = np.einsum("ij,ij->j", resid, resid)
        collector.collect(
            ReplicateBatch(
                start=done,
                count=count,
                y=Y,
                beta_hat=B,
                sigma2_hat=rss / m,
                rss_wide=rss,
            )
        )
        done += count
    return collector.summary()


# ---------------------------------------------------------------------------
# Collectors and claim results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClaimResult:
    """Outcome of one verified claim: observed vs target within a band."""

    name: str
    observed: float
    target: float
    band: float
    passed: bool

    @staticmethod
    def check(name: str, observed: float, target: float, band: float) -> "ClaimResult":
        return ClaimResult(name, observed, target, band, abs(observed - target) <= band)


def all_passed(claims: Sequence[ClaimResult]) -> bool:
    return all(c.passed for c in claims)


class _SubsetSide:
    """Design-side quantities for one subset, shared across replicates."""

    def __init__(self, fit0: WideFit, data: Dataset, subset: Subset, x0=None):
        self.subset = subset
        geom = subset_geometry(fit0, data, subset)
        self.cdx = subset.complement
        self.n = data.n
        self.p = data.p
        self.k = subset.size
        self.q_inv = geom.q_inv
        # projector pieces for rss(S) per replicate
        self.Q1S = np.linalg.qr(data.X[:, subset.indices])[0]
        if x0 is not None:
            fg = focus_geometry(fit0, geom, x0)
            self.omega = fg.omega
            self.wQw = fg.wQw
            self.v_sub = fg.v_sub
            self.v_wide = fg.v_wide

    def kappa_sq(self, batch: ReplicateBatch) -> np.ndarray:
        num = self.omega @ batch.beta_hat[self.cdx, :]
        return self.n * num**2 / (self.wQw * batch.sigma2_hat)

    def gamma_tilde(self, batch: ReplicateBatch) -> np.ndarray:
        Bc = batch.beta_hat[self.cdx, :]
        quad = np.einsum("ir,ij,jr->r", Bc, self.q_inv, Bc)
        return self.n * quad / batch.sigma2_hat

    def fric_u(self, batch: ReplicateBatch, m: int) -> np.ndarray:
        corr = (m - 2.0) / m * self.kappa_sq(batch) - 1.0
        return (self.v_sub + self.wQw * corr) / self.v_wide

    def afric_u(self, batch: ReplicateBatch, m: int) -> np.ndarray:
        shrunk = (m - 2.0) / m * self.gamma_tilde(batch)
        return (self.k + shrunk - (self.p - self.k)) / self.p

    def mallows0(self, batch: ReplicateBatch, sigma: float) -> np.ndarray:
        proj = self.Q1S.T @ batch.y
        rss_s = np.einsum("ij,ij->j", batch.y, batch.y) - np.einsum("ij,ij->j", proj, proj)
        return rss_s / sigma**2 - self.n + 2.0 * self.k


class CoverageCollector:
    """Empirical distribution of C(rr_true) at a grid of levels.

    One counter per (subset, kind, alpha); kinds are ``focused`` and
    ``afric``.  Mergeable: the state is a pure count array.
    """

    def __init__(self, cfg, sides, trues, m, alphas, ncf_cdf=None):
        self.sides = sides
        self.trues = trues  # list of dicts kind -> ncp_true
        self.m = m
        self.alphas = np.asarray(alphas)
        self.ncf = ncf_cdf if ncf_cdf is not None else ncdist.noncentral_f_cdf
        self.counts = np.zeros((len(sides), 2, len(alphas)), dtype=np.int64)
        self.total = 0

    def collect(self, batch: ReplicateBatch):
        for i, side in enumerate(self.sides):
            if "focused" in self.trues[i]:
                stat = side.kappa_sq(batch)
                c = 1.0 - self.ncf(stat, 1, self.m, self.trues[i]["focused"])
                self.counts[i, 0] += (c[:, None] <= self.alphas).sum(axis=0)
            if "afric" in self.trues[i]:
                d1 = side.p - side.k
                stat = side.gamma_tilde(batch) / d1
                c = 1.0 - self.ncf(stat, d1, self.m, self.trues[i]["afric"])
                self.counts[i, 1] += (c[:, None] <= self.alphas).sum(axis=0)
        self.total += batch.count

    def summary(self) -> list[ClaimResult]:
        out = []
        for i, side in enumerate(self.sides):
            mask = side.subset.bits_string(skip=())
            for kslot, kind in ((0, "focused"), (1, "afric")):
                if kind not in self.trues[i]:
                    continue
                for j, a in enumerate(self.alphas):
                    emp = self.counts[i, kslot, j] / self.total
                    band = 3.0 * math.sqrt(a * (1.0 - a) / self.total)
                    out.append(
                        ClaimResult.check(
                            f"coverage/{kind}/S={mask}/alpha={a:.1f}", emp, float(a), band
                        )
                    )
        return out


class MeanCollector:
    """Running mean and 3-SE band of named per-replicate statistics."""

    def __init__(self, stats: dict[str, Callable[[ReplicateBatch], np.ndarray]],
                 targets: dict[str, float]):
        self.stats = stats
        self.targets = targets
        self.sums = {k: 0.0 for k in stats}
        self.sumsq = {k: 0.0 for k in stats}
        self.total = 0

    def collect(self, batch: ReplicateBatch):
        for k, fn in self.stats.items():
            v = fn(batch)
            self.sums[k] += float(v.sum())
            self.sumsq[k] += float((v * v).sum())
        self.total += batch.count

    def summary(self) -> list[ClaimResult]:
        out = []
        for k in self.stats:
            mean = self.sums[k] / self.total
            var = max(self.sumsq[k] / self.total - mean * mean, 0.0)
            band = 3.0 * math.sqrt(var / self.total)
            out.append(ClaimResult.check(k, mean, self.targets[k], band))
        return out


# ---------------------------------------------------------------------------
# Batteries
# ---------------------------------------------------------------------------


def _auto_names(p: int) -> tuple[str, ...]:
    return ("intercept",) + tuple(f"x{j}" for j in range(1, p))


def _as_dataset(cfg: SimConfig) -> Dataset:
    # geometry only; the response slot is a placeholder draw
    y0 = cfg.X @ cfg.beta
    forced = [bool(np.all(cfg.X[:, 0] == 1.0))] + [False] * (cfg.p - 1)
    return Dataset(cfg.X, y0 + 1e-6 * np.arange(cfg.n), _auto_names(cfg.p), forced)


def coverage_battery(
    cfg: SimConfig,
    subsets: Sequence[Subset],
    x0: np.ndarray,
    ncf_cdf=None,
    chunk_size: int = 4096,
) -> list[ClaimResult]:
    """Exact-coverage claims for the focused and averaged confidence
    distributions: P{C(rr_true) <= alpha} must equal alpha for every level.

    ``ncf_cdf`` replaces the noncentral F CDF used when evaluating the
    distributions (fault-injection hook); true noncentralities always come
    from the clean closed forms.
    """
    data = _as_dataset(cfg)
    fit0 = fit_wide(data)
    ens = FocusEnsemble.all_rows(data)
    sides, trues = [], []
    for s in subsets:
        side = _SubsetSide(fit0, data, s, x0)
        tr_focus = true_risk(data, s, cfg.beta, cfg.sigma, x0=x0)
        tr_ens = true_risk(data, s, cfg.beta, cfg.sigma, ensemble=ens)
        sides.append(side)
        trues.append({"focused": tr_focus.kappa**2, "afric": tr_ens.gamma})
    collector = CoverageCollector(cfg, sides, trues, cfg.m, cfg.alpha_grid, ncf_cdf)
    return simulate_replicates(cfg, collector, chunk_size)


def unbiasedness_battery(
    cfg: SimConfig, subsets: Sequence[Subset], x0: np.ndarray, chunk_size: int = 4096
) -> list[ClaimResult]:
    """Mean of the unbiased focused and averaged scores against the true
    risk ratios, within 3 empirical standard errors."""
    data = _as_dataset(cfg)
    fit0 = fit_wide(data)
    ens = FocusEnsemble.all_rows(data)
    stats, targets = {}, {}
    for s in subsets:
        side = _SubsetSide(fit0, data, s, x0)
        mask = s.bits_string(skip=())
        m = cfg.m
        stats[f"mean_fric_u/S={mask}"] = (
            lambda b, side=side, m=m: side.fric_u(b, m)
        )
        targets[f"mean_fric_u/S={mask}"] = true_risk(
            data, s, cfg.beta, cfg.sigma, x0=x0
        ).rr_true
        stats[f"mean_afric_u/S={mask}"] = (
            lambda b, side=side, m=m: side.afric_u(b, m)
        )
        targets[f"mean_afric_u/S={mask}"] = true_risk(
            data, s, cfg.beta, cfg.sigma, ensemble=ens
        ).rr_true
    return simulate_replicates(cfg, MeanCollector(stats, targets), chunk_size)


def mallows_battery(
    cfg: SimConfig, subsets: Sequence[Subset], chunk_size: int = 4096
) -> list[ClaimResult]:
    """Mean of the known-variance Mallows variable against |S| + gamma_S."""
    from .classic import mallows_population_mean

    data = _as_dataset(cfg)
    fit0 = fit_wide(data)
    stats, targets = {}, {}
    for s in subsets:
        side = _SubsetSide(fit0, data, s)
        mask = s.bits_string(skip=())
        stats[f"mean_mallows0/S={mask}"] = (
            lambda b, side=side, sig=cfg.sigma: side.mallows0(b, sig)
        )
        targets[f"mean_mallows0/S={mask}"] = mallows_population_mean(
            data, s, cfg.beta, cfg.sigma
        ).value
    return simulate_replicates(cfg, MeanCollector(stats, targets), chunk_size)


def overshoot_battery(
    cfg: SimConfig, subset: Subset, x0: np.ndarray, chunk_size: int = 4096
) -> list[ClaimResult]:
    """Mean of the squared standardized bias statistic against its exact
    inflation (m/(m-2)) * (kappa^2 + 1)."""
    data = _as_dataset(cfg)
    fit0 = fit_wide(data)
    side = _SubsetSide(fit0, data, subset, x0)
    tr = true_risk(data, subset, cfg.beta, cfg.sigma, x0=x0)
    m = cfg.m
    name = f"mean_kappa_sq/S={subset.bits_string(skip=())}"
    stats = {name: lambda b: side.kappa_sq(b)}
    targets = {name: m / (m - 2.0) * (tr.kappa**2 + 1.0)}
    return simulate_replicates(cfg, MeanCollector(stats, targets), chunk_size)


# ---------------------------------------------------------------------------
# Default battery (the mc-check command)
# ---------------------------------------------------------------------------


def _default_design(rng: np.random.Generator, n: int, p: int) -> np.ndarray:
    z = rng.standard_normal((n, p - 1))
    common = rng.standard_normal((n, 1))
    cols = math.sqrt(0.6) * z + math.sqrt(0.4) * common
    return np.column_stack([np.ones(n), cols])


def _default_subsets(p: int) -> list[Subset]:
    picks = ([0], [0, 1], [0, 2], [0, 1, 2])
    return [Subset.from_indices(ix, p) for ix in picks]


def default_battery(
    seed: int = 20260810,
    replicates: int = 20000,
    heavy_replicates: int = 100000,
    ncf_cdf=None,
) -> list[ClaimResult]:
    """The standard mc-check battery.

    Three coverage designs (n=40, p=4, four proper subsets each) at
    ``replicates`` draws; two unbiasedness configs and five Mallows-mean
    configs at ``heavy_replicates``; one overshoot config.  All claims carry
    3-sigma bands computed from the run.
    """
    claims: list[ClaimResult] = []
    root = np.random.default_rng(seed)
    n, p = 40, 4
    subsets = _default_subsets(p)

    for d in range(3):
        rng = np.random.default_rng(root.integers(2**63))
        X = _default_design(rng, n, p)
        beta = rng.normal(0.0, 0.35, size=p)
        x0 = np.concatenate([[1.0], rng.normal(0.0, 1.0, size=p - 1)])
        cfg = SimConfig(X, beta, 1.0, replicates, seed + 1000 + d)
        claims += coverage_battery(cfg, subsets, x0, ncf_cdf=ncf_cdf)

    for d in range(2):
        rng = np.random.default_rng(root.integers(2**63))
        X = _default_design(rng, n, p)
        beta = rng.normal(0.0, 0.35, size=p)
        x0 = np.concatenate([[1.0], rng.normal(0.0, 1.0, size=p - 1)])
        cfg = SimConfig(X, beta, 1.0, heavy_replicates, seed + 2000 + d)
        claims += unbiasedness_battery(cfg, subsets[1:3], x0)

    for d in range(5):
        rng = np.random.default_rng(root.integers(2**63))
        nn = 30 if d % 2 == 0 else 60
        X = _default_design(rng, nn, p)
        beta = rng.normal(0.0, 0.4, size=p)
        cfg = SimConfig(X, beta, float(rng.uniform(0.7, 1.5)), heavy_replicates, seed + 3000 + d)
        claims += mallows_battery(cfg, [subsets[1 + d % 3]])

    rng = np.random.default_rng(root.integers(2**63))
    X = _default_design(rng, n, p)
    beta = rng.normal(0.0, 0.35, size=p)
    x0 = np.concatenate([[1.0], rng.normal(0.0, 1.0, size=p - 1)])
    cfg = SimConfig(X, beta, 1.0, max(replicates, 20000), seed + 4000)
    claims += overshoot_battery(cfg, subsets[1], x0)
    return claims
