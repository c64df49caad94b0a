"""Monte-Carlo studies on the equicorrelated normal model.

The generator draws z-scale statistics T_i = mu_i + sqrt(rho) Z +
sqrt(1-rho) X_i with one shared Z per replication, maps them through
the standard normal CDF, and labels investigation statistics
null/non-null.  On top of it sit the FDR/power comparison of BH on raw
statistics, on modified rank-based p-values, and on oracle-corrected
p-values; power-versus-m curves; two probability fixtures (a
non-PRDS construction and the miscalibration of Fisher's combination
test); and a permutation diagnostic for the Simes statistic.

Every replication uses its own counter-derived RNG stream, so results
are bit-identical regardless of the worker thread count.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, special, stats

from ._util import map_reps, rep_rng
from .data import TRUTH_NONNULL, TRUTH_NULL, make_statistic_set
from .errors import DataError
from .ranc import PValueVector

__all__ = [
    "DEPENDENCE_KINDS",
    "NULL_SETTINGS",
    "SimConfig",
    "SimReport",
    "generate_emn",
    "oracle_pvalues",
    "simulate_cell",
    "run_table1",
    "power_vs_m",
    "prds_counterexample",
    "fisher_miscalibration_demo",
    "simes_permutation_diagnostic",
    "rule_of_thumb_m",
]

DEPENDENCE_KINDS = ("independent", "exchangeable")

# null-mean settings on the z scale and what they do to the raw
# statistics when those are read as p-values
NULL_SETTINGS = {
    "anti-conservative": -0.5,
    "exact": 0.0,
    "conservative": 0.5,
}

METHODS = ("bh_raw", "bh_ranc", "bh_oracle")


@dataclass(frozen=True)
class SimConfig:
    n0: int = 100
    n1: int = 10
    m: int = 200
    rho: float = 0.0
    mu_null: float = 0.0
    mu_alt: float = -3.0
    q: float = 0.2
    reps: int = 10_000
    seed: int = 0
    dependence: str = "independent"

    def __post_init__(self):
        if self.n0 < 0 or self.n1 < 0 or self.n0 + self.n1 < 1:
            raise DataError("need at least one investigation statistic")
        if self.m < 1:
            raise DataError("need at least one negative control")
        if self.reps < 1:
            raise DataError("need at least one replication")
        if not 0.0 <= self.rho < 1.0:
            raise DataError("rho must be in [0, 1)")
        if self.dependence not in DEPENDENCE_KINDS:
            raise DataError(f"unknown dependence {self.dependence!r}")
        if self.dependence == "independent" and self.rho != 0.0:
            raise DataError("independent draws require rho = 0")
        if self.mu_null not in (-0.5, 0.0, 0.5):
            raise DataError("mu_null must be one of -0.5, 0, 0.5")
        if not 0.0 < self.q < 1.0:
            raise DataError("q must be in (0, 1)")

    @property
    def n(self) -> int:
        return self.n0 + self.n1

    def to_dict(self):
        return {
            "n0": self.n0,
            "n1": self.n1,
            "m": self.m,
            "rho": self.rho,
            "mu_null": self.mu_null,
            "mu_alt": self.mu_alt,
            "q": self.q,
            "reps": self.reps,
            "seed": self.seed,
            "dependence": self.dependence,
        }


@dataclass(frozen=True)
class SimReport:
    config: SimConfig
    reps: int
    methods: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, cell in self.methods.items():
            for key in ("fdr", "power"):
                if not -1e-12 <= cell[key] <= 1 + 1e-12:
                    raise DataError(f"{name}.{key} outside [0, 1]")
                if cell[f"{key}_sd"] < 0:
                    raise DataError(f"{name}.{key}_sd negative")

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "reps": self.reps,
            "methods": {k: dict(v) for k, v in self.methods.items()},
        }


def _mu_vector(config: SimConfig) -> np.ndarray:
    return np.concatenate(
        [
            np.full(config.n0, config.mu_null),
            np.full(config.n1, config.mu_alt),
            np.full(config.m, config.mu_null),
        ]
    )


def _z_draws(config: SimConfig, rng) -> np.ndarray:
    size = config.n + config.m
    shared = rng.normal() if config.dependence == "exchangeable" else 0.0
    noise = rng.normal(size=size)
    return math.sqrt(config.rho) * shared + math.sqrt(1.0 - config.rho) * noise


def generate_emn(config: SimConfig, rep_seed: int):
    """One replication of the equicorrelated normal model."""
    rng = rep_rng(config.seed, rep_seed)
    t = special.ndtr(_mu_vector(config) + _z_draws(config, rng))
    n = config.n
    ids = [f"t{i}" for i in range(1, n + 1)]
    truth = {
        rid: TRUTH_NULL if i < config.n0 else TRUTH_NONNULL
        for i, rid in enumerate(ids)
    }
    return make_statistic_set(
        t[:n], t[n:], investigation_ids=ids, truth=truth
    )


def oracle_pvalues(statistics, config: SimConfig) -> PValueVector:
    """Exact marginal-null p-values for simulated statistics."""
    missing = [i for i in statistics.investigation_ids if i not in statistics.truth]
    if missing:
        raise DataError("oracle correction requires simulation truth labels")
    p = special.ndtr(special.ndtri(statistics.investigation) - config.mu_null)
    return PValueVector(
        values=np.clip(p, np.finfo(float).tiny, 1.0),
        ids=statistics.investigation_ids,
        kind="parametric_null",
    )


def _bh_reject_rows(p: np.ndarray, q: float):
    """Row-wise BH: number rejected and the sort order per row."""
    n = p.shape[1]
    order = np.argsort(p, axis=1, kind="stable")
    psort = np.take_along_axis(p, order, axis=1)
    ok = psort <= q * np.arange(1, n + 1) / n
    k = np.where(ok.any(axis=1), n - ok[:, ::-1].argmax(axis=1), 0)
    return k, order


def _fdp_tpr_rows(p: np.ndarray, q: float, null_mask: np.ndarray):
    k, order = _bh_reject_rows(p, q)
    null_sorted = null_mask[order]
    vcum = np.cumsum(null_sorted, axis=1)
    rows = np.arange(p.shape[0])
    v = np.where(k > 0, vcum[rows, np.maximum(k, 1) - 1], 0)
    n1 = int((~null_mask).sum())
    fdp = v / np.maximum(k, 1)
    tpr = (k - v) / n1 if n1 > 0 else np.full(p.shape[0], np.nan)
    return fdp, tpr


def _ranc_rows(t: np.ndarray, nc: np.ndarray) -> np.ndarray:
    m = nc.shape[1]
    nc_sorted = np.sort(nc, axis=1)
    counts = np.empty_like(t)
    for r in range(t.shape[0]):
        counts[r] = np.searchsorted(nc_sorted[r], t[r], side="right")
    return (1.0 + counts) / (m + 1.0)


def simulate_cell(config: SimConfig, threads: int | None = None) -> SimReport:
    """FDP and TPR of the three BH variants over config.reps replications."""
    n, m = config.n, config.m
    mu = _mu_vector(config)

    def one_rep(rep):
        return _z_draws(config, rep_rng(config.seed, rep))

    draws = np.asarray(map_reps(one_rep, config.reps, threads))
    t = special.ndtr(mu + draws)
    inv, nc = t[:, :n], t[:, n:]
    null_mask = np.arange(n) < config.n0

    p_by_method = {
        "bh_raw": inv,
        "bh_ranc": _ranc_rows(inv, nc),
        "bh_oracle": special.ndtr(special.ndtri(inv) - config.mu_null),
    }
    methods = {}
    for name, p in p_by_method.items():
        fdp, tpr = _fdp_tpr_rows(p, config.q, null_mask)
        methods[name] = {
            "fdr": float(np.mean(fdp)),
            "fdr_sd": float(np.std(fdp, ddof=1)) if config.reps > 1 else 0.0,
            "power": float(np.mean(tpr)),
            "power_sd": float(np.std(tpr, ddof=1)) if config.reps > 1 else 0.0,
        }
    return SimReport(config=config, reps=config.reps, methods=methods)


def table1_grid(
    n0: int = 100,
    n1: int = 10,
    m: int = 200,
    q: float = 0.2,
    reps: int = 10_000,
    seed: int = 0,
) -> dict:
    grid = {}
    for dependence in DEPENDENCE_KINDS:
        rho = 0.5 if dependence == "exchangeable" else 0.0
        for label, mu_null in NULL_SETTINGS.items():
            grid[f"{dependence}/{label}"] = SimConfig(
                n0=n0,
                n1=n1,
                m=m,
                rho=rho,
                mu_null=mu_null,
                q=q,
                reps=reps,
                seed=seed,
                dependence=dependence,
            )
    return grid


def run_table1(
    reps: int = 10_000, seed: int = 0, threads: int | None = None, **grid_kwargs
) -> dict:
    """The six-cell dependence-by-null-setting comparison."""
    return {
        cell: simulate_cell(config, threads=threads)
        for cell, config in table1_grid(reps=reps, seed=seed, **grid_kwargs).items()
    }


def power_vs_m(config: SimConfig, m_grid, threads: int | None = None) -> dict:
    """Mean TPR of each method as the control-pool size varies."""
    m_grid = [int(v) for v in m_grid]
    if any(v < 1 for v in m_grid):
        raise DataError("control-pool sizes must be positive")
    out = {"m": m_grid}
    for name in METHODS:
        out[name] = []
    for m in m_grid:
        report = simulate_cell(replace(config, m=m), threads=threads)
        for name in METHODS:
            out[name].append(report.methods[name]["power"])
    return out


def rule_of_thumb_m(n: int, n1: int, q: float, factor: float = 2.0) -> int:
    """Smallest recommended control-pool size for a target power gap."""
    if n < 1 or n1 < 1 or not 0 < q < 1 or factor <= 0:
        raise DataError("need n >= 1, 1 <= n1, 0 < q < 1, factor > 0")
    return int(math.ceil(factor * n / (q * n1)))


def _beta12_cdf(t):
    return 1.0 - (1.0 - t) ** 2


def prds_counterexample(method: str = "exact", draws: int = 1_000_000, seed: int = 0):
    """Conditional probabilities showing rank-based p-values are not PRDS.

    Two independent uniform investigation statistics share two
    Beta(1,2) controls; returns (P(p2=1 | p1=1/3), P(p2=1 | p1=2/3)).
    The first exceeds the second, so a larger p1 can make the extreme
    p2 value less likely.
    """
    if method == "exact":
        cdf = _beta12_cdf
        joint_low, _ = integrate.dblquad(
            lambda t2, t1: (cdf(t2) - cdf(t1)) ** 2, 0.0, 1.0, lambda t1: t1, 1.0
        )
        marg_low, _ = integrate.quad(lambda t: (1.0 - cdf(t)) ** 2, 0.0, 1.0)
        joint_mid, _ = integrate.dblquad(
            lambda t2, t1: 2.0 * cdf(t1) * (cdf(t2) - cdf(t1)),
            0.0,
            1.0,
            lambda t1: t1,
            1.0,
        )
        marg_mid, _ = integrate.quad(
            lambda t: 2.0 * cdf(t) * (1.0 - cdf(t)), 0.0, 1.0
        )
        return joint_low / marg_low, joint_mid / marg_mid
    if method != "mc":
        raise DataError(f"unknown method {method!r}")
    rng = rep_rng(seed, 0)
    t1, t2 = rng.uniform(size=(2, draws))
    c1, c2 = rng.beta(1.0, 2.0, size=(2, draws))
    count1 = (c1 <= t1).astype(int) + (c2 <= t1)
    count2 = (c1 <= t2).astype(int) + (c2 <= t2)
    p2_top = count2 == 2
    low = count1 == 0
    mid = count1 == 1
    return (
        float(p2_top[low].mean()),
        float(p2_top[mid].mean()),
    )


def _subset_masks(rng, b: int, size: int, n_test: int) -> np.ndarray:
    # b random n_test-subsets of the sorted pool positions
    keys = rng.random((b, size))
    cut = np.argsort(keys, axis=1)[:, :n_test]
    masks = np.zeros((b, size), dtype=bool)
    np.put_along_axis(masks, cut, True, axis=1)
    return masks


def _rank_pvalues_from_masks(masks: np.ndarray, m: int) -> np.ndarray:
    # control count below each sorted position, inclusive
    nc_cum = np.cumsum(~masks, axis=1)
    return (1.0 + nc_cum) / (m + 1.0)


def _fisher_from_masks(masks: np.ndarray, m: int) -> np.ndarray:
    p = _rank_pvalues_from_masks(masks, m)
    return -2.0 * np.where(masks, np.log(p), 0.0).sum(axis=1)


def _simes_from_masks(masks: np.ndarray, m: int, n: int) -> np.ndarray:
    p = _rank_pvalues_from_masks(masks, m)
    ranks = np.cumsum(masks, axis=1)
    ratio = np.where(masks, p / np.maximum(ranks, 1), np.inf)
    return n * ratio.min(axis=1)


def fisher_miscalibration_demo(
    n: int = 400,
    m: int = 400,
    reps: int = 1000,
    b: int = 1000,
    seed: int = 0,
    alpha: float = 0.05,
    threads: int | None = None,
):
    """Global-null rejection rates of Fisher's combination statistic.

    The chi-square reference treats the rank-based p-values as
    independent uniforms, which they are not; the permutation
    calibration stays at the nominal level.
    """

    def one_rep(rep):
        rng = rep_rng(seed, rep)
        pool = rng.normal(size=n + m)
        order = np.argsort(pool, kind="stable")
        obs_mask = (order < n)[None, :]
        obs = _fisher_from_masks(obs_mask, m)[0]
        chi2_reject = stats.chi2.sf(obs, 2 * n) < alpha
        perm = _fisher_from_masks(_subset_masks(rng, b, n + m, n), m)
        p_perm = (1.0 + np.sum(perm >= obs)) / (b + 1.0)
        return chi2_reject, p_perm <= alpha

    flags = np.asarray(map_reps(one_rep, reps, threads), dtype=float)
    return float(flags[:, 0].mean()), float(flags[:, 1].mean())


def simes_permutation_diagnostic(
    n: int = 25, m_values=(25, 500), b: int = 20_000, seed: int = 0, alpha: float = 0.05
) -> dict:
    """Permutation CDF of the Simes statistic at the nominal level.

    The Simes global test treats its statistic as uniform, so the CDF
    at alpha should be near alpha.  The statistic depends only on the
    pooled ranks, so the permutation distribution needs no data: random
    subset masks sample it directly.  Small control pools make the
    statistic too coarse for the uniform approximation to hold.
    """
    rates = {}
    for m in m_values:
        rng = rep_rng(seed, int(m))
        samples = _simes_from_masks(_subset_masks(rng, b, n + int(m), n), int(m), n)
        rates[int(m)] = float(np.mean(samples <= alpha))
    return rates
