"""Empirical-process FDR estimation from negative controls.

For a threshold t, the number of false rejections among the statistics
under investigation is estimated from how many negative controls fall
below t.  With R(t) rejections and V_nc(t) controls at or below t, the
estimated FDR is

    FDRhat_lambda(t) = pi_hat(lambda) * n * (V_nc(t) + 2)
                       / ((m + 1) * max(R(t), 1)),

and the step-up threshold is the largest t not exceeding lambda whose
estimated FDR stays at or below the target q.

lambda and the reported threshold live on the rank scale: every
statistic is replaced by its value under the negative-control ECDF, so
the procedure is invariant under monotone transformations of the data.
With lambda = 1 the procedure coincides exactly with Benjamini-Hochberg
applied to the modified rank based p-values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import StatisticSet
from .errors import DataError
from .procedures import bh
from .ranc import counts_at_or_below, modified_ranc_pvalues

__all__ = [
    "StepCurve",
    "FdrStepupResult",
    "counting_processes",
    "pi_hat",
    "fdr_hat",
    "stepup_threshold",
    "bh_equivalence_check",
]


@dataclass(frozen=True)
class StepCurve:
    """Right-continuous piecewise-constant function.

    values[k] applies on [breakpoints[k], breakpoints[k+1]);
    left_value applies below the first breakpoint.
    """

    breakpoints: np.ndarray
    values: np.ndarray
    left_value: float

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if bp.size != vals.size:
            raise DataError("breakpoints and values must have equal length")
        if bp.size == 0:
            raise DataError("a step curve needs at least one breakpoint")
        if np.any(np.diff(bp) <= 0):
            raise DataError("breakpoints must be strictly increasing")
        if not (np.all(np.isfinite(vals)) and np.isfinite(self.left_value)):
            raise DataError("step curve values must be finite")
        bp.flags.writeable = False
        vals.flags.writeable = False
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    def value_at(self, t):
        """Evaluate the curve, scalar in scalar out."""
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        result = np.where(idx < 0, self.left_value, self.values[np.maximum(idx, 0)])
        if np.isscalar(t) or np.ndim(t) == 0:
            return float(result)
        return result

    def to_dict(self) -> dict:
        return {
            "breakpoints": [float(x) for x in self.breakpoints],
            "values": [float(x) for x in self.values],
            "left_value": float(self.left_value),
        }


@dataclass(frozen=True)
class FdrStepupResult:
    """Threshold, rejections and diagnostics of the FDR step-up rule.

    tau is the rank-scale threshold (a p-value cutoff in (0,1], None if
    nothing is rejected); tau_statistic is the corresponding raw
    statistic cutoff on the internal scale.  fdr_curve is the estimated
    FDR as a function of the raw statistic threshold.
    """

    tau: float | None
    tau_statistic: float | None
    rejected: frozenset
    pi_hat: float
    lam: float
    q: float
    fdr_curve: StepCurve | None
    diagnostics: tuple = ()

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "tau_statistic": self.tau_statistic,
            "pi_hat": self.pi_hat if np.isfinite(self.pi_hat) else "infinite",
            "lambda": self.lam,
            "q": self.q,
            "n_rejected": self.n_rejected,
            "rejected_ids": sorted(self.rejected),
            "diagnostics": list(self.diagnostics),
            "fdr_curve": self.fdr_curve.to_dict() if self.fdr_curve else None,
        }


def counting_processes(statistics: StatisticSet):
    """Rejection and negative-control counting processes.

    Returns (R, V_nc) as step curves over the internal statistic scale:
    R(t) = #{i: T_i <= t}, V_nc(t) = #{j: nc_j <= t}.
    """
    curves = []
    for values in (statistics.investigation, statistics.negative_controls):
        points = np.unique(values)
        counts = np.searchsorted(np.sort(values), points, side="right")
        curves.append(StepCurve(points, counts.astype(float), 0.0))
    return tuple(curves)


def _rank_scale(statistics: StatisticSet):
    """Counts and rank-scale positions of investigation and control values."""
    m = statistics.m
    counts = counts_at_or_below(statistics.negative_controls, statistics.investigation)
    u = (1.0 + counts) / (1.0 + m)
    nc_counts = counts_at_or_below(statistics.negative_controls, statistics.negative_controls)
    w = (1.0 + nc_counts) / (1.0 + m)
    return counts, u, np.sort(w)


def _check_lambda(lam: float):
    if not (0 < lam <= 1):
        raise DataError("lambda must lie in (0, 1]")


def pi_hat(statistics: StatisticSet, lam: float) -> float:
    """Estimated proportion of true nulls among the investigation.

    Exactly 1 when lam = 1; otherwise
    (n + 1 - R(lambda)) / n * (m + 1) / (m - V_nc(lambda)) on the rank
    scale.  Not capped at 1.  Returns +inf if every control sits at or
    below lambda, which cannot happen on the rank scale but is kept as
    a guard for degenerate inputs.
    """
    _check_lambda(lam)
    if lam == 1.0:
        return 1.0
    n, m = statistics.n, statistics.m
    _, u, w = _rank_scale(statistics)
    r_lam = int(np.sum(u <= lam))
    v_lam = int(np.searchsorted(w, lam, side="right"))
    if v_lam >= m:
        return float("inf")
    return (n + 1 - r_lam) / n * (m + 1) / (m - v_lam)


def fdr_hat(statistics: StatisticSet, lam: float, t: float) -> float:
    """Estimated FDR of the rule "reject every T_i <= t".

    t is on the internal statistic scale; lam on the rank scale.
    May exceed 1; propagates an infinite pi_hat.
    """
    _check_lambda(lam)
    n, m = statistics.n, statistics.m
    pi = pi_hat(statistics, lam)
    v_t = int(counts_at_or_below(statistics.negative_controls, np.array([t]))[0])
    r_t = int(counts_at_or_below(statistics.investigation, np.array([t]))[0])
    vbar = n * (v_t + 2.0) / (m + 1.0)
    return pi * vbar / max(r_t, 1)


def stepup_threshold(statistics: StatisticSet, lam: float = 1.0, q: float = 0.1) -> FdrStepupResult:
    """Largest rank-scale threshold tau <= lambda with estimated FDR <= q.

    Candidate thresholds are the observed statistics: the estimated FDR
    is piecewise constant between them, so the supremum over the
    continuum is attained on that grid.  Rejects {i: rank(T_i) <= tau};
    with no qualifying candidate the rejection set is empty and tau is
    None.  The exact estimated FDR at the continuum supremum may exceed
    q due to discreteness; at the reported tau it never does.
    """
    _check_lambda(lam)
    if not (0 < q < 1):
        raise DataError("q must lie strictly between 0 and 1")
    n, m = statistics.n, statistics.m
    counts, u, w = _rank_scale(statistics)
    pi = pi_hat(statistics, lam)
    diagnostics = []
    if not np.isfinite(pi):
        diagnostics.append(
            "estimated null proportion is infinite; nothing can be rejected"
        )

    u_sorted = np.sort(u)
    cand_counts = np.unique(counts[u <= lam])
    tau = tau_stat = None
    rejected = frozenset()
    if cand_counts.size and np.isfinite(pi):
        cand_u = (1.0 + cand_counts) / (1.0 + m)
        r_at = np.searchsorted(u_sorted, cand_u, side="right")
        fdr = pi * n * (cand_counts + 2.0) / ((m + 1.0) * np.maximum(r_at, 1))
        ok = np.nonzero(fdr <= q)[0]
        if ok.size:
            tau = float(cand_u[ok[-1]])
            keep = u <= tau
            rejected = frozenset(
                statistics.investigation_ids[k] for k in np.nonzero(keep)[0]
            )
            tau_stat = float(np.max(statistics.investigation[keep]))
    if tau is None and not diagnostics:
        diagnostics.append("no threshold with estimated FDR <= q; nothing rejected")

    curve = None
    if np.isfinite(pi):
        pooled = np.unique(
            np.concatenate([statistics.investigation, statistics.negative_controls])
        )
        v_t = counts_at_or_below(statistics.negative_controls, pooled)
        r_t = counts_at_or_below(statistics.investigation, pooled)
        fdr_vals = pi * n * (v_t + 2.0) / ((m + 1.0) * np.maximum(r_t, 1))
        left = pi * n * 2.0 / (m + 1.0)
        curve = StepCurve(pooled, fdr_vals, left)

    return FdrStepupResult(
        tau=tau,
        tau_statistic=tau_stat,
        rejected=rejected,
        pi_hat=pi,
        lam=lam,
        q=q,
        fdr_curve=curve,
        diagnostics=tuple(diagnostics),
    )


def bh_equivalence_check(statistics: StatisticSet, q: float) -> bool:
    """True iff the lambda=1 step-up rejects exactly the BH rejections
    computed from the modified rank based p-values.  Always true."""
    stepup = stepup_threshold(statistics, lam=1.0, q=q)
    benjamini = bh(modified_ranc_pvalues(statistics), q)
    return stepup.rejected == benjamini.rejected
