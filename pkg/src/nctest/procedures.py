"""Classical multiple-testing procedures over a p-value vector.

All step-up and step-down procedures here sort the p-values once
(stable in (p, id) so ties are deterministic) and reject a prefix of
that order.  Each returns a RejectionResult carrying an audit trail of
the sorted p-values and the comparison boundary actually used.

The Fisher combination statistic is provided only to demonstrate its
miscalibration on rank based p-values; it assumes independent uniform
p-values, which rank based p-values are not.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._util import map_reps, rep_rng
from .data import StatisticSet
from .errors import DataError
from .ranc import PValueVector, ranc_values


def _pvalues_and_ids(p):
    """Accept a PValueVector or a bare array, yielding (values, ids)."""
    if isinstance(p, PValueVector):
        return np.asarray(p.values, dtype=float), tuple(p.ids)
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DataError("need a non-empty one-dimensional p-value vector")
    if np.any(arr <= 0) or np.any(arr > 1):
        raise DataError("p-values must lie in (0, 1]")
    return arr, tuple(f"p{k}" for k in range(1, arr.size + 1))


def _sorted_order(values: np.ndarray, ids):
    # stable order by (p, id) keeps tied results deterministic
    return np.lexsort((np.asarray(ids, dtype=object), values))


@dataclass(frozen=True)
class RejectionResult:
    """Outcome of an individual-testing procedure.

    rejected is always a prefix of the p-values sorted ascending;
    threshold is the largest rejected p-value (None when nothing is
    rejected).  audit holds the sorted p-values, the boundary vector
    the procedure compared against, and the id order used.
    """

    rejected: frozenset
    threshold: float | None
    procedure: str
    parameters: dict
    audit: dict = field(default_factory=dict, repr=False)

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)

    def to_dict(self) -> dict:
        return {
            "procedure": self.procedure,
            "parameters": dict(self.parameters),
            "n_rejected": self.n_rejected,
            "threshold": self.threshold,
            "rejected_ids": list(self.audit.get("order", ()))[: self.n_rejected],
            "audit": {
                "sorted_pvalues": [float(x) for x in self.audit.get("sorted_pvalues", ())],
                "boundaries": [float(x) for x in self.audit.get("boundaries", ())],
                "order": list(self.audit.get("order", ())),
            },
        }


def _prefix_result(name, params, values, ids, boundaries, k) -> RejectionResult:
    order = _sorted_order(values, ids)
    sorted_p = values[order]
    ordered_ids = tuple(ids[j] for j in order)
    rejected = frozenset(ordered_ids[:k])
    threshold = float(sorted_p[k - 1]) if k > 0 else None
    return RejectionResult(
        rejected=rejected,
        threshold=threshold,
        procedure=name,
        parameters=params,
        audit={
            "sorted_pvalues": tuple(float(x) for x in sorted_p),
            "boundaries": tuple(float(b) for b in boundaries),
            "order": ordered_ids,
        },
    )


def _check_level(value: float, name: str):
    if not (0 < value < 1):
        raise DataError(f"{name} must lie strictly between 0 and 1")


def bonferroni_global(p, alpha: float) -> bool:
    """Global test: reject the intersection null iff min p <= alpha/n."""
    _check_level(alpha, "alpha")
    values, _ = _pvalues_and_ids(p)
    return bool(np.min(values) <= alpha / values.size)


def simes_global(p, alpha: float) -> bool:
    """Global test: reject iff p_(i) <= i*alpha/n for some i."""
    _check_level(alpha, "alpha")
    values, _ = _pvalues_and_ids(p)
    n = values.size
    sorted_p = np.sort(values)
    return bool(np.any(sorted_p <= alpha * np.arange(1, n + 1) / n))


def holm(p, alpha: float) -> RejectionResult:
    """Step-down FWER control: reject while p_(i) <= alpha/(n-i+1)."""
    _check_level(alpha, "alpha")
    values, ids = _pvalues_and_ids(p)
    n = values.size
    i = np.arange(1, n + 1)
    boundaries = alpha / (n - i + 1)
    sorted_p = values[_sorted_order(values, ids)]
    passing = sorted_p <= boundaries
    k = n if passing.all() else int(np.argmin(passing))
    return _prefix_result("holm", {"alpha": alpha}, values, ids, boundaries, k)


def hochberg(p, alpha: float) -> RejectionResult:
    """Step-up counterpart of Holm on the same boundaries."""
    _check_level(alpha, "alpha")
    values, ids = _pvalues_and_ids(p)
    n = values.size
    i = np.arange(1, n + 1)
    boundaries = alpha / (n - i + 1)
    sorted_p = values[_sorted_order(values, ids)]
    passing = np.nonzero(sorted_p <= boundaries)[0]
    k = int(passing[-1]) + 1 if passing.size else 0
    return _prefix_result("hochberg", {"alpha": alpha}, values, ids, boundaries, k)


def lehmann_romano(p, alpha: float, gamma: float) -> RejectionResult:
    """Step-down control of P(FDP > gamma) at level alpha.

    Boundary: p_(i) <= (floor(gamma*i)+1) * alpha / (n + floor(gamma*i) + 1 - i).
    """
    _check_level(alpha, "alpha")
    _check_level(gamma, "gamma")
    values, ids = _pvalues_and_ids(p)
    n = values.size
    i = np.arange(1, n + 1)
    g = np.floor(gamma * i)
    boundaries = (g + 1) * alpha / (n + g + 1 - i)
    sorted_p = values[_sorted_order(values, ids)]
    passing = sorted_p <= boundaries
    k = n if passing.all() else int(np.argmin(passing))
    return _prefix_result(
        "lehmann_romano", {"alpha": alpha, "gamma": gamma}, values, ids, boundaries, k
    )


def bh(p, q: float) -> RejectionResult:
    """Benjamini-Hochberg step-up: reject p_(1..k), k = max{i: p_(i) <= i*q/n}."""
    _check_level(q, "q")
    values, ids = _pvalues_and_ids(p)
    n = values.size
    boundaries = q * np.arange(1, n + 1) / n
    sorted_p = values[_sorted_order(values, ids)]
    passing = np.nonzero(sorted_p <= boundaries)[0]
    k = int(passing[-1]) + 1 if passing.size else 0
    return _prefix_result("bh", {"q": q}, values, ids, boundaries, k)


def fisher_global_statistic(p) -> float:
    """Fisher's combination statistic, -2 * sum(log p).

    Invalid as a chi-square test on rank based p-values; kept for the
    miscalibration demonstration.
    """
    values, _ = _pvalues_and_ids(p)
    return float(-2.0 * np.sum(np.log(values)))


def confusion_counts(result: RejectionResult, statistics: StatisticSet) -> dict:
    """Rejection outcome table against simulation ground truth."""
    nonnull = statistics.truth_mask()
    ids = statistics.investigation_ids
    rejected = np.array([i in result.rejected for i in ids])
    r = int(rejected.sum())
    v = int((rejected & ~nonnull).sum())
    s = int((rejected & nonnull).sum())
    n1 = int(nonnull.sum())
    return {
        "n_rejected": r,
        "false_rejections": v,
        "true_rejections": s,
        "n_null": int((~nonnull).sum()),
        "n_nonnull": n1,
        "fdp": v / max(r, 1),
        "tpr": s / n1 if n1 > 0 else float("nan"),
    }


def simes_statistic(pvalues) -> float:
    """Simes combination: n * min_i p_(i)/i, small values are extreme."""
    p = np.sort(np.asarray(pvalues, dtype=float))
    n = p.size
    if n == 0:
        raise DataError("empty p-value vector")
    return float(n * np.min(p / np.arange(1, n + 1)))


_STATISTICS = {
    "simes_min_ratio": (simes_statistic, "small"),
    "fisher": (fisher_global_statistic, "large"),
}


def permutation_global(
    statistics: StatisticSet,
    statistic="simes_min_ratio",
    B: int = 999,
    seed: int = 0,
    direction: str | None = None,
    threads: int | None = None,
    max_enumeration: int = 1_000_000,
):
    """Permutation test of the global null that the investigation
    statistics are exchangeable with the negative controls.

    The chosen statistic is computed from the rank based p-values of
    each relabeled sample.  Monte-Carlo sampling uses the add-one
    correction p = (1 + #extreme) / (1 + B); when C(n+m, n) does not
    exceed max_enumeration the permutation distribution is enumerated
    exactly instead and p = #extreme / total.

    Returns (p_value, null_samples).
    """
    if B < 1:
        raise DataError("B must be at least 1")
    if callable(statistic):
        stat_fn = statistic
        if direction not in ("small", "large"):
            raise DataError("custom statistic requires direction 'small' or 'large'")
    else:
        try:
            stat_fn, stat_direction = _STATISTICS[statistic]
        except KeyError:
            raise DataError(f"unknown statistic {statistic!r}") from None
        if direction is None:
            direction = stat_direction

    n, m = statistics.n, statistics.m
    pool = np.sort(np.concatenate([statistics.investigation, statistics.negative_controls]))

    def stat_of_mask(mask: np.ndarray) -> float:
        test_vals = pool[mask]
        nc_vals = pool[~mask]
        value = float(stat_fn(ranc_values(test_vals, nc_vals)))
        if not math.isfinite(value):
            raise DataError("statistic undefined on permuted sample")
        return value

    observed = float(stat_fn(ranc_values(statistics.investigation, statistics.negative_controls).astype(float)))
    if not math.isfinite(observed):
        raise DataError("statistic undefined on observed sample")

    total = math.comb(n + m, n)
    if total <= max_enumeration:
        samples = np.empty(total)
        mask = np.zeros(n + m, dtype=bool)
        for b, subset in enumerate(itertools.combinations(range(n + m), n)):
            mask[:] = False
            mask[list(subset)] = True
            samples[b] = stat_of_mask(mask)
        if direction == "small":
            extreme = int(np.sum(samples <= observed))
        else:
            extreme = int(np.sum(samples >= observed))
        return extreme / total, samples

    def one_perm(b: int) -> float:
        rng = rep_rng(seed, b)
        mask = np.zeros(n + m, dtype=bool)
        mask[rng.choice(n + m, size=n, replace=False)] = True
        return stat_of_mask(mask)

    samples = np.asarray(map_reps(one_perm, B, threads))
    if direction == "small":
        extreme = int(np.sum(samples <= observed))
    else:
        extreme = int(np.sum(samples >= observed))
    return (1 + extreme) / (1 + B), samples
