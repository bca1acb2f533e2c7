"""Paired condition comparisons for rating data.

Three tests are available over paired per-question means: a two-sided
paired t-test (default), the Wilcoxon signed-rank test, and an exact
sign-flip permutation test that enumerates all 2^n sign assignments of
the paired differences.

Degenerate inputs follow fixed conventions so fixtures behave
predictably: if every paired difference is identical, p is 1.0 when the
difference is zero and 0.0 otherwise, and the result is flagged.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import stats as scipy_stats

from .errors import ValidationError

METHODS = ("paired_t", "wilcoxon", "sign_flip_permutation")
MAX_EXACT_PAIRS = 20


@dataclass
class ComparisonResult:
    axis: str
    mean_no_rag: float
    mean_rag: float
    mean_diff: float
    p_value: float
    test_name: str
    n_pairs: int
    degenerate: bool = False

    def to_json(self) -> dict:
        return {
            "axis": self.axis,
            "mean_no_rag": self.mean_no_rag,
            "mean_rag": self.mean_rag,
            "mean_diff": self.mean_diff,
            "p_value": self.p_value,
            "test_name": self.test_name,
            "n_pairs": self.n_pairs,
            "degenerate": self.degenerate,
        }


def compare_paired(
    no_rag_values, rag_values, method: str = "paired_t", axis: str = ""
) -> ComparisonResult:
    """Two-sided paired comparison of rag vs no-rag values."""
    if method not in METHODS:
        raise ValidationError("unknown_method", f"method must be one of {METHODS}")
    a = np.asarray(no_rag_values, dtype=np.float64)
    b = np.asarray(rag_values, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError("pairing_mismatch", "paired samples must be equal-length 1-d sequences")
    n = len(a)
    if n < 2:
        raise ValidationError("too_few_pairs", "need at least 2 paired observations")
    diffs = b - a

    def result(p: float, degenerate: bool = False) -> ComparisonResult:
        return ComparisonResult(
            axis=axis,
            mean_no_rag=float(a.mean()),
            mean_rag=float(b.mean()),
            mean_diff=float(diffs.mean()),
            p_value=float(min(max(p, 0.0), 1.0)),
            test_name=method,
            n_pairs=n,
            degenerate=degenerate,
        )

    if np.all(diffs == diffs[0]):
        return result(1.0 if diffs[0] == 0.0 else 0.0, degenerate=True)

    if method == "paired_t":
        t_stat, p = scipy_stats.ttest_rel(b, a)
        return result(float(p))
    if method == "wilcoxon":
        nonzero = diffs[diffs != 0.0]
        if len(nonzero) == 0:
            return result(1.0, degenerate=True)
        w = scipy_stats.wilcoxon(nonzero)
        return result(float(w.pvalue))
    return result(_sign_flip_p(diffs))


def _sign_flip_p(diffs: np.ndarray) -> float:
    """Exact two-sided permutation p over all sign assignments.

    Statistic is |sum of signed differences|; ties count as at least as
    extreme (the identity assignment guarantees p >= 2^-n).
    """
    n = len(diffs)
    if n > MAX_EXACT_PAIRS:
        raise ValidationError("too_many_pairs_for_exact", f"exact enumeration capped at {MAX_EXACT_PAIRS} pairs")
    observed = abs(float(diffs.sum()))
    hits = 0
    for signs in itertools.product((1.0, -1.0), repeat=n):
        stat = abs(float(np.dot(signs, diffs)))
        if stat >= observed - 1e-12:
            hits += 1
    return hits / 2.0**n
