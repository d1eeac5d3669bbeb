"""Nonparametric significance tests and their chi-square support function.

Implements the Mann-Whitney U test, the Kruskal-Wallis rank test, and the
one-sample Wilcoxon signed-rank test. Small, tie-free samples get exact
p-values by full enumeration; everything else uses a tie-corrected normal
approximation with continuity correction. Each result's ``method_note``
records which route produced it, how ties were handled, and how many zero
differences were dropped, so reported p-values stay auditable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Sequence

SIDES = ("two", "less", "greater")
METHODS = ("auto", "exact", "approx")

# Largest pooled (or effective) sample size for which the exact enumeration
# route is the default. C(12, 6) = 924 and 2**12 = 4096 keep it cheap.
EXACT_LIMIT = 12

_EPS = 1e-15
_MAX_ITER = 2000


@dataclass(frozen=True)
class Sample:
    """A labelled group of finite real observations."""

    label: str
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise ValueError(f"sample {self.label!r} is empty")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError(f"sample {self.label!r} contains non-finite values")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method_note: str


def midranks(values: Sequence[float]) -> list[float]:
    """Ranks 1..n where tied values share the average of their positions.

    midranks([1, 2, 2, 3]) == [1.0, 2.5, 2.5, 4.0]
    """
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def _tie_sizes(values: Sequence[float]) -> list[int]:
    """Sizes of tie groups (size >= 2) among the values."""
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return [t for t in counts.values() if t >= 2]


def _normal_sf(z: float) -> float:
    """Upper-tail probability of the standard normal distribution."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _pick_side(p_less: float, p_greater: float, sides: str) -> float:
    if sides == "less":
        return min(1.0, p_less)
    if sides == "greater":
        return min(1.0, p_greater)
    return min(1.0, 2.0 * min(p_less, p_greater))


def _check_sides_method(sides: str, method: str) -> None:
    if sides not in SIDES:
        raise ValueError(f"sides must be one of {SIDES}, got {sides!r}")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")


# -- Mann-Whitney U ----------------------------------------------------------


def mann_whitney_u(
    a: Sample, b: Sample, sides: str = "two", *, method: str = "auto"
) -> TestResult:
    """Rank-sum comparison of two independent samples.

    The statistic is U for ``a``: its midrank sum minus the minimum possible,
    so swapping the samples maps U to len(a)*len(b) - U. ``sides="less"``
    tests whether ``a`` tends below ``b``. With ``method="auto"`` an exact
    p-value is computed by enumerating all rank assignments whenever the
    pooled size is at most 12 with no ties; otherwise the tie-corrected
    normal approximation with continuity correction is used.
    """
    _check_sides_method(sides, method)
    n_a, n_b = len(a), len(b)
    pooled = a.values + b.values
    n = n_a + n_b
    ranks = midranks(pooled)
    u = sum(ranks[:n_a]) - n_a * (n_a + 1) / 2.0

    if len(set(pooled)) == 1:
        return TestResult(u, 1.0, "degenerate: all pooled values identical")

    ties = _tie_sizes(pooled)
    if method == "exact" and ties:
        raise ValueError("exact method requires tie-free data")
    exact = method == "exact" or (method == "auto" and not ties and n <= EXACT_LIMIT)

    if exact:
        total = 0
        count_le = 0
        count_ge = 0
        base = n_a * (n_a + 1) / 2.0
        for combo in combinations(range(n), n_a):
            u_perm = sum(ranks[i] for i in combo) - base
            total += 1
            if u_perm <= u + 1e-9:
                count_le += 1
            if u_perm >= u - 1e-9:
                count_ge += 1
        p_less = count_le / total
        p_greater = count_ge / total
        note = f"exact enumeration over C({n},{n_a}) rank assignments"
    else:
        mu = n_a * n_b / 2.0
        tie_term = sum(t**3 - t for t in ties)
        sigma2 = (n_a * n_b / 12.0) * ((n + 1) - tie_term / (n * (n - 1)))
        if sigma2 <= 0:
            return TestResult(u, 1.0, "degenerate: rank variance is zero")
        sigma = math.sqrt(sigma2)
        p_greater = _normal_sf((u - mu - 0.5) / sigma)
        p_less = _normal_sf((mu - u - 0.5) / sigma)
        corrections = "continuity correction"
        if ties:
            corrections = "tie-corrected variance, " + corrections
        note = f"normal approximation with {corrections}"
    return TestResult(u, _pick_side(p_less, p_greater, sides), note)


def pairwise_mann_whitney(
    groups: Sequence[Sample], sides: str = "two", *, bonferroni: bool = False
) -> list[tuple[str, str, TestResult]]:
    """Mann-Whitney over every pair of groups.

    ``bonferroni`` multiplies each p-value by the number of comparisons
    (clamped at 1) and says so in the method note; by default p-values are
    reported uncorrected.
    """
    if len(groups) < 2:
        raise ValueError("pairwise comparison needs at least two groups")
    pairs = list(combinations(range(len(groups)), 2))
    out = []
    for i, j in pairs:
        result = mann_whitney_u(groups[i], groups[j], sides)
        if bonferroni:
            result = TestResult(
                result.statistic,
                min(1.0, result.p_value * len(pairs)),
                result.method_note + f"; Bonferroni corrected for {len(pairs)} comparisons",
            )
        out.append((groups[i].label, groups[j].label, result))
    return out


# -- Kruskal-Wallis ----------------------------------------------------------


def kruskal_wallis(groups: Sequence[Sample]) -> TestResult:
    """Rank test for a location difference across two or more groups.

    Computes H from pooled midranks, divides by the tie correction, and
    refers the result to the chi-square distribution with k-1 degrees of
    freedom.
    """
    if len(groups) < 2:
        raise ValueError("Kruskal-Wallis needs at least two groups")
    pooled: list[float] = []
    sizes: list[int] = []
    for g in groups:
        pooled.extend(g.values)
        sizes.append(len(g))
    n = len(pooled)
    if n < 3:
        raise ValueError("Kruskal-Wallis needs a total of at least three values")
    if len(set(pooled)) == 1:
        return TestResult(0.0, 1.0, "degenerate: all values identical")

    ranks = midranks(pooled)
    h = 0.0
    offset = 0
    for size in sizes:
        r_sum = sum(ranks[offset : offset + size])
        h += r_sum * r_sum / size
        offset += size
    h = 12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)

    ties = _tie_sizes(pooled)
    correction = 1.0 - sum(t**3 - t for t in ties) / (n**3 - n)
    h_corrected = h / correction
    df = len(groups) - 1
    p = chi_square_sf(h_corrected, df)
    note = f"chi-square survival function, df={df}"
    if ties:
        note = "tie-corrected H; " + note
    return TestResult(h_corrected, p, note)


# -- one-sample Wilcoxon signed-rank ------------------------------------------


def wilcoxon_signed_rank_one_sample(
    s: Sample, target_median: float, sides: str = "two", *, method: str = "auto"
) -> TestResult:
    """Signed-rank test of a sample's median against a target value.

    Zero differences are dropped (their count lands in the method note).
    The statistic is W+, the rank sum of positive differences, ranked by
    absolute size with midranks for ties. ``sides="greater"`` tests whether
    the sample median lies above the target. Exact p-values enumerate all
    sign assignments when at most 12 nonzero differences remain and their
    absolute values are tie-free; otherwise the tie-corrected normal
    approximation with continuity correction applies.
    """
    _check_sides_method(sides, method)
    if not math.isfinite(target_median):
        raise ValueError("target median must be finite")
    diffs = [v - target_median for v in s.values]
    dropped = sum(1 for d in diffs if d == 0)
    diffs = [d for d in diffs if d != 0]
    drop_note = f"; {dropped} zero difference(s) dropped" if dropped else ""
    if not diffs:
        return TestResult(0.0, 1.0, "degenerate: all differences zero" + drop_note)

    n = len(diffs)
    abs_diffs = [abs(d) for d in diffs]
    ranks = midranks(abs_diffs)
    w_plus = sum(r for r, d in zip(ranks, diffs) if d > 0)

    ties = _tie_sizes(abs_diffs)
    if method == "exact" and ties:
        raise ValueError("exact method requires tie-free absolute differences")
    exact = method == "exact" or (method == "auto" and not ties and n <= EXACT_LIMIT)

    if exact:
        total = 2**n
        count_le = 0
        count_ge = 0
        for mask in range(total):
            w_perm = 0.0
            for i in range(n):
                if mask >> i & 1:
                    w_perm += ranks[i]
            if w_perm <= w_plus + 1e-9:
                count_le += 1
            if w_perm >= w_plus - 1e-9:
                count_ge += 1
        p_less = count_le / total
        p_greater = count_ge / total
        note = f"exact enumeration over 2^{n} sign assignments" + drop_note
    else:
        mu = n * (n + 1) / 4.0
        tie_term = sum(t**3 - t for t in ties)
        sigma2 = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term / 48.0
        if sigma2 <= 0:
            return TestResult(w_plus, 1.0, "degenerate: rank variance is zero" + drop_note)
        sigma = math.sqrt(sigma2)
        p_greater = _normal_sf((w_plus - mu - 0.5) / sigma)
        p_less = _normal_sf((mu - w_plus - 0.5) / sigma)
        corrections = "continuity correction"
        if ties:
            corrections = "tie-corrected variance, " + corrections
        note = f"normal approximation with {corrections}" + drop_note
    return TestResult(w_plus, _pick_side(p_less, p_greater, sides), note)


# -- chi-square survival function ---------------------------------------------


def _gamma_p_series(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) by power series (x < a+1)."""
    term = 1.0 / a
    total = term
    denom = a
    for _ in range(_MAX_ITER):
        denom += 1.0
        term *= x / denom
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise ArithmeticError(f"incomplete gamma series failed to converge (a={a}, x={x})")


def _gamma_q_continued_fraction(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) by continued fraction (x >= a+1)."""
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h * math.exp(-x + a * math.log(x) - math.lgamma(a))
    raise ArithmeticError(
        f"incomplete gamma continued fraction failed to converge (a={a}, x={x})"
    )


def regularized_gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(a, x)."""
    if a <= 0:
        raise ValueError(f"shape parameter must be positive, got {a}")
    if x < 0:
        raise ValueError(f"argument must be nonnegative, got {x}")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        q = 1.0 - _gamma_p_series(a, x)
    else:
        q = _gamma_q_continued_fraction(a, x)
    return min(1.0, max(0.0, q))


def chi_square_sf(x: float, df: int) -> float:
    """Upper-tail probability of the chi-square distribution with df degrees."""
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    if x < 0:
        raise ValueError(f"chi-square statistic must be nonnegative, got {x}")
    return regularized_gamma_q(df / 2.0, x / 2.0)


# -- CSV interchange -----------------------------------------------------------


def read_samples_csv(path: str | Path) -> list[Sample]:
    """Read labelled samples from CSV with header ``group,value``.

    Groups come back in order of first appearance.
    """
    p = Path(path)
    grouped: dict[str, list[float]] = {}
    with open(p, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{p}: empty samples file") from None
        if [h.strip() for h in header[:2]] != ["group", "value"]:
            raise ValueError(f"{p}: header must be 'group,value'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2:
                raise ValueError(f"{p}:{lineno}: expected 'group,value'")
            try:
                value = float(row[1])
            except ValueError:
                raise ValueError(f"{p}:{lineno}: {row[1]!r} is not a number") from None
            grouped.setdefault(row[0], []).append(value)
    if not grouped:
        raise ValueError(f"{p}: no sample rows")
    return [Sample(label, tuple(values)) for label, values in grouped.items()]
