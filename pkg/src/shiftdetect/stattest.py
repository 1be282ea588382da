"""Two-sample tests and the dispatcher mapping representations to tests.

Continuous representations are tested either per-dimension with the
Kolmogorov-Smirnov test aggregated by Bonferroni correction, or jointly
with an unbiased squared-MMD estimate whose p-value comes from a
permutation test on a cached kernel matrix. Categorical representations
use Pearson's chi-squared independence test on a 2xK contingency table.
Domain-classifier accuracies use an exact two-sided binomial test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaincc, gammaln

from .dimred import DrKind, Representation
from .errors import (
    BadCounts,
    DegenerateTable,
    DimensionMismatch,
    EmptyInput,
    EmptySample,
    IncompatibleMode,
    SampleCapExceeded,
    TooFewSamples,
)

MULTIVARIATE_SAMPLE_CAP = 1000


class TestTag(str, Enum):
    KS_BONFERRONI = "ks_bonferroni"
    MMD_PERM = "mmd_perm"
    CHI2 = "chi2"
    BINOMIAL = "binomial"


class TestMode(str, Enum):
    UNIVARIATE = "univariate"
    MULTIVARIATE = "multivariate"


@dataclass(frozen=True)
class TestOutcome:
    """Statistic, p-value and the accept/reject decision at level alpha."""

    statistic: float
    p_value: float
    alpha: float
    reject: bool
    test_tag: TestTag


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov

def kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution, Q(lam) = 2*sum_j (-1)^(j-1) exp(-2 j^2 lam^2).

    The series is truncated once terms drop below 1e-12; the result is
    clamped to [0, 1].
    """
    if lam <= 0.0:
        return 1.0
    total = 0.0
    sign = 1.0
    for j in range(1, 100_000):
        term = math.exp(-2.0 * j * j * lam * lam)
        if term < 1e-12:
            break
        total += sign * term
        sign = -sign
    return min(1.0, max(0.0, 2.0 * total))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample KS test: exact statistic, asymptotic p-value.

    The statistic is sup_z |F_a(z) - F_b(z)| evaluated over all pooled
    sample points (where the sup of the two step functions is attained).
    The p-value uses the Kolmogorov asymptotic distribution with the
    small-sample correction lam = (sqrt(ne) + 0.12 + 0.11/sqrt(ne)) * S
    where ne = n*m/(n+m).
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be non-empty")
    sa, sb = np.sort(a), np.sort(b)
    pooled = np.concatenate([sa, sb])
    cdf_a = np.searchsorted(sa, pooled, side="right") / sa.size
    cdf_b = np.searchsorted(sb, pooled, side="right") / sb.size
    stat = float(np.max(np.abs(cdf_a - cdf_b)))
    ne = sa.size * sb.size / (sa.size + sb.size)
    lam = (math.sqrt(ne) + 0.12 + 0.11 / math.sqrt(ne)) * stat
    return stat, kolmogorov_sf(lam)


def ks_pvalues_by_column(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """KS p-value for each column of two (N, K) matrices."""
    source = np.atleast_2d(np.asarray(source, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if source.shape[1] != target.shape[1]:
        raise DimensionMismatch(
            f"column counts differ: {source.shape[1]} vs {target.shape[1]}"
        )
    return np.array(
        [ks_two_sample(source[:, j], target[:, j])[1] for j in range(source.shape[1])]
    )


def bonferroni_aggregate(p_values, alpha: float) -> TestOutcome:
    """Combine K p-values conservatively: reject iff min(p) < alpha/K.

    The reported p_value is min(1, K * min(p)) so a single number can be
    compared against alpha directly; the statistic is the raw minimum.
    """
    p = np.asarray(p_values, dtype=np.float64).ravel()
    if p.size == 0:
        raise EmptyInput("no p-values to aggregate")
    k = p.size
    min_p = float(p.min())
    return TestOutcome(
        statistic=min_p,
        p_value=min(1.0, k * min_p),
        alpha=alpha,
        reject=min_p < alpha / k,
        test_tag=TestTag.KS_BONFERRONI,
    )


# ---------------------------------------------------------------------------
# Maximum mean discrepancy

def rbf_kernel(x, y, bandwidth: float = 1.0) -> float:
    """Squared exponential kernel exp(-||x-y||^2 / (2*bandwidth^2))."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DimensionMismatch(f"vector lengths differ: {x.size} vs {y.size}")
    sq = float(np.sum((x - y) ** 2))
    return math.exp(-0.5 * sq / (bandwidth * bandwidth))


def _pairwise_sq_dists(z: np.ndarray) -> np.ndarray:
    norms = np.sum(z * z, axis=1)
    sq = norms[:, None] + norms[None, :] - 2.0 * (z @ z.T)
    return np.maximum(sq, 0.0)


def _kernel_matrix(z: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-0.5 * _pairwise_sq_dists(z) / (bandwidth * bandwidth))


def median_bandwidth(x: np.ndarray, y: np.ndarray) -> float:
    """Median heuristic: bandwidth^2 = median of pooled pairwise squared distances / 2."""
    z = np.vstack([np.atleast_2d(x), np.atleast_2d(y)])
    sq = _pairwise_sq_dists(z)
    med = float(np.median(sq[np.triu_indices_from(sq, k=1)]))
    return math.sqrt(med / 2.0) if med > 0 else 1.0


def mmd2_unbiased(x, y, bandwidth: float = 1.0) -> float:
    """Unbiased squared-MMD estimate (diagonal terms excluded; may be negative).

    mmd2 = sum_{i != j} k(x_i, x_j) / (m(m-1))
         + sum_{i != j} k(y_i, y_j) / (n(n-1))
         - 2 * sum_{i, j} k(x_i, y_j) / (mn)
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    m, n = x.shape[0], y.shape[0]
    if m < 2 or n < 2:
        raise TooFewSamples(f"need at least 2 samples per side, got m={m}, n={n}")
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatch(f"feature dims differ: {x.shape[1]} vs {y.shape[1]}")
    k = _kernel_matrix(np.vstack([x, y]), bandwidth)
    kxx, kyy, kxy = k[:m, :m], k[m:, m:], k[:m, m:]
    term_x = (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
    term_y = (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
    term_xy = 2.0 * kxy.sum() / (m * n)
    return float(term_x + term_y - term_xy)


def _mmd2_from_assignments(kernel: np.ndarray, member_x: np.ndarray,
                           m: int, n: int) -> np.ndarray:
    """Batch-evaluate the unbiased MMD^2 from a cached kernel matrix.

    member_x is a (B, N) 0/1 matrix; row b marks which pooled samples play
    the role of X in permutation b. Uses kernel diag == 1 (RBF, identical
    points) to subtract diagonals in closed form.
    """
    total = kernel.sum()
    kv = member_x @ kernel  # (B, N)
    s_xx = np.einsum("bn,bn->b", kv, member_x) - m
    s_x_tot = kv.sum(axis=1)
    s_xy = s_x_tot - (s_xx + m)
    s_yy = total - 2.0 * s_x_tot + (s_xx + m) - n
    return s_xx / (m * (m - 1)) + s_yy / (n * (n - 1)) - 2.0 * s_xy / (m * n)


def mmd_permutation_test(x, y, n_perms: int = 1000, alpha: float = 0.05,
                         seed: int = 0, bandwidth: float | None = 1.0) -> TestOutcome:
    """Permutation test on the unbiased MMD^2 with a cached kernel matrix.

    The pooled kernel matrix is computed once; each permutation relabels
    indices and re-evaluates the statistic from the cache. p-value is the
    add-one estimator (1 + #{perm >= observed}) / (1 + n_perms), which is
    valid and strictly positive. Permutation i draws its shuffle from a
    generator seeded by (seed, i), so results do not depend on evaluation
    order. bandwidth=None selects the median heuristic.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    m, n = x.shape[0], y.shape[0]
    if m < 2 or n < 2:
        raise TooFewSamples(f"need at least 2 samples per side, got m={m}, n={n}")
    if n_perms < 1:
        raise ValueError("n_perms must be >= 1")
    if bandwidth is None:
        bandwidth = median_bandwidth(x, y)

    pooled = np.vstack([x, y])
    total_n = m + n
    kernel = _kernel_matrix(pooled, bandwidth)
    kxx, kyy, kxy = kernel[:m, :m], kernel[m:, m:], kernel[:m, m:]
    observed = float(
        (kxx.sum() - np.trace(kxx)) / (m * (m - 1))
        + (kyy.sum() - np.trace(kyy)) / (n * (n - 1))
        - 2.0 * kxy.sum() / (m * n)
    )

    member_x = np.zeros((n_perms, total_n))
    for i in range(n_perms):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        member_x[i, rng.permutation(total_n)[:m]] = 1.0
    perm_stats = _mmd2_from_assignments(kernel, member_x, m, n)
    p = (1.0 + int(np.sum(perm_stats >= observed))) / (1.0 + n_perms)
    return TestOutcome(
        statistic=observed,
        p_value=p,
        alpha=alpha,
        reject=p < alpha,
        test_tag=TestTag.MMD_PERM,
    )


# ---------------------------------------------------------------------------
# Chi-squared and binomial

def chi2_sf(x: float, df: int) -> float:
    """Upper-tail probability of the chi-squared distribution via the
    regularized incomplete gamma function."""
    if x <= 0.0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def chi2_independence(counts) -> tuple[float, float]:
    """Pearson independence test on a 2xK table of class frequencies.

    Expected cell counts are E_ij = N * p_i. * p_.j. Columns whose combined
    total is zero are dropped and the column count adjusted; no continuity
    correction or pseudo-counts. Degrees of freedom = K_effective - 1.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 2 or counts.shape[0] != 2:
        raise DimensionMismatch(f"expected a 2xK table, got shape {counts.shape}")
    if (counts < 0).any():
        raise ValueError("counts must be nonnegative")
    row_tot = counts.sum(axis=1)
    if (row_tot == 0).any():
        raise DegenerateTable("both rows must contain at least one observation")
    keep = counts.sum(axis=0) > 0
    counts = counts[:, keep]
    k_eff = counts.shape[1]
    if k_eff < 2:
        raise DegenerateTable(f"need at least 2 non-empty columns, got {k_eff}")
    col_tot = counts.sum(axis=0)
    n_sum = counts.sum()
    expected = np.outer(row_tot, col_tot) / n_sum
    x2 = float(np.sum((counts - expected) ** 2 / expected))
    return x2, chi2_sf(x2, k_eff - 1)


def _log_binom_pmf(i: np.ndarray, n: int) -> np.ndarray:
    return gammaln(n + 1) - gammaln(i + 1.0) - gammaln(n - i + 1.0) + n * math.log(0.5)


def binomial_two_sided(successes: int, n: int) -> float:
    """Exact two-sided p under Bin(n, 1/2): 2 * min(P(X<=k), P(X>=k)), clamped to 1.

    Tail sums are accumulated in the log domain so extreme tails (e.g.
    2^-100) stay accurate.
    """
    if n < 1 or successes < 0 or successes > n:
        raise BadCounts(f"successes={successes}, n={n}")
    lower_i = np.arange(0, successes + 1, dtype=np.float64)
    upper_i = np.arange(successes, n + 1, dtype=np.float64)

    def logsumexp(v):
        mx = np.max(v)
        return mx + math.log(np.sum(np.exp(v - mx)))

    log_lower = logsumexp(_log_binom_pmf(lower_i, n))
    log_upper = logsumexp(_log_binom_pmf(upper_i, n))
    p = 2.0 * math.exp(min(log_lower, log_upper))
    return min(1.0, p)


# ---------------------------------------------------------------------------
# Dispatch

def categorical_contingency(source_ids: np.ndarray, target_ids: np.ndarray,
                            arity: int) -> np.ndarray:
    """2xK table of class frequencies (row 0 source, row 1 target)."""
    return np.stack([
        np.bincount(np.asarray(source_ids, dtype=np.int64), minlength=arity),
        np.bincount(np.asarray(target_ids, dtype=np.int64), minlength=arity),
    ])


def dispatch_test(rep_source: Representation, rep_target: Representation,
                  kind: DrKind, mode: TestMode, alpha: float = 0.05,
                  seed: int = 0, n_perms: int = 1000) -> TestOutcome:
    """Route a pair of representations to the appropriate two-sample test.

    Continuous + univariate: per-dimension KS tests aggregated with the
    Bonferroni correction. Continuous + multivariate: MMD permutation test,
    only admissible up to MULTIVARIATE_SAMPLE_CAP target samples.
    Categorical (hard predictions): chi-squared independence test. The
    domain-classifier method has no standalone representation and is
    handled by the experiment harness.
    """
    if kind == DrKind.CLASSIF:
        raise IncompatibleMode(
            "the domain classifier is tested end-to-end (binomial on held-out accuracy)"
        )
    if rep_source.is_categorical != rep_target.is_categorical:
        raise IncompatibleMode("source and target representations disagree in kind")

    if rep_source.is_categorical:
        if mode != TestMode.UNIVARIATE:
            raise IncompatibleMode("categorical representations support only the chi-squared path")
        arity = max(rep_source.arity, rep_target.arity)
        table = categorical_contingency(rep_source.values, rep_target.values, arity)
        x2, p = chi2_independence(table)
        return TestOutcome(statistic=x2, p_value=p, alpha=alpha,
                           reject=p < alpha, test_tag=TestTag.CHI2)

    if mode == TestMode.UNIVARIATE:
        p_values = ks_pvalues_by_column(rep_source.values, rep_target.values)
        out = bonferroni_aggregate(p_values, alpha)
        return out

    if rep_target.values.shape[0] > MULTIVARIATE_SAMPLE_CAP:
        raise SampleCapExceeded(
            f"multivariate mode is capped at {MULTIVARIATE_SAMPLE_CAP} target samples, "
            f"got {rep_target.values.shape[0]}"
        )
    return mmd_permutation_test(rep_source.values, rep_target.values,
                                n_perms=n_perms, alpha=alpha, seed=seed)
