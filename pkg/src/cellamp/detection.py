"""LLR computation, thresholding, multi-BS aggregation, and error probabilities.

Decisions reduce to thresholding the squared matched-filter norm (one
BS) or a gain-weighted sum of squared norms (several BSs).  Under the
Gaussian effective-noise model those statistics are scaled chi-square
variables with 2M degrees of freedom per BS, which gives closed-form
error probabilities: a regularised incomplete gamma for one BS, and a
nested polynomial-times-exponential recursion for weighted sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammainc, ndtr
from scipy.stats import binom

from .rng import make_rng

# Fixed substream for the Monte Carlo fallback so analytic calls stay
# deterministic without threading a seed through every evaluation.
_MC_FALLBACK_SEED = 0x5CA1AB1E
_MC_FALLBACK_SAMPLES = 10**6

# Closed-form evaluation is abandoned when the estimated float
# cancellation exceeds 1e-6 of the value; the absolute floor keeps
# vanishing probabilities analytic instead of handing them to a Monte
# Carlo estimate that cannot resolve them.
_CANCEL_REL = 1e-6
_CANCEL_ABS = 1e-12


def llr(norm_sq, gain, tau_sq, num_antennas):
    """Log-likelihood ratio of activity given the squared matched-filter norm.

    Delta * ||x||^2 - M log(1 + theta), increasing in the norm whenever
    the gain is positive.
    """
    if np.any(np.asarray(tau_sq) <= 0.0):
        raise ValueError("tau_sq must be positive")
    g2 = np.asarray(gain, dtype=float) ** 2
    theta = g2 / tau_sq
    delta = 1.0 / tau_sq - 1.0 / (g2 + tau_sq)
    return delta * np.asarray(norm_sq, dtype=float) - num_antennas * np.log1p(theta)


def llr_boundary(gain, tau_sq, num_antennas):
    """Squared-norm threshold where the LLR crosses zero (requires gain > 0)."""
    g2 = np.asarray(gain, dtype=float) ** 2
    if np.any(g2 <= 0.0):
        raise ValueError("zero-gain users have no finite decision boundary")
    theta = g2 / tau_sq
    delta = 1.0 / tau_sq - 1.0 / (g2 + tau_sq)
    return num_antennas * np.log1p(theta) / delta


@dataclass
class LlrRecord:
    """One BS's soft decision about one user."""

    bs_id: int
    cell_id: int
    user_id: int
    squared_norm: float
    gain: float
    tau_sq: float
    num_antennas: int
    theta: float
    delta: float
    llr: float


def make_llr_record(bs_id, cell_id, user_id, squared_norm, gain, tau_sq, num_antennas) -> LlrRecord:
    g2 = gain * gain
    theta = g2 / tau_sq
    delta = 1.0 / tau_sq - 1.0 / (g2 + tau_sq)
    value = delta * squared_norm - num_antennas * math.log1p(theta)
    return LlrRecord(
        bs_id=bs_id, cell_id=cell_id, user_id=user_id,
        squared_norm=squared_norm, gain=gain, tau_sq=tau_sq,
        num_antennas=num_antennas, theta=theta, delta=delta, llr=value,
    )


class AggregatedLlr(NamedTuple):
    statistic: float   # sum_j Delta_j ||x_j||^2, the monotone decision statistic
    llr: float         # statistic - sum_j M log(1 + theta_j)


def aggregate(records) -> AggregatedLlr:
    """Combine one user's records from its serving BSs by LLR summation."""
    records = list(records)
    if not records:
        raise ValueError("aggregate requires at least one record")
    statistic = math.fsum(r.delta * r.squared_norm for r in records)
    total = math.fsum(r.llr for r in records)
    return AggregatedLlr(statistic=statistic, llr=total)


# ---------------------------------------------------------------------------
# Closed-form error probabilities
# ---------------------------------------------------------------------------


def pm_pf_massive_analytic(gain, tau_sq, num_antennas, threshold):
    """(miss, false-alarm) probabilities for a single-BS norm test.

    The squared norm is (g^2 + tau^2)/2 resp. tau^2/2 times a chi-square
    with 2M degrees of freedom, so both probabilities are regularised
    incomplete gamma values.
    """
    if threshold < 0.0:
        return 0.0, 1.0
    g2 = gain * gain
    p_miss = float(gammainc(num_antennas, threshold / (g2 + tau_sq)))
    p_false = float(1.0 - gammainc(num_antennas, threshold / tau_sq))
    return p_miss, p_false


def pm_pf_clt(gain, tau_sq, num_antennas, threshold):
    """Gaussian-CDF approximations of the single-BS error probabilities.

    Valid for large antenna counts only; the exact incomplete-gamma form
    should be preferred everywhere else.
    """
    m = num_antennas
    g2 = gain * gain
    p_miss = float(ndtr((threshold / (g2 + tau_sq) - m) / math.sqrt(m)))
    p_false = float(1.0 - ndtr((threshold / tau_sq - m) / math.sqrt(m)))
    return p_miss, p_false


def _slog_add(sign_a, log_a, sign_b, log_b):
    """Add two signed-log numbers, returning (sign, log magnitude)."""
    if sign_a == 0:
        return sign_b, log_b
    if sign_b == 0:
        return sign_a, log_a
    if log_a < log_b:
        sign_a, log_a, sign_b, log_b = sign_b, log_b, sign_a, log_a
    d = log_b - log_a
    if sign_a == sign_b:
        return sign_a, log_a + math.log1p(math.exp(d))
    diff = -math.expm1(d)  # 1 - exp(d) in (0, 1]
    if diff <= 0.0:
        return 0, -math.inf
    return sign_a, log_a + math.log(diff)


_LOG_EPS = math.log(2.22e-16)


class WeightedGammaSumCdf:
    """CDF of sum_j w_j G_j with G_j iid Gamma(shape, 1), by nested antiderivatives.

    Equal weights are merged first: k identical weights contribute a
    single Gamma with shape k * M, so the all-equal case is one
    regularised incomplete gamma evaluated at machine precision.
    Distinct groups are then peeled one at a time, expressing the CDF as
    a combination of terms c * x^p * exp(-q x); each peel integrates a
    polynomial times an exponential in closed form.  Coefficients are
    carried in signed log space together with a propagated first-order
    error magnitude, so evaluations report how much float cancellation
    they may carry.  Groups are processed in decreasing weight order so
    every intermediate decay rate stays nonnegative.
    """

    MAX_WEIGHTS = 4  # recursion depth supported before Monte Carlo takes over

    def __init__(self, weights, shape: int):
        ws = sorted((float(w) for w in weights), reverse=True)
        if len(ws) > self.MAX_WEIGHTS:
            raise ValueError(f"closed form supports at most {self.MAX_WEIGHTS} weights")
        if any(w <= 0.0 for w in ws):
            raise ValueError("weights must be positive")
        self.weights = ws
        self.shape = int(shape)
        groups: list = []
        for w in ws:
            if groups and groups[-1][0] == w:
                groups[-1][1] += self.shape
            else:
                groups.append([w, self.shape])
        self._groups = [(w, a) for w, a in groups]
        self._single = self._groups[0] if len(self._groups) == 1 else None
        self._terms = None
        if self._single is None:
            # key (power, rate_idx) -> [sign, logmag, log error magnitude]
            terms = {(0, -1): [1, 0.0, -math.inf]}
            for idx, (w, a) in enumerate(self._groups):
                terms = self._peel(terms, idx)
            self._terms = [
                (p, r, s, lm, le) for (p, r), (s, lm, le) in terms.items() if s != 0
            ]

    def _rate(self, idx: int) -> float:
        return 0.0 if idx == -1 else 1.0 / self._groups[idx][0]

    def _peel(self, terms, widx):
        w, a = self._groups[widx]
        lgamma_a = math.lgamma(a)
        log_w = math.log(w)
        out: dict = {}

        def add(p, r, sign, logmag, logerr):
            # every contribution also carries its own rounding noise
            logerr = np.logaddexp(logerr, logmag + _LOG_EPS + math.log(8.0))
            entry = out.get((p, r))
            if entry is None:
                out[(p, r)] = [sign, logmag, logerr]
                return
            s_old, lm_old, le_old = entry
            ns, nlm = _slog_add(s_old, lm_old, sign, logmag)
            entry[0], entry[1] = ns, nlm
            entry[2] = np.logaddexp(le_old, logerr)

        for (p, r), (sign, logmag, logerr) in terms.items():
            if sign == 0:
                continue
            s_rate = 1.0 if r == -1 else 1.0 - w / self._groups[r][0]
            log_s = math.log(s_rate)
            for k in range(p + 1):
                sign_a = sign * (-1 if k % 2 else 1)
                factor = _log_comb(p, k) + k * log_w - lgamma_a
                n = a - 1 + k
                base_f = factor + math.lgamma(n + 1) - (n + 1) * log_s
                add(p - k, r, sign_a, logmag + base_f, logerr + base_f)
                for u in range(n + 1):
                    tail_f = base_f + u * (log_s - log_w) - math.lgamma(u + 1)
                    add(p - k + u, widx, -sign_a, logmag + tail_f, logerr + tail_f)
        return out

    def value(self, x: float):
        """(cdf(x), absolute error estimate from float cancellation)."""
        if x <= 0.0:
            return 0.0, 0.0
        if self._single is not None:
            w, a = self._single
            val = float(gammainc(a, x / w))
            return val, 8.0 * 2.22e-16
        log_x = math.log(x)
        exps, signs, errs = [], [], []
        for p, r, sign, logmag, logerr in self._terms:
            decay = p * log_x - self._rate(r) * x
            exps.append(logmag + decay)
            signs.append(sign)
            errs.append(logerr + decay)
        if max(exps) > 700.0:
            return math.nan, math.inf
        total = math.fsum(s * math.exp(e) for s, e in zip(signs, exps))
        err = math.fsum(math.exp(min(e, 700.0)) for e in errs)
        err += 2.22e-16 * math.fsum(math.exp(e) for e in exps)
        return total, err


def _log_comb(n, k):
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


class McWeightedGammaSum:
    """Empirical CDF of sum_j w_j Gamma(shape, 1) from cached sorted draws."""

    def __init__(self, weights, shape, samples=_MC_FALLBACK_SAMPLES, seed=_MC_FALLBACK_SEED):
        rng = make_rng(seed, "weighted-gamma-mc", len(weights))
        total = np.zeros(samples)
        for w in weights:
            total += w * rng.standard_gamma(shape, size=samples)
        self._draws = np.sort(total)

    def value(self, x: float):
        p = np.searchsorted(self._draws, x, side="right") / len(self._draws)
        se = math.sqrt(max(p * (1.0 - p), 1.0 / len(self._draws)) / len(self._draws))
        return float(p), se


class _SumCdf:
    """Closed form with per-evaluation reliability check and MC fallback."""

    def __init__(self, weights, shape, mc_samples=_MC_FALLBACK_SAMPLES, seed=_MC_FALLBACK_SEED):
        self.weights = [float(w) for w in weights]
        self.shape = shape
        self._mc_samples = mc_samples
        self._seed = seed
        self._mc = None
        self._closed = None
        self.used_monte_carlo = False
        if len(self.weights) <= WeightedGammaSumCdf.MAX_WEIGHTS:
            self._closed = WeightedGammaSumCdf(self.weights, shape)

    def _ensure_mc(self):
        if self._mc is None:
            self._mc = McWeightedGammaSum(
                self.weights, self.shape, samples=self._mc_samples, seed=self._seed
            )
        return self._mc

    def cdf(self, x: float) -> float:
        if self._closed is not None:
            val, err = self._closed.value(x)
            if math.isfinite(val) and err <= max(_CANCEL_REL * abs(val), _CANCEL_ABS):
                return min(max(val, 0.0), 1.0)
        self.used_monte_carlo = True
        return self._ensure_mc().value(x)[0]


class CoopErrorResult(NamedTuple):
    p_miss: float
    p_false: float
    monte_carlo: bool  # warning flag: at least one probability came from sampling


def pm_pf_coop_analytic(
    gains, tau_sq, num_antennas, threshold,
    mc_samples=_MC_FALLBACK_SAMPLES, seed=_MC_FALLBACK_SEED,
) -> CoopErrorResult:
    """Error probabilities of the aggregated weighted-norm test at several BSs.

    Under activity the statistic is sum_j theta_j Gamma(M, 1); under
    inactivity the weights shrink to theta_j/(1+theta_j).  Both CDFs are
    evaluated in closed form up to four BSs, with a deterministic Monte
    Carlo fallback beyond that depth or when float cancellation would
    exceed the reliability threshold.
    """
    theta = np.asarray([g * g / tau_sq for g in np.atleast_1d(gains)], dtype=float)
    theta = theta[theta > 0.0]
    if threshold < 0.0:
        return CoopErrorResult(0.0, 1.0, False)
    if theta.size == 0:
        # All-zero gains: the statistic is identically zero under both hypotheses.
        active = 0.0 > threshold
        return CoopErrorResult(0.0 if active else 1.0, 1.0 if active else 0.0, False)
    cdf_active = _SumCdf(theta, num_antennas, mc_samples, seed)
    cdf_null = _SumCdf(theta / (1.0 + theta), num_antennas, mc_samples, seed)
    p_miss = cdf_active.cdf(threshold)
    p_false = 1.0 - cdf_null.cdf(threshold)
    return CoopErrorResult(
        p_miss, p_false, cdf_active.used_monte_carlo or cdf_null.used_monte_carlo
    )


# ---------------------------------------------------------------------------
# Equal-error thresholds
# ---------------------------------------------------------------------------


def equal_error_threshold(gains, tau_sq, num_antennas, tol=1e-9):
    """Threshold where miss and false-alarm probabilities coincide.

    ``gains`` may be a scalar (single-BS test) or a sequence (aggregated
    test).  The miss-minus-false difference is continuous and increases
    from -1 to +1, so bisection converges unconditionally; iteration
    stops once |P_M - P_F| < tol.  Returns (threshold, common error).
    """
    scalar = np.isscalar(gains)
    if scalar:
        def pm_pf(l):
            return pm_pf_massive_analytic(gains, tau_sq, num_antennas, l)
        theta_sum = gains * gains / tau_sq
    else:
        theta = np.asarray([g * g / tau_sq for g in gains], dtype=float)
        theta = theta[theta > 0.0]
        if theta.size == 0:
            scalar = True

            def pm_pf(l):
                return pm_pf_massive_analytic(0.0, tau_sq, num_antennas, l)
            theta_sum = 0.0
        else:
            active = _SumCdf(theta, num_antennas)
            null = _SumCdf(theta / (1.0 + theta), num_antennas)

            def pm_pf(l):
                return active.cdf(l), 1.0 - null.cdf(l)
            theta_sum = float(np.sum(theta))

    lo = 0.0
    hi = max(4.0 * num_antennas * (theta_sum + 1.0), 1.0)
    for _ in range(200):
        pm, pf = pm_pf(hi)
        if pm - pf > 0.0:
            break
        hi *= 2.0
    else:
        raise RuntimeError("failed to bracket the equal-error threshold")
    mid = hi
    for _ in range(500):
        mid = 0.5 * (lo + hi)
        pm, pf = pm_pf(mid)
        diff = pm - pf
        if abs(diff) < tol or (hi - lo) < 1e-15 * max(hi, 1.0):
            break
        if diff < 0.0:
            lo = mid
        else:
            hi = mid
    return mid, 0.5 * (pm + pf)


def _collapse_atoms(support, p_active, p_null, max_atoms):
    """Merge duplicate support atoms; bucket onto a grid if still too many.

    Bucketing at 2^20 points costs a threshold resolution of the support
    span times 1e-6, which is far below any error-probability effect of
    interest.
    """
    uniq, inverse = np.unique(support, return_inverse=True)
    if len(uniq) < len(support):
        pa = np.zeros(len(uniq))
        pn = np.zeros(len(uniq))
        np.add.at(pa, inverse, p_active)
        np.add.at(pn, inverse, p_null)
        support, p_active, p_null = uniq, pa, pn
    if len(support) > max_atoms:
        hi = support.max()
        idx = np.minimum((support / hi * (max_atoms - 1)).astype(np.int64), max_atoms - 1)
        grid = np.arange(max_atoms) * (hi / (max_atoms - 1))
        pa = np.zeros(max_atoms)
        pn = np.zeros(max_atoms)
        np.add.at(pa, idx, p_active)
        np.add.at(pn, idx, p_null)
        keep = (pa > 0) | (pn > 0)
        support, p_active, p_null = grid[keep], pa[keep], pn[keep]
    return support, p_active, p_null


def quantized_equal_error_threshold(gains, tau_sq, num_antennas, l_max_list, q_bits):
    """Equal-error threshold for the aggregated *quantized* statistic.

    The quantized statistic is discrete, so its law is the convolution of
    the per-BS reproduction-level distributions; both error curves are
    step functions and the threshold is placed between the two support
    atoms that minimise |P_M - P_F|.  Reusing the raw-statistic threshold
    instead would strand strong users whose weighted quantizer floor
    already exceeds it, pinning their false-alarm rate at one.

    Returns (threshold, common error).
    """
    from .quantize import level_probabilities

    gains = np.asarray(gains, dtype=float)
    levels = 2**q_bits
    support = np.zeros(1)
    p_active = np.ones(1)
    p_null = np.ones(1)
    max_atoms = 1 << 20
    for g, l_max in zip(gains, l_max_list):
        delta = 1.0 / tau_sq - 1.0 / (g * g + tau_sq)
        step = l_max / levels
        values = delta * (np.arange(levels) + 0.5) * step
        pa = level_probabilities(l_max, q_bits, num_antennas, g * g + tau_sq)
        pn = level_probabilities(l_max, q_bits, num_antennas, tau_sq)
        support = (support[:, None] + values[None, :]).ravel()
        p_active = (p_active[:, None] * pa[None, :]).ravel()
        p_null = (p_null[:, None] * pn[None, :]).ravel()
        support, p_active, p_null = _collapse_atoms(support, p_active, p_null, max_atoms)
    order = np.argsort(support, kind="stable")
    support = support[order]
    # P_M just below each atom's upper gap; P_F strictly above it
    cum_active = np.cumsum(p_active[order])
    cum_null = np.cumsum(p_null[order])
    p_miss = cum_active
    p_false = 1.0 - cum_null
    diff = np.abs(p_miss - p_false)
    best = int(np.argmin(diff))
    if best + 1 < len(support):
        threshold = 0.5 * (support[best] + support[best + 1])
    else:
        threshold = support[best] + 1.0
    return float(threshold), float(0.5 * (p_miss[best] + p_false[best]))


# ---------------------------------------------------------------------------
# Error profiles
# ---------------------------------------------------------------------------


def wilson_interval(successes, trials, z=1.959963984540054):
    """Wilson score interval; returns (lo, hi) arrays, NaN where trials == 0."""
    k = np.asarray(successes, dtype=float)
    n = np.asarray(trials, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        phat = k / n
        denom = 1.0 + z * z / n
        center = (phat + z * z / (2 * n)) / denom
        half = z * np.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    lo = np.where(n > 0, center - half, np.nan)
    hi = np.where(n > 0, center + half, np.nan)
    return lo, hi


@dataclass
class ErrorProfile:
    """Per-user error probabilities plus CDF summaries.

    ``p_equal`` holds the per-user equal-error value: the analytic
    common error for analytic profiles, or the pooled error rate at the
    equal-error threshold for empirical ones.  The cell-edge figure is a
    high percentile of those values.
    """

    source: str
    cell_ids: np.ndarray
    user_ids: np.ndarray
    gains: np.ndarray
    thresholds: np.ndarray
    p_miss: np.ndarray
    p_false: np.ndarray
    p_equal: np.ndarray
    n_active: np.ndarray | None = None
    n_inactive: np.ndarray | None = None
    miss_ci: tuple | None = None
    false_ci: tuple | None = None

    @property
    def num_users(self) -> int:
        return len(self.user_ids)

    def cdf_values(self) -> np.ndarray:
        vals = self.p_equal[np.isfinite(self.p_equal)]
        return np.sort(vals)

    def cell_edge(self, percentile: float = 95.0) -> float:
        return float(np.percentile(self.cdf_values(), percentile))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# schema=cellamp-profile-v1\n")
            fh.write(f"# source={self.source}\n")
            fh.write("cell,user,gain,threshold,p_miss,p_false,p_equal\n")
            for i in range(self.num_users):
                fh.write(
                    f"{self.cell_ids[i]},{self.user_ids[i]},{self.gains[i]:.9e},"
                    f"{self.thresholds[i]:.9e},{self.p_miss[i]:.9e},"
                    f"{self.p_false[i]:.9e},{self.p_equal[i]:.9e}\n"
                )

    def cdf_to_csv(self, path) -> None:
        vals = self.cdf_values()
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# schema=cellamp-cdf-v1\n")
            fh.write(f"# source={self.source}\n")
            fh.write("percentile,p_equal\n")
            for i, v in enumerate(vals):
                pct = 100.0 * (i + 1) / len(vals)
                fh.write(f"{pct:.6f},{v:.9e}\n")


class DetectionCounts:
    """Per-user error tallies with an order-independent merge.

    Counts are integers, so merging in any order produces identical
    results and trials can run in parallel.
    """

    def __init__(self, num_users: int):
        self.n_active = np.zeros(num_users, dtype=np.int64)
        self.n_miss = np.zeros(num_users, dtype=np.int64)
        self.n_inactive = np.zeros(num_users, dtype=np.int64)
        self.n_false = np.zeros(num_users, dtype=np.int64)

    def update(self, active, declared_active) -> None:
        act = np.asarray(active, dtype=bool)
        dec = np.asarray(declared_active, dtype=bool)
        self.n_active += act
        self.n_inactive += ~act
        self.n_miss += act & ~dec
        self.n_false += ~act & dec

    def merge(self, other: "DetectionCounts") -> "DetectionCounts":
        self.n_active += other.n_active
        self.n_miss += other.n_miss
        self.n_inactive += other.n_inactive
        self.n_false += other.n_false
        return self

    def to_profile(self, gains, thresholds, cell_ids=None, user_ids=None) -> ErrorProfile:
        u = len(self.n_active)
        with np.errstate(divide="ignore", invalid="ignore"):
            p_miss = np.where(self.n_active > 0, self.n_miss / self.n_active, np.nan)
            p_false = np.where(self.n_inactive > 0, self.n_false / self.n_inactive, np.nan)
        total = self.n_active + self.n_inactive
        # At the equal-error threshold both error types share one rate, so
        # pooling miss and false-alarm counts estimates it with all trials.
        p_equal = np.where(total > 0, (self.n_miss + self.n_false) / total, np.nan)
        return ErrorProfile(
            source="empirical",
            cell_ids=np.zeros(u, dtype=int) if cell_ids is None else np.asarray(cell_ids),
            user_ids=np.arange(u) if user_ids is None else np.asarray(user_ids),
            gains=np.asarray(gains, dtype=float),
            thresholds=np.asarray(thresholds, dtype=float),
            p_miss=p_miss,
            p_false=p_false,
            p_equal=p_equal,
            n_active=self.n_active.copy(),
            n_inactive=self.n_inactive.copy(),
            miss_ci=wilson_interval(self.n_miss, self.n_active),
            false_ci=wilson_interval(self.n_false, self.n_inactive),
        )


def empirical_error_profile(trial_statistics, trial_activities, thresholds,
                            gains=None, cell_ids=None, user_ids=None) -> ErrorProfile:
    """Tally per-user errors of the threshold test across trials.

    ``trial_statistics`` and ``trial_activities`` are iterables of
    per-trial arrays (one entry per user); a user is declared active
    when its statistic exceeds its threshold.
    """
    thresholds = np.asarray(thresholds, dtype=float)
    counts = DetectionCounts(len(thresholds))
    for stats, active in zip(trial_statistics, trial_activities):
        counts.update(active, np.asarray(stats) > thresholds)
    if gains is None:
        gains = np.full(len(thresholds), np.nan)
    return counts.to_profile(gains, thresholds, cell_ids, user_ids)


def analytic_profile_massive(gains, tau_sq, num_antennas, cell_ids=None, user_ids=None) -> ErrorProfile:
    """Per-user equal-error thresholds and probabilities for single-BS tests."""
    gains = np.asarray(gains, dtype=float)
    u = len(gains)
    thresholds = np.empty(u)
    p_eq = np.empty(u)
    for i, g in enumerate(gains):
        thresholds[i], p_eq[i] = equal_error_threshold(float(g), tau_sq, num_antennas)
    return ErrorProfile(
        source="analytic",
        cell_ids=np.zeros(u, dtype=int) if cell_ids is None else np.asarray(cell_ids),
        user_ids=np.arange(u) if user_ids is None else np.asarray(user_ids),
        gains=gains,
        thresholds=thresholds,
        p_miss=p_eq.copy(),
        p_false=p_eq.copy(),
        p_equal=p_eq.copy(),
    )


def analytic_profile_coop(gain_lists, tau_sq, num_antennas, cell_ids=None, user_ids=None) -> ErrorProfile:
    """Equal-error profile for aggregated tests; one gain list per user."""
    u = len(gain_lists)
    thresholds = np.empty(u)
    p_eq = np.empty(u)
    first_gain = np.empty(u)
    for i, gl in enumerate(gain_lists):
        gl = np.asarray(gl, dtype=float)
        first_gain[i] = gl.max(initial=0.0)
        thresholds[i], p_eq[i] = equal_error_threshold(gl, tau_sq, num_antennas)
    return ErrorProfile(
        source="analytic",
        cell_ids=np.zeros(u, dtype=int) if cell_ids is None else np.asarray(cell_ids),
        user_ids=np.arange(u) if user_ids is None else np.asarray(user_ids),
        gains=first_gain,
        thresholds=thresholds,
        p_miss=p_eq.copy(),
        p_false=p_eq.copy(),
        p_equal=p_eq.copy(),
    )


# ---------------------------------------------------------------------------
# CDF comparisons
# ---------------------------------------------------------------------------


def empirical_cdf(values, xs) -> np.ndarray:
    sv = np.sort(np.asarray(values, dtype=float))
    return np.searchsorted(sv, xs, side="right") / len(sv)


def cdf_sup_gap(values_a, values_b, lower=None) -> float:
    """Two-sample Kolmogorov distance, optionally restricted to x >= lower."""
    xs = np.union1d(np.asarray(values_a, dtype=float), np.asarray(values_b, dtype=float))
    if lower is not None:
        xs = xs[xs >= lower]
    if xs.size == 0:
        return 0.0
    return float(np.max(np.abs(empirical_cdf(values_a, xs) - empirical_cdf(values_b, xs))))


def predicted_estimator_cdf(p_true, trials, xs) -> np.ndarray:
    """CDF the theory predicts for per-user error rates measured over n trials.

    At the equal-error threshold each trial errs with the user's common
    probability, so the measured rate is Binomial(n, p)/n; the predicted
    population CDF is the average of those binomial CDFs.
    """
    p_true = np.asarray(p_true, dtype=float)
    ks = np.floor(np.asarray(xs, dtype=float)[:, None] * trials + 1e-9)
    return binom.cdf(ks, trials, p_true[None, :]).mean(axis=1)


def theory_vs_empirical_sup_gap(measured, p_true, trials) -> float:
    """Sup gap between the measured per-user rate CDF and its predicted law.

    Resolution-aware counterpart of the plain Kolmogorov distance: the
    analytic values are pushed through the finite-trial sampling before
    comparison, so the statistic converges to the plain CDF gap as
    trials grow instead of being dominated by estimator granularity.
    """
    measured = np.asarray(measured, dtype=float)
    xs = np.union1d(measured, np.asarray(p_true, dtype=float))
    emp = empirical_cdf(measured, xs)
    pred = predicted_estimator_cdf(p_true, trials, xs)
    return float(np.max(np.abs(emp - pred)))
