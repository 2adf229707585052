"""User-specific uniform quantization of the squared matched-filter norm.

Fronthaul links carry a quantized version of each forwarded statistic;
the central unit rebuilds LLRs from the reproduction levels since the
per-user weights are known there.  The codebook is uniform on
[0, l_max] with l_max chosen per user so the statistic falls inside the
range with a configured coverage probability under its two-component
mixture law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammainc

_LMAX_SOLVER_TOL = 1e-8


@dataclass
class QuantizerSpec:
    """Uniform midpoint codebook for one (BS, user) statistic."""

    q_bits: int
    coverage: float
    l_max: float

    def __post_init__(self):
        if self.q_bits < 0:
            raise ValueError("q_bits must be nonnegative")
        if not 0.0 < self.coverage < 1.0:
            raise ValueError("coverage must lie strictly in (0, 1)")
        if self.l_max <= 0.0:
            raise ValueError("l_max must be positive")

    @property
    def num_levels(self) -> int:
        return 2**self.q_bits

    @property
    def step(self) -> float:
        return self.l_max / self.num_levels

    @property
    def levels(self) -> np.ndarray:
        """Reproduction points (2k-1) l_max / 2^(Q+1), k = 1..2^Q."""
        k = np.arange(1, self.num_levels + 1)
        return (2 * k - 1) * self.l_max / 2 ** (self.q_bits + 1)


def mixture_cdf(value, gain, tau_sq, num_antennas, activity_prob):
    """CDF of the squared norm under the activity mixture.

    Inactive users contribute a scaled chi-square at variance tau^2 per
    dimension, active ones at tau^2 + g^2.
    """
    v = np.asarray(value, dtype=float)
    lam = activity_prob
    null = gammainc(num_antennas, v / tau_sq)
    act = gammainc(num_antennas, v / (tau_sq + gain * gain))
    return (1.0 - lam) * null + lam * act


def lmax_for_user(gain, tau_sq, num_antennas, activity_prob, coverage) -> float:
    """Range bound with Pr(statistic <= l_max) equal to the coverage target."""
    if not 0.0 < coverage < 1.0:
        raise ValueError("coverage must lie strictly in (0, 1)")

    def f(v):
        return mixture_cdf(v, gain, tau_sq, num_antennas, activity_prob) - coverage

    hi = num_antennas * (tau_sq + gain * gain + tau_sq)
    for _ in range(200):
        if f(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise RuntimeError("failed to bracket the coverage quantile")
    return float(brentq(f, 0.0, hi, xtol=_LMAX_SOLVER_TOL * hi, rtol=1e-14))


def build_spec(gain, tau_sq, num_antennas, activity_prob, coverage, q_bits) -> QuantizerSpec:
    l_max = lmax_for_user(gain, tau_sq, num_antennas, activity_prob, coverage)
    return QuantizerSpec(q_bits=q_bits, coverage=coverage, l_max=l_max)


def quantize_value(value, spec: QuantizerSpec):
    """Nearest reproduction level; values beyond l_max clamp to the top level."""
    v = np.asarray(value, dtype=float)
    idx = np.clip(np.floor(v / spec.step), 0, spec.num_levels - 1)
    out = (idx + 0.5) * spec.step
    return float(out) if np.isscalar(value) else out


def quantize_norms(values, l_max, q_bits: int):
    """Vectorized quantizer for per-user ranges; values and l_max broadcast."""
    levels = 2**q_bits
    step = np.asarray(l_max, dtype=float) / levels
    idx = np.clip(np.floor(np.asarray(values, dtype=float) / step), 0, levels - 1)
    return (idx + 0.5) * step


def level_probabilities(l_max, q_bits: int, num_antennas: int, scale: float):
    """Probability of each reproduction level for a Gamma(M)-scaled norm.

    ``scale`` is the per-dimension variance (tau^2 when inactive,
    tau^2 + g^2 when active); the top bin absorbs the overload tail.
    """
    levels = 2**q_bits
    edges = np.arange(levels + 1) * (l_max / levels)
    cdf = gammainc(num_antennas, edges / scale)
    probs = np.diff(cdf)
    probs[-1] += 1.0 - cdf[-1]
    return probs


def default_coverage(num_antennas: int) -> float:
    """Coverage targets that work well in practice: tighter tails need larger zeta."""
    return 0.95 if num_antennas <= 1 else 0.97


def fronthaul_bits(q_bits: int, users_forwarded: int, cooperation_size: int) -> int:
    """Bits per coherence block each BS ships to the central unit."""
    if q_bits < 0 or users_forwarded < 0 or cooperation_size < 0:
        raise ValueError("counts must be nonnegative")
    return cooperation_size * users_forwarded * q_bits


def make_codebook(kind: str, gain, tau_sq, num_antennas, activity_prob, coverage, q_bits):
    """Codebook factory; uniform is the only production design.

    The registry exists so sample-trained designs (e.g. Lloyd) can be
    compared later without touching call sites.
    """
    if kind != "uniform":
        raise ValueError(f"unknown codebook design {kind!r}; supported: 'uniform'")
    return build_spec(gain, tau_sq, num_antennas, activity_prob, coverage, q_bits)


def lookup_table_to_csv(path, rows) -> None:
    """Write (gain, num_antennas, activity_prob, coverage, l_max) rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# schema=cellamp-lmax-lut-v1\n")
        fh.write("gain,antennas,activity_prob,coverage,l_max\n")
        for g, m, lam, zeta, l_max in rows:
            fh.write(f"{g:.9e},{m},{lam:.6f},{zeta:.6f},{l_max:.9e}\n")


def lookup_table_from_csv(path):
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("gain,"):
                continue
            g, m, lam, zeta, l_max = line.split(",")
            rows.append((float(g), int(m), float(lam), float(zeta), float(l_max)))
    return rows
