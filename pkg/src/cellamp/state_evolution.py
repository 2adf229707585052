"""Analytic fixed points of the effective-noise recursion for both architectures.

The per-iteration effective noise variance tau^2 of the detector obeys

    tau_{t+1}^2 = noise_floor + coeff * integral(psi(g; tau_t^2) dg)

where psi folds the per-user posterior-mean MSE against the fading
density.  The non-cooperative mode adds the out-of-cell interference to
the noise floor and integrates over in-cell gains only; the cooperative
mode keeps the thermal floor and integrates over the whole network's
gain distribution.  A partial-recovery hybrid splits the network at a
detection radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import expit

from .geometry import (
    NetworkConfig,
    fading_dist,
    floored_second_moment,
    in_cell_dist,
    network_dist,
    second_moment_out_of_cell,
)

_GL_CACHE: dict = {}


def _gauss_legendre(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def mse_deficit(s: float, num_antennas: int, activity_prob: float) -> float:
    """Fraction of the active-user row variance the denoiser fails to resolve.

    Equals 1 - phi_M(s)/M! where phi_M is the weighted Gamma-kernel
    integral below; computed directly as the complementary integral

        (1/M!) * int_0^inf t^M e^-t sigmoid(a0 - s t) dt,
        a0 = log((1-lam)/lam) + M log(1+s),

    which is free of the 1 - (1 - tiny) cancellation at large s.
    Adaptive composite Gauss-Legendre panels split at the sigmoid
    midpoint a0/s; beyond t = (a0 + 60)/s the sigmoid factor is below
    e^-60 and the remainder is dropped (absolute error < e^-60).
    """
    m, lam = num_antennas, activity_prob
    if lam >= 1.0:
        return 0.0
    if s <= 0.0:
        return 1.0 - lam
    a0 = math.log((1.0 - lam) / lam) + m * math.log1p(s)
    lgamma = math.lgamma(m + 1)
    t_max = m + 40.0 * math.sqrt(m) + 40.0
    t_hi = min(t_max, (a0 + 60.0) / s)
    if t_hi <= 0.0:
        return 0.0
    t_mid = a0 / s

    def integrand(t):
        out = np.zeros_like(t)
        pos = t > 0.0
        tp = t[pos]
        out[pos] = np.exp(m * np.log(tp) - tp - lgamma) * expit(a0 - s * tp)
        return out

    cuts = sorted({0.0, t_hi} | ({t_mid} if 0.0 < t_mid < t_hi else set()))
    panels = [(cuts[i], cuts[i + 1]) for i in range(len(cuts) - 1)]
    x_lo, w_lo = _gauss_legendre(48)
    x_hi, w_hi = _gauss_legendre(96)
    total = 0.0
    for _ in range(48):  # refinement depth cap
        if not panels:
            break
        nodes = []
        for a, b in panels:
            half, mid = 0.5 * (b - a), 0.5 * (a + b)
            nodes.append(mid + half * x_lo)
            nodes.append(mid + half * x_hi)
        values = integrand(np.concatenate(nodes))
        refined = []
        i = 0
        for a, b in panels:
            half = 0.5 * (b - a)
            v_lo = half * float(w_lo @ values[i : i + 48]); i += 48
            v_hi = half * float(w_hi @ values[i : i + 96]); i += 96
            if abs(v_hi - v_lo) <= max(1e-13, 1e-10 * abs(v_hi)) or (b - a) < 1e-14 * t_max:
                total += v_hi
            else:
                mid = 0.5 * (a + b)
                refined.append((a, mid))
                refined.append((mid, b))
        panels = refined
    return total


def phi_m(s: float, num_antennas: int, activity_prob: float) -> float:
    """The Gamma-kernel integral int t^M e^-t / (1 + (1-lam)(1+s)^M e^(-s t)/lam) dt.

    Ranges over (0, M!]; equals lam * M! at s = 0 and M! as lam -> 1.
    """
    if s < 0.0:
        raise ValueError("s must be nonnegative")
    return math.gamma(num_antennas + 1) * (1.0 - mse_deficit(s, num_antennas, activity_prob))


def denoiser_mse(g: float, tau_sq: float, num_antennas: int, activity_prob: float) -> float:
    """Per-antenna MSE of the posterior-mean denoiser for a user with gain g."""
    lam = activity_prob
    g2 = g * g
    d = mse_deficit(g2 / tau_sq, num_antennas, activity_prob)
    return lam * (g2 * tau_sq / (g2 + tau_sq) + g2 * g2 / (g2 + tau_sq) * d)


def psi(g: float, tau_sq: float, num_antennas: int, activity_prob: float, gamma: float) -> float:
    """Density-weighted per-user MSE kernel integrated by the fixed point.

    psi(g) = g^(2-gamma) tau^2/(g^2+tau^2)
           + g^(4-gamma)/(g^2+tau^2) * (1 - phi_M(g^2/tau^2)/M!),

    i.e. g^(-gamma) * denoiser_mse(g) / lam.
    """
    if tau_sq <= 0.0:
        raise ValueError("tau_sq must be positive")
    g2 = g * g
    d = mse_deficit(g2 / tau_sq, num_antennas, activity_prob)
    return g ** (2.0 - gamma) * tau_sq / (g2 + tau_sq) + g ** (4.0 - gamma) / (g2 + tau_sq) * d


def _psi_integral(eps_low, tau_sq, num_antennas, activity_prob, gamma):
    """int_{eps_low}^inf psi(g) dg, nondimensionalised by x = g/tau.

    The substitution keeps the integrand O(1) regardless of the absolute
    noise scale; the infinite tail is mapped to u in [0, 1) via
    x = x0/(1-u) and integrated by adaptive Gauss-Kronrod.
    """
    tau = math.sqrt(tau_sq)
    x0 = eps_low / tau

    def f(u):
        x = x0 / (1.0 - u)
        jac = x0 / (1.0 - u) ** 2
        d = mse_deficit(x * x, num_antennas, activity_prob)
        return (x ** (2.0 - gamma) + x ** (4.0 - gamma) * d) / (1.0 + x * x) * jac

    val, _ = quad(f, 0.0, 1.0, limit=400, epsabs=1e-12, epsrel=1e-9)
    return tau ** (3.0 - gamma) * val


@dataclass
class StateEvolutionTrace:
    """Effective-noise trajectory tau_0^2, tau_1^2, ... and its fixed point."""

    architecture: str  # "tin", "coop", or "partial"
    tau_sq_seq: list = field(default_factory=list)
    tau_sq_inf: float = math.nan
    iterations: int = 0
    converged: bool = False

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# schema=cellamp-se-trace-v1\n")
            fh.write("iteration,tau_sq\n")
            for t, v in enumerate(self.tau_sq_seq):
                fh.write(f"{t},{v:.12e}\n")


def _solve_fixed_point(architecture, noise_floor, coeff, eps_low, tau0_sq, cfg,
                       tol, max_iters):
    gamma = 40.0 / cfg.pathloss_beta + 1.0
    tau_sq = tau0_sq
    seq = [tau_sq]
    converged = False
    for _ in range(max_iters):
        nxt = noise_floor + coeff * _psi_integral(
            eps_low, tau_sq, cfg.antennas, cfg.activity_prob, gamma
        )
        seq.append(nxt)
        if abs(nxt - tau_sq) <= tol * tau_sq:
            tau_sq = nxt
            converged = True
            break
        tau_sq = nxt
    return StateEvolutionTrace(
        architecture=architecture,
        tau_sq_seq=seq,
        tau_sq_inf=tau_sq,
        iterations=len(seq) - 1,
        converged=converged,
    )


def _se_params(cfg: NetworkConfig, architecture: str):
    """(noise_floor, coeff, eps_low, tau0_sq) of the recursion for one architecture."""
    lam, n, b, l = cfg.activity_prob, cfg.users_per_cell, cfg.num_cells, cfg.seq_len
    if architecture == "tin":
        dist = in_cell_dist(cfg)
        noise_floor = cfg.noise_variance
        if b > 1:
            noise_floor += lam * n * (b - 1) / l * second_moment_out_of_cell(cfg)
        coeff = dist.a / cfg.cell_radius**2 * lam * n / l
        tau0_sq = noise_floor + (n / l) * lam * floored_second_moment(cfg, cfg.cell_radius)
    elif architecture == "coop":
        dist = network_dist(cfg)
        noise_floor = cfg.noise_variance
        coeff = dist.a / cfg.net_radius**2 * lam * n * b / l
        tau0_sq = noise_floor + (n * b / l) * lam * floored_second_moment(cfg, cfg.net_radius)
    else:
        raise ValueError(f"unknown architecture {architecture!r}")
    return noise_floor, coeff, dist.eps_min, tau0_sq


def se_fixed_point_tin(cfg: NetworkConfig, tol: float = 1e-9, max_iters: int = 500) -> StateEvolutionTrace:
    """Fixed point when inter-cell interference is folded into the noise.

    The noise floor is sigma_w^2 plus the interference second moment; the
    MSE integral runs over in-cell gains, whose support is unbounded
    above because users can sit arbitrarily close to their BS.  The
    starting point is the zero-estimate MSE (prior second moment), with
    the 1 m distance floor keeping it finite.
    """
    noise_floor, coeff, eps_low, tau0_sq = _se_params(cfg, "tin")
    return _solve_fixed_point("tin", noise_floor, coeff, eps_low, tau0_sq, cfg, tol, max_iters)


def se_fixed_point_coop(cfg: NetworkConfig, tol: float = 1e-9, max_iters: int = 500) -> StateEvolutionTrace:
    """Fixed point when every BS recovers all users in the network."""
    noise_floor, coeff, eps_low, tau0_sq = _se_params(cfg, "coop")
    return _solve_fixed_point("coop", noise_floor, coeff, eps_low, tau0_sq, cfg, tol, max_iters)


def se_partial_recovery(cfg: NetworkConfig, detection_radius: float,
                        tol: float = 1e-9, max_iters: int = 500) -> StateEvolutionTrace:
    """Hybrid fixed point: recover users within the radius, fold the rest into noise.

    At detection_radius == cell_radius this reproduces the
    non-cooperative trace; at net_radius it reproduces the cooperative
    one.
    """
    r_cell, r_net = cfg.cell_radius, cfg.net_radius
    if not r_cell <= detection_radius <= r_net * (1 + 1e-12):
        raise ValueError(
            f"detection_radius must lie in [{r_cell:.3f}, {r_net:.3f}], got {detection_radius}"
        )
    detection_radius = min(detection_radius, r_net)
    lam, n, b, l = cfg.activity_prob, cfg.users_per_cell, cfg.num_cells, cfg.seq_len
    dist = network_dist(cfg)
    density = dist.a / cfg.net_radius**2  # gain density of the full network disc
    eps_radius = float(cfg.gain(detection_radius))

    noise_floor = cfg.noise_variance
    if detection_radius < r_net:
        ring = fading_dist(cfg, detection_radius, r_net)
        frac_outside = (r_net**2 - detection_radius**2) / r_net**2
        noise_floor += lam * n * b / l * frac_outside * ring.second_moment()
    coeff = density * lam * n * b / l
    tau0_sq = noise_floor + (n * b / l) * lam * (
        detection_radius**2 / r_net**2
    ) * floored_second_moment(cfg, detection_radius)
    return _solve_fixed_point("partial", noise_floor, coeff, eps_radius, tau0_sq, cfg, tol, max_iters)


def fixed_point_residual(trace: StateEvolutionTrace, cfg: NetworkConfig) -> float:
    """|F(tau_inf^2) - tau_inf^2| for the trace's architecture; small when converged."""
    gamma = 40.0 / cfg.pathloss_beta + 1.0
    noise_floor, coeff, eps_low, _ = _se_params(cfg, trace.architecture)
    rhs = noise_floor + coeff * _psi_integral(
        eps_low, trace.tau_sq_inf, cfg.antennas, cfg.activity_prob, gamma
    )
    return abs(rhs - trace.tau_sq_inf)


def interference_large_b_limit(cfg: NetworkConfig) -> float:
    """Limit of the interference noise term as the cell count grows."""
    lam, n, l = cfg.activity_prob, cfg.users_per_cell, cfg.seq_len
    beta, alpha = cfg.pathloss_beta, cfg.pathloss_alpha
    return (
        (cfg.num_cells / cfg.net_radius**2)
        * (n / l)
        * cfg.cell_radius ** (2.0 - beta / 10.0)
        * 10.0 ** (-alpha / 10.0)
        * lam
        / (beta / 20.0 - 1.0)
    )
