"""Special functions and fixed points checked against sampling oracles."""

import math

import numpy as np
import pytest

from cellamp.amp import denoise
from cellamp.geometry import NetworkConfig, out_of_cell_dist
from cellamp.rng import make_rng
from cellamp.signal_model import complex_gaussian
from cellamp.state_evolution import (
    denoiser_mse,
    fixed_point_residual,
    interference_large_b_limit,
    mse_deficit,
    phi_m,
    psi,
    se_fixed_point_coop,
    se_fixed_point_tin,
    se_partial_recovery,
)

LAM = 0.05


def desk_cfg(**kw):
    params = dict(num_cells=7, users_per_cell=200, seq_len=40, antennas=8)
    params.update(kw)
    return NetworkConfig(**params)


class TestPhi:
    def test_always_active_limit(self):
        for m in (1, 4, 8):
            assert phi_m(3.0, m, 1.0 - 1e-15) == pytest.approx(math.gamma(m + 1), rel=1e-9)

    def test_zero_snr_value(self):
        # at s = 0 the weight is constant lam, so the integral is lam * M!
        for m in (1, 4, 8):
            for lam in (0.05, 0.3, 0.9):
                assert phi_m(0.0, m, lam) == pytest.approx(lam * math.gamma(m + 1), rel=1e-10)

    def test_monte_carlo_oracle(self):
        # phi equals M! times the mean sigmoid weight under a Gamma(M+1) draw
        s, m, lam = 4.0, 8, 0.05
        rng = make_rng(0, "phi-mc")
        t = rng.standard_gamma(m + 1, size=10_000_000)
        a0 = math.log((1 - lam) / lam) + m * math.log1p(s)
        weight = 1.0 / (1.0 + np.exp(np.minimum(a0 - s * t, 700.0)))
        mc = math.gamma(m + 1) * float(np.mean(weight))
        assert phi_m(s, m, lam) == pytest.approx(mc, rel=1e-3)

    def test_bounds_and_monotonicity_in_lam(self):
        for m in (1, 4, 8):
            for s in (0.0, 0.5, 4.0, 50.0, 1e4):
                prev = 0.0
                for lam in (0.01, 0.05, 0.2, 0.5, 0.9, 0.99):
                    val = phi_m(s, m, lam)
                    assert 0.0 < val <= math.gamma(m + 1) * (1 + 1e-12)
                    assert val >= prev - 1e-12 * math.gamma(m + 1)
                    prev = val

    def test_negative_s_rejected(self):
        with pytest.raises(ValueError):
            phi_m(-0.1, 4, 0.05)

    def test_deficit_complements_phi(self):
        for s in (0.3, 4.0, 100.0):
            d = mse_deficit(s, 4, LAM)
            assert phi_m(s, 4, LAM) == pytest.approx(math.gamma(5) * (1 - d), rel=1e-10)


class TestPsi:
    GAMMA = 40.0 / 37.6 + 1.0

    def test_small_gain_behaviour(self):
        # gamma exceeds 2 at this path-loss slope, so psi itself grows
        # slowly as g -> 0; what vanishes is the g^gamma-weighted MSE
        # psi carries inside the fixed-point integral
        assert denoiser_mse(1e-6, 1.0, 4, LAM) < 1e-6 * denoiser_mse(1.0, 1.0, 4, LAM)
        small = psi(1e-6, 1.0, 4, LAM, self.GAMMA)
        assert small == pytest.approx((1e-6) ** (2.0 - self.GAMMA), rel=1e-4)

    def test_vanishes_at_small_noise(self):
        ref = psi(1.0, 1.0, 4, LAM, self.GAMMA)
        tiny = psi(1.0, 1e-10, 4, LAM, self.GAMMA)
        assert tiny < 1e-6 * ref

    def test_matches_denoiser_mse_identity(self):
        # psi(g) = g^(-gamma) * per-row-MSE(g) / lam by construction
        for g, tau_sq in ((0.7, 0.5), (2.0, 1.0), (0.3, 2.0)):
            left = psi(g, tau_sq, 4, LAM, self.GAMMA)
            right = g ** (-self.GAMMA) * denoiser_mse(g, tau_sq, 4, LAM) / LAM
            assert left == pytest.approx(right, rel=1e-12, abs=0)

    def test_monte_carlo_denoiser_mse(self):
        # the closed-form per-antenna MSE equals the sampled estimation error
        # of the posterior-mean denoiser
        rng = make_rng(1, "psi-mc")
        m = 4
        for g, tau_sq in ((1.3, 0.8), (0.6, 1.1)):
            n = 1_000_000
            active = rng.random(n) < LAM
            x = (active * g)[:, None] * complex_gaussian(rng, (n, m))
            obs = x + complex_gaussian(rng, (n, m), var=tau_sq)
            est = denoise(obs, np.full(n, g), tau_sq, LAM)
            mc = float(np.mean(np.abs(est - x) ** 2))  # per antenna
            assert denoiser_mse(g, tau_sq, m, LAM) == pytest.approx(mc, rel=0.01)

    def test_invalid_tau_rejected(self):
        with pytest.raises(ValueError):
            psi(1.0, 0.0, 4, LAM, self.GAMMA)


class TestFixedPointTin:
    def test_single_cell_no_activity_reduces_to_noise(self):
        cfg = desk_cfg(num_cells=1, activity_prob=1e-7, seq_len=40)
        trace = se_fixed_point_tin(cfg)
        assert trace.converged
        assert trace.tau_sq_inf == pytest.approx(cfg.noise_variance, rel=1e-3, abs=0)

    def test_trace_invariants(self):
        cfg = desk_cfg()
        trace = se_fixed_point_tin(cfg)
        assert trace.converged
        assert trace.tau_sq_inf == trace.tau_sq_seq[-1]
        assert all(v > 0 for v in trace.tau_sq_seq)
        from cellamp.signal_model import effective_noise_variance_tin

        assert trace.tau_sq_seq[0] >= effective_noise_variance_tin(cfg)
        # contraction from the prior-variance start: monotone decrease
        seq = np.array(trace.tau_sq_seq)
        assert np.all(np.diff(seq) <= 1e-12 * seq[:-1])

    def test_fixed_point_residual_small(self):
        cfg = desk_cfg()
        trace = se_fixed_point_tin(cfg)
        assert fixed_point_residual(trace, cfg) < 1e-8 * trace.tau_sq_inf

    def test_interference_term_large_b_limit(self):
        # the interference noise term approaches a cell-count-free constant
        from cellamp.geometry import second_moment_out_of_cell

        big = NetworkConfig(num_cells=1 + 3 * 18 * 19, users_per_cell=50, seq_len=40)
        lam, n, b, l = big.activity_prob, big.users_per_cell, big.num_cells, big.seq_len
        term = lam * n * (b - 1) / l * second_moment_out_of_cell(big)
        limit = interference_large_b_limit(big)
        assert term == pytest.approx(limit, rel=0.01, abs=0)

    def test_csv_export(self, tmp_path):
        cfg = desk_cfg(num_cells=1)
        trace = se_fixed_point_tin(cfg)
        path = tmp_path / "trace.csv"
        trace.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[1] == "iteration,tau_sq"
        assert len(lines) == 2 + len(trace.tau_sq_seq)


class TestFixedPointCoop:
    def test_single_cell_architectures_coincide(self):
        cfg = desk_cfg(num_cells=1)
        tin = se_fixed_point_tin(cfg)
        coop = se_fixed_point_coop(cfg)
        assert coop.tau_sq_inf == pytest.approx(tin.tau_sq_inf, rel=1e-9, abs=0)

    def test_interference_recovery_beats_treating_as_noise(self):
        cfg = desk_cfg()
        tin = se_fixed_point_tin(cfg)
        coop = se_fixed_point_coop(cfg)
        assert tin.converged and coop.converged
        assert tin.tau_sq_inf > coop.tau_sq_inf

    def test_more_antennas_shrink_fixed_point(self):
        taus = [
            se_fixed_point_coop(desk_cfg(antennas=m)).tau_sq_inf for m in (1, 8)
        ]
        assert taus[1] < taus[0]

    def test_residual_small(self):
        cfg = desk_cfg()
        trace = se_fixed_point_coop(cfg)
        assert fixed_point_residual(trace, cfg) < 1e-8 * trace.tau_sq_inf


class TestPartialRecovery:
    def test_cell_radius_boundary_equals_tin(self):
        cfg = desk_cfg()
        partial = se_partial_recovery(cfg, cfg.cell_radius)
        tin = se_fixed_point_tin(cfg)
        assert partial.tau_sq_inf == pytest.approx(tin.tau_sq_inf, rel=1e-9, abs=0)

    def test_network_radius_boundary_equals_coop(self):
        cfg = desk_cfg()
        partial = se_partial_recovery(cfg, cfg.net_radius)
        coop = se_fixed_point_coop(cfg)
        assert partial.tau_sq_inf == pytest.approx(coop.tau_sq_inf, rel=1e-9, abs=0)

    def test_monotone_in_radius(self):
        cfg = desk_cfg()
        radii = np.linspace(cfg.cell_radius, cfg.net_radius, 10)
        taus = [se_partial_recovery(cfg, float(r)).tau_sq_inf for r in radii]
        assert all(b <= a * (1 + 1e-9) for a, b in zip(taus, taus[1:]))

    def test_out_of_range_radius_rejected(self):
        cfg = desk_cfg()
        with pytest.raises(ValueError):
            se_partial_recovery(cfg, 0.5 * cfg.cell_radius)
        with pytest.raises(ValueError):
            se_partial_recovery(cfg, 1.5 * cfg.net_radius)
