"""Synthesis of signatures, channels, activities, and received signals.

One realisation bundles everything a detector sees: per-user activity
indicators, large-scale gains from every BS to every user, the shared
L x (B*N) signature matrix (column j*N + n belongs to user n of cell j),
Rayleigh fading rows, and the received L x M block at each BS.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .geometry import CellLayout, NetworkConfig, sample_users, second_moment_out_of_cell
from .rng import make_rng

_MAGIC = b"CAMPSCN1"


def complex_gaussian(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex normal with the given per-entry variance."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def generate_signatures(cfg: NetworkConfig, seed: int) -> np.ndarray:
    """L x (B*N) signature matrix, entries CN(0, 1/L) so columns have unit power."""
    rng = make_rng(seed, "signatures")
    return complex_gaussian(
        rng, (cfg.seq_len, cfg.num_cells * cfg.users_per_cell), var=1.0 / cfg.seq_len
    )


@dataclass
class ScenarioInstance:
    """One sampled network realisation.

    Shapes: activities (B, N); gains (B, B, N) indexed (receiving BS,
    home cell, user); signatures (L, B*N); channels (B, B, N, M) holding
    the Rayleigh component toward each receiving BS; noise and received
    (B, L, M).  ``received[b]`` equals signatures @ X_b + noise[b] with
    X_b stacking rows a[j,n] * gains[b,j,n] * channels[b,j,n].
    """

    config: NetworkConfig
    activities: np.ndarray
    gains: np.ndarray
    signatures: np.ndarray
    channels: np.ndarray
    noise: np.ndarray
    received: np.ndarray
    noise_var: float
    seed: int

    def row_signals(self, bs: int) -> np.ndarray:
        """X_b: (B*N, M) rows a * g * h toward the given BS, zero when inactive."""
        amp = self.activities * self.gains[bs]  # (B, N)
        x = amp[:, :, None] * self.channels[bs]
        b, n, m = x.shape
        return x.reshape(b * n, m)

    def reconstruction_residual(self, bs: int) -> float:
        """Frobenius norm of received - S X - W; zero by construction."""
        recon = self.signatures @ self.row_signals(bs) + self.noise[bs]
        return float(np.linalg.norm(self.received[bs] - recon))

    def save(self, path) -> None:
        """Write the instance to the binary container format.

        Layout: 8-byte magic, five little-endian uint32 dims
        (B, N, L, M, seed low 32 bits is not stored; the full seed is an
        int64), one float64 noise_var, then the arrays in declaration
        order as little-endian float64 (complex arrays interleave
        re/im).  Activities are stored as float64 zeros/ones.
        """
        b, n = self.activities.shape
        l, m = self.received.shape[1], self.received.shape[2]
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<IIIIq d", b, n, l, m, int(self.seed), self.noise_var))
            for arr in (self.activities, self.gains):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
            for arr in (self.signatures, self.channels, self.noise, self.received):
                fh.write(np.ascontiguousarray(arr, dtype="<c16").tobytes())

    @classmethod
    def load(cls, path, config: NetworkConfig | None = None) -> "ScenarioInstance":
        with open(path, "rb") as fh:
            magic = fh.read(8)
            if magic != _MAGIC:
                raise ValueError(f"not a scenario container: bad magic {magic!r}")
            b, n, l, m, seed, noise_var = struct.unpack("<IIIIq d", fh.read(32))
            def read_real(shape):
                count = int(np.prod(shape))
                return np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape).copy()
            def read_cplx(shape):
                count = int(np.prod(shape))
                return np.frombuffer(fh.read(16 * count), dtype="<c16").reshape(shape).copy()
            activities = read_real((b, n))
            gains = read_real((b, b, n))
            signatures = read_cplx((l, b * n))
            channels = read_cplx((b, b, n, m))
            noise = read_cplx((b, l, m))
            received = read_cplx((b, l, m))
        if config is None:
            config = NetworkConfig(
                num_cells=b, users_per_cell=n, seq_len=l, antennas=m,
            )
        return cls(
            config=config, activities=activities, gains=gains, signatures=signatures,
            channels=channels, noise=noise, received=received,
            noise_var=noise_var, seed=seed,
        )


def synthesize_from_gains(
    cfg: NetworkConfig, gains: np.ndarray, seed: int
) -> ScenarioInstance:
    """Build a realisation given the (B, B, N) gain tensor.

    Activities, Rayleigh channels, signatures, and noise are drawn from
    independent substreams of the seed.
    """
    b, n, m, l = cfg.num_cells, cfg.users_per_cell, cfg.antennas, cfg.seq_len
    rng_act = make_rng(seed, "activities")
    rng_chan = make_rng(seed, "channels")
    rng_noise = make_rng(seed, "noise")
    activities = (rng_act.random((b, n)) < cfg.activity_prob).astype(np.float64)
    signatures = generate_signatures(cfg, seed)
    channels = complex_gaussian(rng_chan, (b, b, n, m), var=1.0)
    noise_var = cfg.noise_variance
    noise = complex_gaussian(rng_noise, (b, l, m), var=noise_var)
    received = np.empty((b, l, m), dtype=complex)
    amp = activities[None, :, :] * gains  # (B_rx, B_cell, N)
    for bs in range(b):
        x = (amp[bs][:, :, None] * channels[bs]).reshape(b * n, m)
        received[bs] = signatures @ x + noise[bs]
    return ScenarioInstance(
        config=cfg, activities=activities, gains=gains, signatures=signatures,
        channels=channels, noise=noise, received=received,
        noise_var=noise_var, seed=seed,
    )


def synthesize(
    cfg: NetworkConfig,
    layout: CellLayout,
    seed: int,
    positions: np.ndarray | None = None,
) -> ScenarioInstance:
    """Sample positions (unless given), derive gains, and build a realisation."""
    if positions is None:
        positions = sample_users(cfg, layout, seed)
    gains = cfg.gain(layout.distances(positions))
    return synthesize_from_gains(cfg, gains, seed)


def effective_noise_variance_tin(cfg: NetworkConfig) -> float:
    """Noise-plus-interference variance seen by a BS that only detects its own cell."""
    sigma2 = cfg.noise_variance
    if cfg.num_cells == 1:
        return sigma2
    lam, n, b, l = cfg.activity_prob, cfg.users_per_cell, cfg.num_cells, cfg.seq_len
    return lam / l * n * (b - 1) * second_moment_out_of_cell(cfg) + sigma2
