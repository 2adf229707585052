"""Monte Carlo experiment runner tying geometry, synthesis, AMP, and detection together.

Reported error profiles always cover the N users of the innermost cell,
the ones facing the strongest interference.  Per-user decision
thresholds are computed once per configuration from the analytic
equal-error formulas; trials then re-draw activities, channels,
signatures, and noise with the user positions held fixed.

Trials are independent work items; per-trial tallies are integers and
merge order-independently, so worker parallelism never changes results.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .amp import AmpConfig, run_amp
from .detection import (
    DetectionCounts,
    ErrorProfile,
    analytic_profile_coop,
    analytic_profile_massive,
    quantized_equal_error_threshold,
)
from .geometry import CellLayout, NetworkConfig, build_layout, sample_users
from .quantize import default_coverage, lmax_for_user, quantize_norms
from .rng import make_rng
from .signal_model import effective_noise_variance_tin, synthesize_from_gains
from .state_evolution import (
    StateEvolutionTrace,
    se_fixed_point_coop,
    se_fixed_point_tin,
    se_partial_recovery,
)

CSV_SCHEMA_VERSION = "cellamp-v1"


def desk_scale_config(**overrides) -> NetworkConfig:
    """Seven-cell configuration that keeps the paper-scale aspect ratio N/L = 5
    while running in minutes; the full deployment stays available through
    the default NetworkConfig."""
    params = dict(num_cells=7, users_per_cell=200, seq_len=40, antennas=8)
    params.update(overrides)
    return NetworkConfig(**params)


@dataclass
class ExperimentSpec:
    """One experiment: an architecture, cooperation size, and trial budget."""

    config: NetworkConfig
    architecture: str = "tin"          # "tin" (massive MIMO) or "coop"
    b_bn: int = 1                       # BSs aggregated per user (coop only)
    q_bits: int | None = None           # fronthaul quantization, None = ideal
    coverage: float | None = None       # quantizer coverage, default per antenna count
    trials: int = 200
    seed: int = 0
    workers: int = 1
    llr_tau: str = "analytic"           # tau^2 in weights/thresholds: analytic fixed point
    amp: AmpConfig = field(default_factory=AmpConfig)
    outputs: tuple = ("profile", "cdf", "se_trace")

    def __post_init__(self):
        if self.architecture not in ("tin", "coop"):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 1 <= self.b_bn <= self.config.num_cells:
            raise ValueError("b_bn must lie in [1, num_cells]")
        if self.llr_tau not in ("analytic", "empirical"):
            raise ValueError(f"unknown llr_tau {self.llr_tau!r}")


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    se_trace: StateEvolutionTrace
    analytic: ErrorProfile
    empirical: ErrorProfile
    quantized: ErrorProfile | None = None
    csv_paths: list = field(default_factory=list)


def _nearest_bs_sets(layout: CellLayout, positions: np.ndarray, max_bbn: int) -> np.ndarray:
    """(N, max_bbn) BS indices closest to each center-cell user."""
    d = layout.distances(positions[0])  # (B, N)
    return np.argsort(d, axis=0, kind="stable")[:max_bbn].T


def _run_trial_tin(cfg, gains, thresholds, seed, trial, amp_cfg, noise_var):
    scenario = synthesize_from_gains(cfg, gains, make_rng(seed, "trial", trial).integers(2**62))
    n = cfg.users_per_cell
    s0 = scenario.signatures[:, :n]
    out = run_amp(
        scenario.received[0], s0, gains[0, 0, :],
        cfg.activity_prob, noise_var, amp_cfg,
    )
    active = scenario.activities[0].astype(bool)
    declared = out.squared_norms > thresholds
    return active, {"raw": declared}


def _run_trial_coop(cfg, gains, bs_sets, weights, thresholds, quant_tables,
                    seed, trial, amp_cfg, noise_var, llr_tau):
    scenario = synthesize_from_gains(cfg, gains, make_rng(seed, "trial", trial).integers(2**62))
    n = cfg.users_per_cell
    needed = np.unique(bs_sets)
    norms = {}
    tau_hat = {}
    for j in needed:
        out = run_amp(
            scenario.received[j], scenario.signatures, gains[j].ravel(),
            cfg.activity_prob, noise_var, amp_cfg,
        )
        norms[j] = out.squared_norms[:n]  # center-cell users occupy the first N columns
        tau_hat[j] = out.tau_sq_final
    active = scenario.activities[0].astype(bool)
    users = np.arange(n)
    decided = {}
    for key, (b_bn, q_bits, coverage) in sorted(thresholds["variants"].items()):
        stat = np.zeros(n)
        for rank in range(b_bn):
            js = bs_sets[:, rank]
            raw = np.array([norms[j][u] for j, u in zip(js, users)])
            if q_bits is not None:
                lmax = quant_tables[(q_bits, coverage)][np.arange(n), rank]
                raw = quantize_norms(raw, lmax, q_bits)
            if llr_tau == "empirical":
                g = gains[js, 0, users]
                t_hat = np.array([tau_hat[j] for j in js])
                delta = 1.0 / t_hat - 1.0 / (g * g + t_hat)
            else:
                delta = weights[np.arange(n), rank]
            stat += delta * raw
        decided[key] = stat > thresholds[key]
    return active, decided


def _execute_trials(worker, trials, workers, num_users, variant_keys):
    counts = {key: DetectionCounts(num_users) for key in variant_keys}
    if workers <= 1:
        results = map(worker, range(trials))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(worker, range(trials)))
    for active, decided in results:
        for key, dec in decided.items():
            counts[key].update(active, dec)
    return counts


def _coop_variants(b_bn_values, quantizers):
    """Variant table: raw decisions per cooperation size plus quantized ones."""
    variants = {}
    raw_sizes = set(b_bn_values) | {b_bn for (b_bn, _, _) in quantizers}
    for b_bn in sorted(raw_sizes):
        variants[("raw", b_bn)] = (b_bn, None, None)
    for (b_bn, q_bits, coverage) in quantizers:
        variants[("quant", b_bn, q_bits, coverage)] = (b_bn, q_bits, coverage)
    return variants


def simulate_detection(
    cfg: NetworkConfig,
    architecture: str,
    b_bn_values=(1,),
    quantizers=(),
    trials: int = 200,
    seed: int = 0,
    workers: int = 1,
    amp_cfg: AmpConfig | None = None,
    llr_tau: str = "analytic",
    layout: CellLayout | None = None,
    positions: np.ndarray | None = None,
):
    """Run the Monte Carlo engine once, deriving every requested variant.

    Returns (results, context).  ``results`` maps variant keys to
    (empirical ErrorProfile, analytic ErrorProfile); raw variants are
    keyed ("raw", b_bn) and quantized ones ("quant", b_bn, q_bits,
    coverage).  ``context`` carries the layout, positions, gains, and SE
    trace.  Scenario synthesis is shared across variants so cooperation
    sizes and quantizers see identical channel realisations.
    """
    amp_cfg = amp_cfg or AmpConfig()
    layout = layout or build_layout(cfg)
    if positions is None:
        positions = sample_users(cfg, layout, seed)
    gains = cfg.gain(layout.distances(positions))
    n = cfg.users_per_cell
    center_gains = gains[0, 0, :]

    if architecture == "tin":
        trace = se_fixed_point_tin(cfg)
        tau_sq = trace.tau_sq_inf
        noise_var = effective_noise_variance_tin(cfg)
        analytic = analytic_profile_massive(center_gains, tau_sq, cfg.antennas)
        thresholds = analytic.thresholds

        def worker(trial):
            return _run_trial_tin(cfg, gains, thresholds, seed, trial, amp_cfg, noise_var)

        counts = _execute_trials(worker, trials, workers, n, ["raw"])
        empirical = counts["raw"].to_profile(center_gains, thresholds)
        results = {("raw", 1): (empirical, analytic)}
        context = {"layout": layout, "positions": positions, "gains": gains,
                   "se_trace": trace, "tau_sq": tau_sq}
        return results, context

    if architecture != "coop":
        raise ValueError(f"unknown architecture {architecture!r}")

    trace = se_fixed_point_coop(cfg)
    tau_sq = trace.tau_sq_inf
    noise_var = cfg.noise_variance
    variants = _coop_variants(b_bn_values, quantizers)
    max_bbn = max(v[0] for v in variants.values())
    bs_sets = _nearest_bs_sets(layout, positions, max_bbn)

    users = np.arange(n)
    serving_gains = np.empty((n, max_bbn))
    weights = np.empty((n, max_bbn))
    for rank in range(max_bbn):
        js = bs_sets[:, rank]
        g = gains[js, 0, users]
        serving_gains[:, rank] = g
        weights[:, rank] = 1.0 / tau_sq - 1.0 / (g * g + tau_sq)

    quant_tables = {}
    for (b_bn, q_bits, coverage) in quantizers:
        if (q_bits, coverage) not in quant_tables:
            table = np.empty((n, max_bbn))
            for u in range(n):
                for rank in range(max_bbn):
                    table[u, rank] = lmax_for_user(
                        serving_gains[u, rank], tau_sq, cfg.antennas,
                        cfg.activity_prob, coverage,
                    )
            quant_tables[(q_bits, coverage)] = table

    analytic_profiles = {}
    thresholds = {"variants": variants}
    for key, (b_bn, q_bits, coverage) in variants.items():
        if ("raw", b_bn) not in analytic_profiles:
            gl = [serving_gains[u, :b_bn] for u in range(n)]
            analytic_profiles[("raw", b_bn)] = analytic_profile_coop(gl, tau_sq, cfg.antennas)
        if q_bits is None:
            thresholds[key] = analytic_profiles[("raw", b_bn)].thresholds
        else:
            # quantized statistics are discrete, so their equal-error
            # thresholds come from the quantized law, not the raw one
            table = quant_tables[(q_bits, coverage)]
            th = np.empty(n)
            p_eq = np.empty(n)
            for u in range(n):
                th[u], p_eq[u] = quantized_equal_error_threshold(
                    serving_gains[u, :b_bn], tau_sq, cfg.antennas,
                    table[u, :b_bn], q_bits,
                )
            analytic_profiles[key] = ErrorProfile(
                source="analytic",
                cell_ids=np.zeros(n, dtype=int),
                user_ids=np.arange(n),
                gains=center_gains,
                thresholds=th,
                p_miss=p_eq.copy(),
                p_false=p_eq.copy(),
                p_equal=p_eq.copy(),
            )
            thresholds[key] = th

    def worker(trial):
        return _run_trial_coop(cfg, gains, bs_sets, weights, thresholds, quant_tables,
                               seed, trial, amp_cfg, noise_var, llr_tau)

    counts = _execute_trials(worker, trials, workers, n, list(variants))
    results = {}
    for key, (b_bn, q_bits, coverage) in variants.items():
        empirical = counts[key].to_profile(center_gains, thresholds[key])
        analytic = analytic_profiles.get(key, analytic_profiles[("raw", b_bn)])
        results[key] = (empirical, analytic)
    context = {"layout": layout, "positions": positions, "gains": gains,
               "se_trace": trace, "tau_sq": tau_sq, "bs_sets": bs_sets,
               "serving_gains": serving_gains}
    return results, context


def _figure_stub(spec: ExperimentSpec) -> str:
    if spec.architecture == "tin":
        return "fig2_massive"
    if spec.q_bits is not None:
        return "fig8_quant" if spec.config.antennas <= 1 else "fig9_quant"
    return "fig4_coop"


def run_experiment(spec: ExperimentSpec, out_dir=None) -> ExperimentResult:
    """Run one experiment spec end to end, optionally writing CSV tables."""
    coverage = spec.coverage
    if spec.q_bits is not None and coverage is None:
        coverage = default_coverage(spec.config.antennas)
    quantizers = [(spec.b_bn, spec.q_bits, coverage)] if spec.q_bits is not None else []
    results, context = simulate_detection(
        spec.config,
        spec.architecture,
        b_bn_values=(spec.b_bn,) if spec.architecture == "coop" else (1,),
        quantizers=quantizers if spec.architecture == "coop" else (),
        trials=spec.trials,
        seed=spec.seed,
        workers=spec.workers,
        amp_cfg=spec.amp,
        llr_tau=spec.llr_tau,
    )
    raw_key = ("raw", spec.b_bn if spec.architecture == "coop" else 1)
    empirical, analytic = results[raw_key]
    quantized = None
    if quantizers:
        quantized = results[("quant", spec.b_bn, spec.q_bits, coverage)][0]
    result = ExperimentResult(
        spec=spec, se_trace=context["se_trace"],
        analytic=analytic, empirical=empirical, quantized=quantized,
    )
    if out_dir is not None:
        result.csv_paths = _write_experiment_csvs(result, out_dir)
    return result


def _write_experiment_csvs(result: ExperimentResult, out_dir) -> list:
    import os

    os.makedirs(out_dir, exist_ok=True)
    stub = _figure_stub(result.spec)
    paths = []

    def path_of(name):
        p = os.path.join(out_dir, name)
        paths.append(p)
        return p

    outputs = result.spec.outputs
    if "se_trace" in outputs:
        result.se_trace.to_csv(path_of(f"se_trace_{result.spec.architecture}.csv"))
    if "profile" in outputs:
        result.analytic.to_csv(path_of(f"{stub}_profile_analytic.csv"))
        result.empirical.to_csv(path_of(f"{stub}_profile_empirical.csv"))
        if result.quantized is not None:
            result.quantized.to_csv(path_of(f"{stub}_profile_quantized.csv"))
    if "cdf" in outputs:
        result.analytic.cdf_to_csv(path_of(f"{stub}_cdf_analytic.csv"))
        result.empirical.cdf_to_csv(path_of(f"{stub}_cdf_empirical.csv"))
        if result.quantized is not None:
            result.quantized.cdf_to_csv(path_of(f"{stub}_cdf_quantized.csv"))
    return paths


_SWEEP_FILES = {
    "detection_radius": "fig3_radius.csv",
    "b_bn": "fig5_cooperation.csv",
    "antennas": "fig6_antennas.csv",
    "seq_len": "fig7_seqlen.csv",
    "q_bits": "fig8_quant_sweep.csv",
    "coverage": "fig9_coverage_sweep.csv",
}

_SWEEP_ALIASES = {
    "M": "antennas", "antennas": "antennas",
    "L": "seq_len", "seq_len": "seq_len",
    "B_bn": "b_bn", "b_bn": "b_bn",
    "Q": "q_bits", "q_bits": "q_bits",
    "zeta": "coverage", "coverage": "coverage",
    "detection_radius": "detection_radius",
}


def sweep(spec: ExperimentSpec, parameter: str, values, out_dir=None, simulate=None):
    """Metric-versus-parameter table.

    detection_radius sweeps are analytic (fixed-point only).  b_bn,
    q_bits, and coverage sweeps reuse one set of channel realisations
    across values; antennas and seq_len sweeps rebuild scenarios.  When
    ``simulate`` is false (default for antennas/seq_len) only analytic
    metrics are computed.
    """
    if parameter not in _SWEEP_ALIASES:
        raise ValueError(f"unknown sweep parameter {parameter!r}")
    canonical = _SWEEP_ALIASES[parameter]
    rows = []

    if canonical == "detection_radius":
        for radius in values:
            trace = se_partial_recovery(spec.config, float(radius))
            rows.append({"parameter": canonical, "value": float(radius),
                         "tau_sq_inf": trace.tau_sq_inf})
    elif canonical in ("antennas", "seq_len"):
        if simulate is None:
            simulate = False
        for v in values:
            cfg = replace(spec.config, **{canonical: int(v)})
            sub = replace(spec, config=cfg)
            row = {"parameter": canonical, "value": int(v)}
            row.update(_analytic_metrics(sub))
            if simulate:
                res = run_experiment(sub)
                row["cell_edge_empirical"] = res.empirical.cell_edge()
            rows.append(row)
    elif canonical == "b_bn":
        results, context = simulate_detection(
            spec.config, "coop", b_bn_values=tuple(int(v) for v in values),
            trials=spec.trials, seed=spec.seed, workers=spec.workers,
            amp_cfg=spec.amp, llr_tau=spec.llr_tau,
        )
        for v in values:
            emp, ana = results[("raw", int(v))]
            rows.append({
                "parameter": canonical, "value": int(v),
                "tau_sq_inf": context["se_trace"].tau_sq_inf,
                "cell_edge_analytic": ana.cell_edge(),
                "cell_edge_empirical": emp.cell_edge(),
            })
    elif canonical in ("q_bits", "coverage"):
        coverage = spec.coverage or default_coverage(spec.config.antennas)
        if canonical == "q_bits":
            quantizers = [(spec.b_bn, int(v), coverage) for v in values]
        else:
            if spec.q_bits is None:
                raise ValueError("coverage sweep requires q_bits in the spec")
            quantizers = [(spec.b_bn, spec.q_bits, float(v)) for v in values]
        results, context = simulate_detection(
            spec.config, "coop", b_bn_values=(spec.b_bn,), quantizers=quantizers,
            trials=spec.trials, seed=spec.seed, workers=spec.workers,
            amp_cfg=spec.amp, llr_tau=spec.llr_tau,
        )
        emp_raw, _ = results[("raw", spec.b_bn)]
        for (b_bn, q_bits, cov) in quantizers:
            emp, _ = results[("quant", b_bn, q_bits, cov)]
            rows.append({
                "parameter": canonical,
                "value": q_bits if canonical == "q_bits" else cov,
                "cell_edge_quantized": emp.cell_edge(),
                "cell_edge_unquantized": emp_raw.cell_edge(),
            })

    if out_dir is not None:
        import os

        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, _SWEEP_FILES[canonical])
        _write_sweep_csv(path, rows)
    return rows


def _analytic_metrics(spec: ExperimentSpec) -> dict:
    cfg = spec.config
    layout = build_layout(cfg)
    positions = sample_users(cfg, layout, spec.seed)
    gains = cfg.gain(layout.distances(positions))
    if spec.architecture == "tin":
        trace = se_fixed_point_tin(cfg)
        profile = analytic_profile_massive(gains[0, 0, :], trace.tau_sq_inf, cfg.antennas)
    else:
        trace = se_fixed_point_coop(cfg)
        bs_sets = _nearest_bs_sets(layout, positions, spec.b_bn)
        users = np.arange(cfg.users_per_cell)
        gl = [gains[bs_sets[u], 0, u] for u in users]
        profile = analytic_profile_coop(gl, trace.tau_sq_inf, cfg.antennas)
    return {"tau_sq_inf": trace.tau_sq_inf, "cell_edge_analytic": profile.cell_edge()}


def _write_sweep_csv(path, rows) -> None:
    if not rows:
        return
    cols = list(rows[0].keys())
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# schema={CSV_SCHEMA_VERSION}\n")
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in cols) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.12e}"
    return str(v)
