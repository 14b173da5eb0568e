"""Batch front end.

Subcommands reproduce the headline data sets at desk scale:

  oscillator         driven-oscillator flow trajectories and freezing scan
  scan-freezing      P(lambda_c) over an amplitude-ratio grid, dip locations
  frequency-scaling  P, Q and Magnus distance vs drive frequency, slope fits
  thermalize         long low-frequency flows, lambda_min and instanton fits
  dynamics           quasienergy error histogram and stroboscopic entropies

Configuration is YAML with nested sections; --override KEY=VALUE (dotted
keys, repeatable) takes precedence over the file, which takes precedence
over built-in defaults.  Every run writes manifest.json with the fully
resolved configuration, tool version and git hash.  Identical configs
produce byte-identical CSVs.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import __version__, analytics, dynamics, flow, git_revision, hilbert, oscillator

#: leading-order freezing ratios nu_n / 4 (first three zeros of J0 over 4)
FP_RATIOS = (0.6012056, 1.3800196, 2.1634320)


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


NUMERICAL_ERRORS = (
    flow.FlowIntegrationError,
    flow.FlowMinimumNotFound,
    dynamics.NotUnitaryError,
    analytics.PeakError,
    oscillator.DegenerateScanError,
    np.linalg.LinAlgError,
    FloatingPointError,
)

DEFAULTS = {
    "oscillator": {
        "oscillator": {"omega0": 0.0, "omega1": 1.0, "Omega": 1.0},
        "scan": {
            "ratios": list(np.round(np.arange(0.2, 9.601, 0.05), 10)),
            "trajectory_ratios": [0.5, 2.4048],
        },
        "flow": {"step_scale": 0.02},
    },
    "scan-freezing": {
        "chain": {"L": 8, "J": 1.0, "J2": 0.2, "Bx": 0.0, "Omega": 10.0, "boundary": "periodic"},
        "scan": {"ratios": list(np.round(np.arange(0.2, 2.401, 0.02), 10)), "refine": False},
        "flow": {"step": 2e-3, "record_stride": 50, "lambda_max": None},
    },
    "frequency-scaling": {
        "chain": {"L": 8, "J": 1.0, "J2": 0.2, "Bx": 0.0, "Omega": 10.0, "boundary": "periodic"},
        "scan": {"ratio": FP_RATIOS[0], "omegas": [10.0, 14.0, 20.0, 28.0, 40.0]},
        # ||H1|| reaches ~exp(-Omega) here; disable the underflow stop so
        # Q stays on its exponential trend at the largest frequencies
        "flow": {"step": 2e-3, "record_stride": 50, "lambda_max": None, "floor_guard": 1e-250},
    },
    "thermalize": {
        "chain": {"L": 10, "J": 1.0, "J2": 0.2, "Bx": 0.0, "Omega": 2.0, "boundary": "periodic"},
        "thermalize": {"j2_values": [0.2, 0.4], "ratios": [FP_RATIOS[0], 0.3]},
        "flow": {
            "step": 4e-2,
            "record_stride": 5,
            "lambda_max": 20.0,
            "stop_rise_factor": None,
        },
    },
    "dynamics": {
        "chain": {"L": 10, "J": 1.0, "J2": 0.2, "Bx": 0.0, "Omega": 10.0, "boundary": "periodic"},
        "dynamics": {
            "ratio": FP_RATIOS[0],
            "compare_ratio": 0.3,
            "n_periods": 100,
            "substeps": dynamics.DEFAULT_SUBSTEPS,
        },
        "flow": {"step": 1e-3, "record_stride": 100, "lambda_max": None},
    },
}


# ---------------------------------------------------------------- config


def _deep_update(base: dict, extra: dict) -> dict:
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], val)
        else:
            base[key] = val
    return base


def _apply_override(cfg: dict, spec: str) -> None:
    if "=" not in spec:
        raise ConfigError(f"override must be KEY=VALUE, got {spec!r}")
    key, raw = spec.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as err:
        raise ConfigError(f"cannot parse override value {raw!r}: {err}") from None
    node = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override path {key!r} crosses a non-section value")
    node[parts[-1]] = value


def resolve_config(subcommand: str, args) -> dict:
    cfg = copy.deepcopy(DEFAULTS[subcommand])
    if args.config is not None:
        try:
            with open(args.config) as fh:
                loaded = yaml.safe_load(fh) or {}
        except OSError as err:
            raise ConfigError(f"cannot read config file: {err}") from None
        except yaml.YAMLError as err:
            raise ConfigError(f"malformed config file: {err}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must contain a mapping")
        _deep_update(cfg, loaded)
    for spec in args.override or []:
        _apply_override(cfg, spec)
    return cfg


def _chain_params(section: dict) -> hilbert.SpinChainParams:
    try:
        return hilbert.SpinChainParams(**section)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"bad chain parameters: {err}") from None


def _grid(values, name: str) -> list:
    if not isinstance(values, (list, tuple)) or len(values) == 0:
        raise ConfigError(f"{name} must be a non-empty list")
    vals = [float(v) for v in values]
    if any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigError(f"{name} must be strictly increasing")
    return vals


def _flow_config(section: dict, omega: float, lambda_default: float) -> flow.FlowConfig:
    lam = section.get("lambda_max")
    try:
        return flow.FlowConfig(
            omega=omega,
            lambda_max=float(lam) if lam is not None else lambda_default,
            step=float(section.get("step", 1e-3)),
            record_stride=int(section.get("record_stride", 1)),
            stop_rise_factor=section.get("stop_rise_factor"),
            floor_guard=float(section.get("floor_guard", flow.FLOAT_FLOOR)),
        )
    except ValueError as err:
        raise ConfigError(f"bad flow settings: {err}") from None


def write_manifest(outdir: Path, subcommand: str, cfg: dict) -> None:
    doc = {
        "tool": "floqflow",
        "version": __version__,
        "git_hash": git_revision(),
        "subcommand": subcommand,
        "config": cfg,
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(doc, fh, indent=2, default=float)


def _map_points(fn, points, threads: int):
    """Order-preserving map; worker pool only when threads > 1."""
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, points))
    return [fn(p) for p in points]


def _write_csv(path: Path, header: str, rows) -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


# ---------------------------------------------------------------- workers


def _freezing_point_worker(args):
    chain, ratio, flow_section = args
    params = _chain_params(chain).with_ratio(ratio)
    cfg = _flow_config(flow_section, params.Omega, 1.0 / params.J)
    traj = flow.run_flow(
        hilbert.build_static(params), hilbert.build_drive(params), cfg
    )
    return ratio, traj.P[-1], traj.Q[-1]


def _frequency_point(chain, ratio, omega, flow_section):
    chain = dict(chain, Omega=omega)
    params = _chain_params(chain).with_ratio(ratio)
    section = dict(flow_section)
    # honor the step*omega stability guard across the sweep
    section["step"] = min(float(section.get("step", 1e-3)), 0.09 / omega)
    cfg = _flow_config(section, omega, 1.0 / params.J)
    h0_init = hilbert.build_static(params)
    traj = flow.run_flow(h0_init, hilbert.build_drive(params), cfg)
    h_magnus = analytics.magnus_leading(params)
    dist = (
        flow.frobenius_norm(traj.final_state.h0 - h_magnus)
        / flow.frobenius_norm(h0_init)
    )
    return traj.P[-1], traj.Q[-1], dist


def _frequency_worker(args):
    chain, ratio, omega, flow_section, refine = args
    if refine:
        from scipy.optimize import minimize_scalar

        # the freezing ratio drifts slightly with omega; re-locate the
        # plateau minimum at each frequency before reading off P
        half = float(refine.get("halfwidth", 0.005))
        res = minimize_scalar(
            lambda r: _frequency_point(chain, r, omega, flow_section)[0],
            bracket=(ratio - half, ratio, ratio + half),
            method="golden",
            options={"xtol": float(refine.get("xtol", 2e-4))},
        )
        ratio = float(res.x)
    p, q, dist = _frequency_point(chain, ratio, omega, flow_section)
    return omega, ratio, p, q, dist


def _thermalize_worker(args):
    chain, j2, ratio, flow_section = args
    params = _chain_params(dict(chain, J2=j2)).with_ratio(ratio)
    cfg = _flow_config(flow_section, params.Omega, 40.0)
    return flow.run_flow(hilbert.build_static(params), hilbert.build_drive(params), cfg)


# --------------------------------------------------------------- commands


def cmd_oscillator(cfg: dict, outdir: Path, threads: int) -> None:
    osc = cfg["oscillator"]
    ratios = _grid(cfg["scan"]["ratios"], "scan.ratios")
    omega = float(osc["Omega"])
    step_scale = float(cfg["flow"].get("step_scale", 0.02))
    template = oscillator.OscillatorParams(
        omega0=float(osc["omega0"]), omega1=float(osc["omega1"]), A=0.0, Omega=omega
    )

    for ratio in cfg["scan"].get("trajectory_ratios", []):
        p = oscillator.OscillatorParams(
            template.omega0, template.omega1, A=float(ratio) * omega, Omega=omega
        )
        run_cfg = flow.FlowConfig(
            omega=omega,
            lambda_max=oscillator.LAMBDA_END_OMEGA / omega,
            step=step_scale / omega,
        )
        traj = oscillator.run_oscillator(p, run_cfg)
        oscillator.trajectory_to_csv(traj, outdir / f"oscillator_ratio_{ratio:g}.csv")

    rows = []
    for ratio in ratios:
        p = oscillator.OscillatorParams(
            template.omega0, template.omega1, A=ratio * omega, Omega=omega
        )
        rows.append((ratio, oscillator.freezing_residual(p, step_scale)))
    _write_csv(outdir / "freezing_scan.csv", "ratio,residual", rows)

    minima = oscillator.find_freezing_points(template, np.asarray(ratios))
    with open(outdir / "freezing_points.json", "w") as fh:
        json.dump(
            [{"ratio": r, "residual": res} for r, res in minima], fh, indent=2
        )


def cmd_scan_freezing(cfg: dict, outdir: Path, threads: int) -> None:
    chain = cfg["chain"]
    _chain_params(chain)  # validate once up front
    ratios = _grid(cfg["scan"]["ratios"], "scan.ratios")
    points = [(chain, r, cfg["flow"]) for r in ratios]
    rows = _map_points(_freezing_point_worker, points, threads)
    _write_csv(outdir / "scan_freezing.csv", "ratio,P,Q", rows)

    pvals = np.array([row[1] for row in rows])
    minima = [
        {"ratio": ratios[i], "P": float(pvals[i])}
        for i in range(1, len(ratios) - 1)
        if pvals[i] < pvals[i - 1] and pvals[i] < pvals[i + 1]
    ]
    if cfg["scan"].get("refine"):
        from scipy.optimize import minimize_scalar

        for entry in minima:
            i = ratios.index(entry["ratio"])
            res = minimize_scalar(
                lambda r: _freezing_point_worker((chain, r, cfg["flow"]))[1],
                bracket=(ratios[i - 1], ratios[i], ratios[i + 1]),
                method="golden",
                options={"xtol": 1e-4},
            )
            entry["ratio_refined"] = float(res.x)
            entry["P_refined"] = float(res.fun)
    with open(outdir / "freezing_minima.json", "w") as fh:
        json.dump(minima, fh, indent=2)


def cmd_frequency_scaling(cfg: dict, outdir: Path, threads: int) -> None:
    chain = cfg["chain"]
    omegas = _grid(cfg["scan"]["omegas"], "scan.omegas")
    if len(omegas) < 2:
        raise ConfigError("scan.omegas needs at least 2 points for a slope fit")
    ratio = float(cfg["scan"]["ratio"])
    refine = cfg["scan"].get("refine_ratio") or None
    if refine is True:
        refine = {}
    points = [(chain, ratio, w, cfg["flow"], refine) for w in omegas]
    rows = _map_points(_frequency_worker, points, threads)
    _write_csv(
        outdir / "frequency_scaling.csv", "omega,ratio,P,Q,magnus_distance", rows
    )

    w = np.array([r[0] for r in rows])
    p = np.array([r[2] for r in rows])
    q = np.array([r[3] for r in rows])
    d = np.array([r[4] for r in rows])
    slope_p = np.polyfit(np.log(w), np.log(p), 1)
    slope_d = np.polyfit(np.log(w), np.log(d), 1)
    slope_q = np.polyfit(w, np.log(q), 1)  # exponential decay check
    fit = {
        "log_P_vs_log_omega_slope": float(slope_p[0]),
        "log_magnus_distance_vs_log_omega_slope": float(slope_d[0]),
        "log_Q_vs_omega_slope": float(slope_q[0]),
    }
    with open(outdir / "scaling_fit.json", "w") as fh:
        json.dump(fit, fh, indent=2)


def cmd_thermalize(cfg: dict, outdir: Path, threads: int) -> None:
    chain = cfg["chain"]
    therm = cfg["thermalize"]
    j2_values = [float(v) for v in therm["j2_values"]]
    ratios = [float(v) for v in therm["ratios"]]
    if not j2_values or not ratios:
        raise ConfigError("thermalize.j2_values and thermalize.ratios must be non-empty")

    points = [(chain, j2, r, cfg["flow"]) for j2 in j2_values for r in ratios]
    trajs = _map_points(_thermalize_worker, points, threads)

    results = []
    for (_, j2, ratio, _), traj in zip(points, trajs):
        tag = f"J2_{j2:g}_ratio_{ratio:g}"
        flow.trajectory_to_csv(traj, outdir / f"flow_{tag}.csv")
        entry = {
            "J2": j2,
            "ratio": ratio,
            "floor_aborted": traj.floor_aborted,
            "rise_stopped": traj.rise_stopped,
            "last_lambda": float(traj.lambdas[-1]),
            "lambda_min": None,
            "h1_at_min": None,
            "instantons": [],
        }
        try:
            # heating rebounds are modest (order 10x), unlike the many-decade
            # rebound after a freezing plateau
            lam_min, h1_min = flow.detect_lambda_min(
                traj, prominence=float(therm.get("min_prominence", 2.0))
            )
            entry["lambda_min"] = lam_min
            entry["h1_at_min"] = h1_min
        except flow.FlowMinimumNotFound:
            pass
        for idx in analytics.find_instanton_peaks(traj):
            try:
                fit = analytics.fit_instanton(traj, analytics.peak_window(traj, idx))
            except analytics.PeakError:
                continue
            entry["instantons"].append(
                {
                    "lambda_peak": float(traj.lambdas[idx]),
                    "omega_tilde": fit.omega_tilde,
                    "lambda_tilde": fit.lambda_tilde,
                    "rel_rms": fit.rel_rms,
                    "concurrent_h0_step": fit.concurrent_h0_step,
                }
            )
        results.append(entry)
    with open(outdir / "thermalize_results.json", "w") as fh:
        json.dump(results, fh, indent=2)


def cmd_dynamics(cfg: dict, outdir: Path, threads: int) -> None:
    chain = cfg["chain"]
    dyn = cfg["dynamics"]
    n_periods = int(dyn["n_periods"])
    substeps = int(dyn["substeps"])
    if n_periods < 0:
        raise ConfigError("dynamics.n_periods must be >= 0")

    report = None
    for which, ratio in (("main", float(dyn["ratio"])), ("compare", dyn.get("compare_ratio"))):
        if ratio is None:
            continue
        params = _chain_params(chain).with_ratio(float(ratio))
        run_cfg = _flow_config(cfg["flow"], params.Omega, 1.0 / params.J)
        traj = flow.run_flow(
            hilbert.build_static(params), hilbert.build_drive(params), run_cfg
        )
        u = dynamics.floquet_unitary(params, substeps=substeps)
        path = outdir / f"series_ratio_{float(ratio):g}.csv"
        if n_periods == 0:
            with open(path, "w") as fh:
                fh.write("n,t,s_exact,s_eff\n")
        else:
            ns, s_exact, s_eff = dynamics.stroboscopic_series(
                params, traj.final_state.h0, n_periods, substeps=substeps, unitary=u
            )
            dynamics.series_to_csv(ns, s_exact, s_eff, params.Omega, path)
        if which == "main":
            eps_exact = dynamics.quasienergies(u, params.Omega)
            report = dynamics.quasienergy_report(
                eps_exact, traj.final_state.h0, params.Omega, traj.Q[-1]
            )
            dynamics.histogram_to_csv(report, outdir / "delta_histogram.csv")

    if report is not None:
        doc = {
            "median_delta": report.median_delta,
            "excluded_near_zero": report.excluded,
            "fold_count": report.fold_count,
            "q_final": report.q_final,
            "q_warning": report.q_warning,
        }
        with open(outdir / "quasienergy_report.json", "w") as fh:
            json.dump(doc, fh, indent=2)


COMMANDS = {
    "oscillator": cmd_oscillator,
    "scan-freezing": cmd_scan_freezing,
    "frequency-scaling": cmd_frequency_scaling,
    "thermalize": cmd_thermalize,
    "dynamics": cmd_dynamics,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floqflow",
        description="Flow renormalization of periodically driven spin chains.",
    )
    parser.add_argument("--version", action="version", version=f"floqflow {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="YAML config file")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker processes for scans")
        p.add_argument(
            "--override",
            action="append",
            metavar="KEY=VALUE",
            help="dotted-key config override, repeatable",
        )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.subcommand, args)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        outdir = args.out
        outdir.mkdir(parents=True, exist_ok=True)
        write_manifest(outdir, args.subcommand, cfg)
        COMMANDS[args.subcommand](cfg, outdir, args.threads)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except NUMERICAL_ERRORS as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
