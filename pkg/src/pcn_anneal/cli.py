"""Command-line front end: ``pcn-anneal <command> [--config FILE] [--key value ...] [--out DIR] [--seed U64]``.

Commands write CSV and JSON artifacts into the output directory.  Each file
starts with ``#`` lines holding the fully resolved configuration, so a rerun
with the same configuration reproduces it byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as E
from .diagnostics import _jsonable
from .annealing import CoolingSchedule, anneal, energy, euler_lagrange_solutions, l2_error_series
from .gaussian import RngStream, brownian_bridge_spectrum, sample_prior
from .potential import DoubleWell
from .spectral import SpectralField, to_grid

log = logging.getLogger("pcn_anneal")

COMMANDS = ("fig1", "fig2", "fig3", "fig4", "verify", "anneal", "sample")


@dataclass
class ExperimentConfig:
    """Every tunable of every command; unused fields are still recorded for provenance."""

    experiment: str = "fig1"
    lam: float = E.LAMBDA_FIG
    tau: float = 1e-2
    delta: float = 1e-2
    n_modes: int = 64
    m: int = 512
    n_steps: int = 10_000
    seed: int = 0
    n_replicas: int = 8
    out: str = "."
    taus: str = "0.001,0.003,0.01,0.03,0.1"
    delta_ratio: float = 1.0
    horizon: float = 100.0
    n_mc: int = 100_000
    schedule: str = "geometric"
    tau0: float = 1.0
    rho: float = 0.999
    c: float = 1.0
    n_samples: int = 4
    stride: int = 10

    def tau_list(self) -> list[float]:
        return [float(t) for t in self.taus.split(",") if t.strip()]

    def header(self) -> str:
        lines = [f"pcn_anneal {__version__} command={self.experiment}"]
        lines += [f"{k}={_fmt_value(v)}" for k, v in sorted(asdict(self).items()) if k != "out"]
        return "\n".join(lines)


# command-specific defaults layered over the dataclass defaults
COMMAND_DEFAULTS: dict[str, dict] = {
    "fig1": {},
    "fig2": {"tau": 1e-2, "delta": 1e-2, "n_steps": 10_000},
    "fig3": {"horizon": 100.0, "n_replicas": 8},
    "fig4": {"tau": 0.1, "delta": 1e-3, "n_modes": 256, "horizon": 10.0, "stride": 1},
    "verify": {"n_modes": 256},
    "anneal": {"delta": 1e-2, "n_steps": 10_000, "schedule": "geometric", "tau0": 1.0, "rho": 0.999},
    "sample": {"tau": 1.0, "n_modes": 64, "m": 256, "n_samples": 4},
}


def _fmt_value(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def _coerce(name: str, raw: str):
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    if name not in types:
        raise KeyError(f"unknown configuration key {name!r}")
    t = types[name]
    if t in ("int", int):
        val = float(raw)
        if val != int(val):
            raise ValueError(f"{name} must be an integer, got {raw!r}")
        return int(val)
    if t in ("float", float):
        return float(raw)
    return raw


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key=value`` lines; blank lines and ``#`` comments are ignored."""
    out = {}
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{n}: expected key=value")
        k, v = (p.strip() for p in line.split("=", 1))
        out[k] = v
    return out


def resolve_config(command: str, file_values: dict[str, str], overrides: dict[str, str]) -> ExperimentConfig:
    cfg = ExperimentConfig(experiment=command)
    for k, v in COMMAND_DEFAULTS[command].items():
        setattr(cfg, k, v)
    for source in (file_values, overrides):
        for k, v in source.items():
            setattr(cfg, k, _coerce(k, v))
    cfg.experiment = command
    if not 0 <= cfg.seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return cfg


# --- output helpers ----------------------------------------------------------

def write_csv(path: Path, cfg: ExperimentConfig, columns: list[str], rows) -> None:
    buf = io.StringIO(newline="")
    for line in cfg.header().splitlines():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def write_json(path: Path, cfg: ExperimentConfig, payload: dict) -> None:
    doc = {"config": {k: v for k, v in asdict(cfg).items() if k != "out"}, "version": __version__, **payload}
    text = json.dumps(_json_ready(doc), indent=2, sort_keys=True) + "\n"
    path.write_text(text, encoding="utf-8", newline="")


def _json_ready(obj):
    """numpy values to plain Python; non-finite floats to null so the JSON stays strict."""
    obj = _jsonable(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_ready(v) for v in obj]
    return obj


# --- commands ----------------------------------------------------------------

def cmd_fig1(cfg: ExperimentConfig, out: Path) -> bool:
    sols = {s.branch: s for s in euler_lagrange_solutions(cfg.lam, cfg.m)}
    s = sols["zero"].s
    cols = ["s", "x_zero", "x_plus", "x_minus"]
    rows = []
    for i, si in enumerate(s):
        rows.append([si, sols["zero"].values[i],
                     sols["positive"].values[i] if "positive" in sols else None,
                     sols["negative"].values[i] if "negative" in sols else None])
    write_csv(out / "fig1_solutions.csv", cfg, cols, rows)
    ok = all(sol.residual <= 1e-8 * (1 + cfg.lam) for sol in sols.values())
    write_json(out / "summary.json", cfg, {
        "n_solutions": len(sols),
        "solutions": {b: {"residual": x.residual, "amplitude": x.amplitude, "energy": x.energy(), "slope": x.slope}
                      for b, x in sols.items()},
        "pass": {"bvp_residual": ok},
    })
    return ok


def cmd_fig2(cfg: ExperimentConfig, out: Path) -> bool:
    r = E.fig2_run(cfg.lam, cfg.tau, cfg.delta, cfg.n_modes, cfg.n_steps, cfg.seed, cfg.m, cfg.stride)
    write_csv(out / "fig2_error.csv", cfg, ["k", "l2_error"], zip(r.steps, r.error))
    flags = {"plateau_mean_below_0.3": r.plateau_mean <= 0.3, "plateaued": r.plateau_ok,
             "below_initial_95pct": r.below_initial >= 0.95}
    write_json(out / "summary.json", cfg, {
        "initial_error": r.initial, "plateau_mean": r.plateau_mean, "fraction_below_initial": r.below_initial,
        "acceptance": r.acceptance, "pass": flags,
    })
    return all(flags.values())


def cmd_fig3(cfg: ExperimentConfig, out: Path) -> bool:
    r = E.fig3_run(cfg.lam, cfg.tau_list(), cfg.delta_ratio, cfg.horizon, cfg.n_replicas, cfg.seed, cfg.n_modes, cfg.m)
    write_csv(out / "fig3_tau_scaling.csv", cfg, ["tau", "mean_error", "stderr", "plateaued"],
              zip(r.taus, r.mean_error, r.stderr, r.plateaued))
    slope = None if r.fit is None else r.fit.slope
    ok = slope is not None and 0.35 <= slope <= 0.65
    write_json(out / "fig3_fit.json", cfg, {
        "fit": None if r.fit is None else r.fit.as_dict(), "acceptance": r.acceptance.tolist(),
        "plateaued": r.plateaued.tolist(), "pass": {"slope_in_band": ok},
    })
    return ok


def cmd_fig4(cfg: ExperimentConfig, out: Path) -> bool:
    r = E.fig4_run(cfg.lam, cfg.tau, cfg.delta, cfg.n_modes, cfg.horizon, cfg.seed)
    idx = np.arange(0, r.times.size, max(1, cfg.stride))
    write_csv(out / "fig4_qv.csv", cfg, ["t", "v_delta", "v_ode"], zip(r.times[idx], r.v_delta[idx], r.v_ode[idx]))
    flags = {"sup_error_below_0.1tau": r.sup_error <= 0.1 * cfg.tau,
             "final_within_10pct": abs(r.final - cfg.tau) <= 0.1 * cfg.tau}
    write_json(out / "summary.json", cfg, {"sup_error": r.sup_error, "final": r.final,
                                           "acceptance": r.acceptance, "pass": flags})
    return all(flags.values())


def cmd_verify(cfg: ExperimentConfig, out: Path) -> bool:
    reports = []
    reports.append(E.zero_potential_suite(seed=cfg.seed + 10))
    reports.append(E.drift_order(n_modes=cfg.n_modes, n_mc=cfg.n_mc, seed=cfg.seed + 1))
    reports.extend(E.acceptance_order(n_modes=cfg.n_modes, n_mc=cfg.n_mc, seed=cfg.seed + 2))
    reports.append(E.identity_suite(n_mc=cfg.n_mc, seed=cfg.seed + 3))
    reports.append(E.noise_trace_suite(n_mc=cfg.n_mc, seed=cfg.seed + 6))
    reports.append(E.apriori_suite(seed=cfg.seed + 9))
    reports.append(E.qv_additivity_suite(seed=cfg.seed + 5))
    reports.append(E.invariance_suite(seed=cfg.seed + 8))
    reports.append(E.accepted_gap_suite(seed=cfg.seed + 7))
    for r in reports:
        log.info("%-28s %s", r.name, "pass" if r.ok else "FAIL")
    ok = all(r.ok for r in reports)
    write_json(out / "verify_report.json", cfg, {"reports": [r.as_dict() for r in reports], "pass": ok})
    return ok


def cmd_anneal(cfg: ExperimentConfig, out: Path) -> bool:
    spec = brownian_bridge_spectrum(cfg.n_modes)
    pot = DoubleWell(cfg.lam)
    sched = CoolingSchedule(cfg.schedule, cfg.tau0, cfg.rho, cfg.c)
    final, traj = anneal(pot, spec, sched, cfg.delta, cfg.n_steps, SpectralField.zeros(cfg.n_modes),
                         RngStream(cfg.seed, 0), stride=cfg.stride)
    buf = traj.to_csv(None, s=0.0, header=cfg.header())
    (out / "anneal_trajectory.csv").write_text(buf, encoding="utf-8", newline="")
    sols = euler_lagrange_solutions(cfg.lam, cfg.m)
    payload = {"final_energy": energy(pot, spec, final), "final_tau": float(sched.taus(cfg.n_steps)[-1]),
               "acceptance": float(traj.flags.mean())}
    if len(sols) > 1:
        payload["final_l2_error"] = float(l2_error_series(final.coeffs, sols))
    write_json(out / "summary.json", cfg, {**payload, "pass": {}})
    return True


def cmd_sample(cfg: ExperimentConfig, out: Path) -> bool:
    spec = brownian_bridge_spectrum(cfg.n_modes)
    draws = [to_grid(sample_prior(spec, cfg.n_modes, cfg.tau, RngStream(cfg.seed, i)), cfg.m)
             for i in range(cfg.n_samples)]
    s = draws[0].s
    cols = ["s"] + [f"sample_{i + 1}" for i in range(cfg.n_samples)]
    write_csv(out / "samples.csv", cfg, cols, ([s[k]] + [d.samples[k] for d in draws] for k in range(s.size)))
    return True


HANDLERS = {"fig1": cmd_fig1, "fig2": cmd_fig2, "fig3": cmd_fig3, "fig4": cmd_fig4,
            "verify": cmd_verify, "anneal": cmd_anneal, "sample": cmd_sample}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pcn-anneal", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="flat key=value file")
    ap.add_argument("--out", help="output directory (default: current directory)")
    ap.add_argument("--seed", help="unsigned 64-bit seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _parse_overrides(extra: list[str]) -> dict[str, str]:
    out, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise ValueError(f"unexpected argument {tok!r}")
        key = tok[2:].replace("-", "_")
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ValueError(f"missing value for {tok}")
            val = extra[i + 1]
            i += 2
        out[key] = val
    return out


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args, extra = ap.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        overrides = _parse_overrides(extra)
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.out is not None:
            overrides["out"] = args.out
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve_config(args.command, file_values, overrides)
    except (KeyError, ValueError, OSError) as exc:
        ap.error(str(exc))
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        ok = HANDLERS[args.command](cfg, out)
    except OSError as exc:
        print(f"pcn-anneal: {exc}", file=sys.stderr)
        return 2
    print(f"{args.command}: {'pass' if ok else 'FAIL'} -> {out}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
