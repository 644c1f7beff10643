"""Command line interface: ``hlsid simulate|fit|pseudotrue|asymcov|experiment``."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymcov import assemble_sigma_correct, assemble_sigma_mis, crb_from_moment, sample_third_moments
from .basis import ModelParams, reference_model
from .errors import ConfigError, HlsidError
from .harness import ExperimentConfig, basis_from_config, run_experiment, run_pseudo_true_sweep
from .io import load_config, read_events, write_curves, write_events, write_report
from .lsfit import ls_fit
from .simulate import SimConfig, thin_simulate
from .spectral import misspec_correction, pseudo_true


def _model(cfg: dict) -> ModelParams:
    return ModelParams.from_config(cfg["model"]) if "model" in cfg else reference_model()


def _envelope(cfg: dict, seed: int, payload) -> dict:
    return {"version": __version__, "seed": seed, "config": cfg, "result": payload}


def _bases(cfg: dict):
    if "bases" in cfg:
        return [basis_from_config(b) for b in cfg["bases"]]
    if "basis" in cfg:
        return [basis_from_config(cfg["basis"])]
    raise ConfigError("config needs 'basis' or 'bases'")


def cmd_simulate(cfg, args, out: Path) -> int:
    model = _model(cfg)
    horizon = float(cfg.get("horizon", 100.0))
    n = int(cfg.get("trajectories", 1))
    start = int(cfg.get("trajectory_index", 0))
    summary = []
    for i in range(start, start + n):
        ev = thin_simulate(SimConfig(model, horizon, args.seed, i, int(cfg.get("event_cap", 10**8))))
        name = f"events_{i}.csv"
        write_events(ev, out / name)
        summary.append({"trajectory_index": i, "file": name, "count": ev.count})
    write_report(_envelope(cfg, args.seed, {"trajectories": summary}), out / "simulate.json")
    return 0


def cmd_fit(cfg, args, out: Path) -> int:
    if "events" not in cfg:
        raise ConfigError("config needs 'events' (path to an event CSV)")
    path = Path(cfg["events"])
    if not path.is_absolute():
        path = Path(args.config).parent / path
    horizon = cfg.get("horizon")
    events = read_events(path, None if horizon is None else float(horizon))
    fits = [ls_fit(events, b) for b in _bases(cfg)]
    payload = fits[0] if len(fits) == 1 else fits
    write_report(_envelope(cfg, args.seed, payload), out / "fit.json")
    return 0


def cmd_pseudotrue(cfg, args, out: Path) -> int:
    ecfg = ExperimentConfig.from_dict({**cfg, "bases": cfg.get("bases", [cfg["basis"]] if "basis" in cfg else [])})
    sweep = run_pseudo_true_sweep(ecfg)
    if args.emit_curves:
        model = ecfg.true_model
        t = ecfg.tgrid.dt * np.arange(ecfg.tgrid.n + 1)
        for k, entry in enumerate(sweep):
            rep = entry["report"]
            if rep is None:
                continue
            dphi = model.hir.eval(t) - rep.hir.eval(t)
            write_curves(out / f"delta_phi_{k + 1}.csv", t, dphi[None, :])
            corr = misspec_correction(model, rep, ecfg.sgrid, ecfg.tgrid)
            write_curves(out / f"w_tilde_{k + 1}.csv", corr.t, corr.w_tilde)
            write_curves(out / f"h_alpha_{k + 1}.csv", corr.t, corr.h_alpha)
    write_report(_envelope(cfg, args.seed, sweep), out / "pseudotrue.json")
    return 0


def cmd_asymcov(cfg, args, out: Path) -> int:
    ecfg = ExperimentConfig.from_dict({**cfg, "seed": args.seed})
    model = ecfg.true_model
    lam = model.expected_rate
    mode = cfg.get("mode", "correct")
    L, T = ecfg.cov_trajectories, ecfg.cov_horizon
    if mode in ("correct", "crb"):
        M = sample_third_moments(model, [(model.basis, None)], L, T, args.seed, with_inverse=True)[0]
        pt0 = pseudo_true(model, model.basis, ecfg.sgrid)
        sig = assemble_sigma_correct(M, pt0, lam, model.branching_ratio, model.weights)
        payload = {"sigma0": sig, "moment": M}
        if mode == "crb":
            payload["crb"] = crb_from_moment(M).with_gap(sig.sigma)
    elif mode == "misspecified":
        basis = _bases(cfg)[0]
        pt = pseudo_true(model, basis, ecfg.sgrid)
        corr = misspec_correction(model, pt, ecfg.sgrid, ecfg.tgrid)
        M = sample_third_moments(model, [(basis, corr)], L, T, args.seed)[0]
        payload = {"sigma_mis": assemble_sigma_mis(M, pt, corr, lam), "moment": M, "pseudo_true": pt}
    else:
        raise ConfigError(f"unknown asymcov mode {mode!r}")
    write_report(_envelope(cfg, args.seed, payload), out / "asymcov.json")
    return 0


def cmd_experiment(cfg, args, out: Path) -> int:
    ecfg = ExperimentConfig.from_dict({**cfg, "seed": args.seed})
    res = run_experiment(ecfg)
    for name, table in res["quantiles"].items():
        if table is None:
            continue
        with (out / f"quantiles_{name}.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["component", "T", "p", "empirical", "theoretical"])
            for row in table.rows():
                w.writerow([f"{v:.17g}" if isinstance(v, float) else v for v in row])
    write_report(res, out / "experiment.json")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "pseudotrue": cmd_pseudotrue,
    "asymcov": cmd_asymcov,
    "experiment": cmd_experiment,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hlsid", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--emit-curves", action="store_true", help="write curve CSVs (pseudotrue)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args, out)
    except HlsidError as exc:
        print(f"hlsid: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (KeyError, TypeError, ValueError) as exc:
        print(f"hlsid: config error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
