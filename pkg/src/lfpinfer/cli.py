"""Command-line front end: test, confset, simulate and rerun."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    RunConfig,
    config_from_dict,
    file_sha256,
    hypothesis_grid,
    ingest_csv,
    parse_config,
    phi_values,
)
from .inference import (
    Criterion,
    HypothesisSpec,
    PipelineOptions,
    confidence_set,
    crossfit_lr,
    split_sample,
)
from .registry import build_model
from .simulation import (
    McDesign,
    SelectionKind,
    SelectionPolicy,
    default_workers,
    manifest,
    mc_table,
    table1_design,
    table2_design,
    write_table_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2


def _dump(obj: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _model(cfg: RunConfig):
    try:
        return build_model(cfg.model)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"model block: {exc}") from None


def _data_path(cfg: RunConfig, override: str | None) -> str:
    path = override or cfg.data.get("path")
    if not path:
        raise ConfigError("no data file given (data.path or --data)")
    if not os.path.isabs(path) and cfg.source and not os.path.exists(path):
        alt = os.path.join(os.path.dirname(os.path.abspath(cfg.source)), path)
        if os.path.exists(alt):
            path = alt
    if not os.path.exists(path):
        raise ConfigError(f"data file not found: {path}")
    return os.path.abspath(path)


def _load_data(cfg: RunConfig, model, path: str):
    return ingest_csv(path, model.space, cfg.data.get("outcome", "y"), cfg.data.get("covariates"),
                      cfg.data.get("kind", "discrete"))


def _hypothesis(cfg: RunConfig, model) -> HypothesisSpec:
    hyp = cfg.hypothesis
    grid = hypothesis_grid(hyp)
    box = hyp["box"]
    try:
        spec = HypothesisSpec(grid, box["lo"], box["hi"])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"hypothesis block: {exc}") from None
    if spec.theta0_grid.shape[1] != model.n_params:
        raise ConfigError(f"hypothesis points have {spec.theta0_grid.shape[1]} coordinates; "
                          f"model {model.name} has {model.n_params} parameters")
    return spec


def _functional(cfg: RunConfig, model):
    spec = cfg.hypothesis["functional"]
    kind = spec.get("kind", "coordinate")
    if kind == "coordinate":
        idx = int(spec.get("index", 0))
        if not 0 <= idx < model.n_params:
            raise ConfigError(f"functional index {idx} out of range")
        return lambda t: float(t[idx])
    if kind == "counterfactual_entry":
        if not hasattr(model, "counterfactual_entry"):
            raise ConfigError("counterfactual_entry needs the entry_game model")
        player = int(spec.get("player", 0))
        x = spec.get("x", [])
        y_other = int(spec.get("y_other", 0))
        return lambda t: model.counterfactual_entry(t, player, x, y_other)
    raise ConfigError(f"unknown functional kind {kind!r}")


def run_test(cfg: RunConfig, out: str, data_override: str | None = None) -> dict:
    model = _model(cfg)
    path = _data_path(cfg, data_override)
    data = _load_data(cfg, model, path)
    hyp = _hypothesis(cfg, model)
    plan = split_sample(data, cfg.seed)
    opts = PipelineOptions(Criterion(cfg.criterion), cfg.lfp_method, cfg.estimator_seed)
    rec = crossfit_lr(data, plan, hyp, model, cfg.alpha, opts)
    result = {
        "version": __version__,
        "command": "test",
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "data_path": path,
        "data_sha256": file_sha256(path),
        "n": data.n,
        "seed": cfg.seed,
        **rec.to_dict(),
    }
    _dump(result, os.path.join(out, "test_record.json"))
    return result


def run_confset(cfg: RunConfig, out: str, data_override: str | None = None) -> dict:
    model = _model(cfg)
    path = _data_path(cfg, data_override)
    data = _load_data(cfg, model, path)
    hyp = _hypothesis(cfg, model)
    phis = phi_values(cfg.hypothesis)
    tol = cfg.hypothesis.get("phi_tol")
    if tol is None:
        steps = np.diff(np.sort(phis))
        tol = float(steps.min() / 2) if len(steps) and steps.min() > 0 else 1e-9
    opts = PipelineOptions(Criterion(cfg.criterion), cfg.lfp_method, cfg.estimator_seed)
    res = confidence_set(data, model, _functional(cfg, model), phis, hyp.theta0_grid, hyp.box_lo,
                         hyp.box_hi, cfg.alpha, cfg.seed, float(tol), opts)
    with open(os.path.join(out, "confset.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["phi", "S_n", "log_S_n", "retained", "null_points"])
        for r in res.rows:
            with np.errstate(over="ignore"):
                s = float(np.exp(r.log_s))
            w.writerow([repr(r.phi), repr(s), repr(r.log_s), int(r.retained), r.n_null_points])
    summary = {
        "version": __version__,
        "command": "confset",
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "data_path": path,
        "data_sha256": file_sha256(path),
        "alpha": cfg.alpha,
        "retained": res.retained,
        "skipped": list(res.skipped),
        "split_seed": cfg.seed,
        "phi_tol": tol,
    }
    _dump(summary, os.path.join(out, "confset_summary.json"))
    return summary


def simulation_design(cfg: RunConfig | None, design: str) -> McDesign:
    sim = dict(cfg.simulation) if cfg else {}
    design = sim.pop("design", design) if design is None else design
    kw = {}
    for key in ("n", "reps"):
        if key in sim:
            kw[key] = int(sim[key])
    if "h_grid" in sim:
        kw["h_grid"] = tuple(float(h) for h in sim["h_grid"])
    if "selection" in sim:
        sel = sim["selection"]
        try:
            kw["selection"] = SelectionPolicy(SelectionKind(sel.get("kind", "fixed_prob")),
                                              float(sel.get("p_sel", 0.5)))
        except ValueError as exc:
            raise ConfigError(f"simulation.selection: {exc}") from None
    if cfg is not None:
        kw["seed"] = cfg.seed
    try:
        if design == "table1":
            if cfg is not None:
                kw["criterion"] = cfg.criterion
            if "box_lo" in sim:
                kw["box_lo"] = float(sim["box_lo"])
            d = table1_design(**kw)
        elif design == "table2":
            if cfg is not None and "criterion" in cfg.explicit:
                kw["criterion"] = cfg.criterion
            d = table2_design(**kw)
        elif design == "custom":
            if cfg is None:
                raise ConfigError("custom design needs --config")
            model = _model(cfg)
            hyp = _hypothesis(cfg, model)
            for key in ("truth_base", "truth_direction"):
                if key not in sim:
                    raise ConfigError(f"custom design needs simulation.{key}")
            d = McDesign(
                name="custom", model=cfg.model,
                truth_base=tuple(map(float, sim["truth_base"])),
                truth_direction=tuple(map(float, sim["truth_direction"])),
                theta0_grid=tuple(tuple(map(float, t)) for t in hyp.theta0_grid),
                box_lo=tuple(map(float, hyp.box_lo)), box_hi=tuple(map(float, hyp.box_hi)),
                n=int(sim.get("n", 100)), reps=int(sim.get("reps", 1000)),
                criterion=cfg.criterion,
                selection=kw.get("selection", SelectionPolicy()),
                h_grid=kw.get("h_grid", (0.0,)), seed=cfg.seed,
                x_levels=tuple(tuple(map(float, lv)) for lv in sim.get("x_levels", ())),
            )
        else:
            raise ConfigError(f"unknown design {design!r}; expected table1, table2 or custom")
        if cfg is not None:
            d = McDesign.from_dict({**d.to_dict(), "alpha": cfg.alpha})
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"simulation design: {exc}") from None
    return d


def run_design(design: McDesign, out: str, workers: int = 1) -> dict:
    t0 = time.perf_counter()
    res = mc_table(design, workers)
    write_table_csv(res.rows(), os.path.join(out, "table.csv"))
    with open(os.path.join(out, "replications.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["h", "rep", "log_T_n", "log_T_n_swap", "log_S_n", "reject"])
        for c in res.cells:
            for r in range(len(c.reject)):
                w.writerow([repr(c.h), r, repr(float(c.log_t[r])), repr(float(c.log_t_swap[r])),
                            repr(float(c.log_s[r])), int(c.reject[r])])
    man = manifest(design, {"command": "simulate", "config_hash": design.config_hash()})
    _dump(man, os.path.join(out, "manifest.json"))
    print(f"simulate: {design.reps} replications x {len(design.h_grid)} alternatives in "
          f"{time.perf_counter() - t0:.1f}s", file=sys.stderr)
    return man


def _workers(flag: int | None, cfg: RunConfig | None = None) -> int:
    """--workers flag, then an explicit config value, then the available cores."""
    if flag:
        return flag
    if cfg is not None and "workers" in cfg.explicit:
        return cfg.workers
    return default_workers()


def run(cfg: RunConfig, out: str | None = None, data: str | None = None,
        workers: int | None = None, design: str | None = None) -> dict:
    out = out or cfg.output
    os.makedirs(out, exist_ok=True)
    if cfg.command == "test":
        return run_test(cfg, out, data)
    if cfg.command == "confset":
        return run_confset(cfg, out, data)
    return run_design(simulation_design(cfg, design), out, _workers(workers, cfg))


def rerun(manifest_path: str, out: str, workers: int | None = None) -> dict:
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            man = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {manifest_path}: {exc}") from None
    os.makedirs(out, exist_ok=True)
    if "design" in man:
        return run_design(McDesign.from_dict(man["design"]), out, _workers(workers))
    cfg = config_from_dict(man["config"])
    if "data_sha256" in man and file_sha256(man["data_path"]) != man["data_sha256"]:
        raise ConfigError(f"data file {man['data_path']} changed since the manifest was written")
    return run(cfg, out, man.get("data_path"))


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lfpinfer", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("test", "confset"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=True)
        s.add_argument("--data")
        s.add_argument("--out")
        s.add_argument("--workers", type=int)
    s = sub.add_parser("simulate")
    s.add_argument("--design", required=True, choices=("table1", "table2", "custom"))
    s.add_argument("--config")
    s.add_argument("--out")
    s.add_argument("--workers", type=int)
    s = sub.add_parser("rerun")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--workers", type=int)
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "rerun":
            rerun(args.manifest, args.out, _workers(args.workers))
            return EXIT_OK
        if args.command == "simulate":
            cfg = parse_config(args.config) if args.config else None
            if cfg is not None and cfg.command != "simulate":
                raise ConfigError(f"config is for {cfg.command!r}, not simulate")
            out = args.out or (cfg.output if cfg else "out")
            os.makedirs(out, exist_ok=True)
            design = simulation_design(cfg, args.design)
            run_design(design, out, _workers(args.workers, cfg))
            return EXIT_OK
        cfg = parse_config(args.config)
        if cfg.command != args.command:
            raise ConfigError(f"config is for {cfg.command!r}, not {args.command}")
        result = run(cfg, args.out, args.data, args.workers)
        key = "decision" if args.command == "test" else "retained"
        print(json.dumps({key: result[key]}, sort_keys=True))
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
