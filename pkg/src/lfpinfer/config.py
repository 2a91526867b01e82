"""Run configuration files and CSV data ingestion."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

from .capacity import OutcomeSpace
from .inference import CovariateKind, Criterion, Dataset

DEFAULTS = {
    "alpha": 0.05,
    "criterion": "mle",
    "seed": 20240101,
    "estimator_seed": 0,
    "lfp_method": "auto",
    "workers": 1,
    "output": "out",
}
TOP_KEYS = {"command", "model", "hypothesis", "data", "simulation", "alpha", "criterion", "seed",
            "estimator_seed", "lfp_method", "workers", "output"}
HYPOTHESIS_KEYS = {"grid", "lattice", "box", "functional", "phi_grid", "phi_tol"}
LATTICE_KEYS = {"lo", "hi", "step"}
BOX_KEYS = {"lo", "hi"}
FUNCTIONAL_KEYS = {"kind", "index", "player", "x", "y_other"}
PHI_GRID_KEYS = {"lo", "hi", "step", "values"}
DATA_KEYS = {"path", "outcome", "covariates", "kind"}
SIM_KEYS = {"design", "n", "reps", "h_grid", "selection", "truth_base", "truth_direction",
            "x_levels", "box_lo"}
SELECTION_KEYS = {"kind", "p_sel"}
COMMANDS = ("test", "confset", "simulate")
REQUIRED = {"test": ("model", "hypothesis", "data"), "confset": ("model", "hypothesis", "data"),
            "simulate": ()}


class ConfigError(ValueError):
    """Invalid configuration or data; the CLI maps it to exit status 2."""


# --- YAML with line numbers ----------------------------------------------------------


def _construct(node, path: str, lines: dict) -> Any:
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for knode, vnode in node.value:
            key = knode.value
            sub = f"{path}.{key}" if path else key
            if key in out:
                raise ConfigError(f"line {knode.start_mark.line + 1}: duplicate key {sub!r}")
            lines[sub] = knode.start_mark.line + 1
            out[key] = _construct(vnode, sub, lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v, f"{path}[{i}]", lines) for i, v in enumerate(node.value)]
    return _scalar(node)


def _scalar(node):
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(node, deep=True)
    finally:
        loader.dispose()


def load_yaml(text: str) -> tuple[dict, dict]:
    """Parse YAML and remember the line of every key path."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    if node is None:
        raise ConfigError("config file is empty")
    lines: dict = {}
    data = _construct(node, "", lines)
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    return data, lines


# --- validated config -----------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: dict
    hypothesis: dict
    data: dict
    simulation: dict
    alpha: float
    criterion: str
    seed: int
    estimator_seed: int
    lfp_method: str
    workers: int
    output: str
    source: str | None = field(default=None, compare=False)
    # top-level keys present in the file, as opposed to filled-in defaults
    explicit: frozenset = field(default=frozenset(), compare=False)

    def to_dict(self) -> dict:
        return {
            "command": self.command, "model": self.model, "hypothesis": self.hypothesis,
            "data": self.data, "simulation": self.simulation, "alpha": self.alpha,
            "criterion": self.criterion, "seed": self.seed,
            "estimator_seed": self.estimator_seed, "lfp_method": self.lfp_method,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _where(lines: dict, path: str) -> str:
    line = lines.get(path)
    return f"line {line}: " if line else ""


def _check_keys(block: dict, allowed: set, path: str, lines: dict) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"{_where(lines, path)}{path} must be a mapping")
    for key in block:
        if key not in allowed:
            sub = f"{path}.{key}" if path else key
            raise ConfigError(
                f"{_where(lines, sub)}unknown key {sub!r}; allowed: {sorted(allowed)}"
            )


def config_from_dict(raw: dict, lines: dict | None = None, source: str | None = None) -> RunConfig:
    lines = lines or {}
    _check_keys(raw, TOP_KEYS, "", lines)
    command = raw.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"{_where(lines, 'command')}command must be one of {list(COMMANDS)}, "
                          f"got {command!r}")
    missing = [b for b in REQUIRED[command] if b not in raw]
    if missing:
        raise ConfigError(f"missing required block(s) {missing}; a {command} config needs "
                          f"{list(REQUIRED[command])}")
    cfg = {**DEFAULTS, **raw}
    alpha = cfg["alpha"]
    if not isinstance(alpha, (int, float)) or not 0 < alpha < 1:
        raise ConfigError(f"{_where(lines, 'alpha')}alpha must lie in (0, 1), got {alpha!r}")
    try:
        Criterion(cfg["criterion"])
    except ValueError:
        raise ConfigError(f"{_where(lines, 'criterion')}criterion must be one of "
                          f"{[c.value for c in Criterion]}") from None
    if cfg["lfp_method"] not in ("auto", "closed_form", "solver"):
        raise ConfigError(f"{_where(lines, 'lfp_method')}lfp_method must be auto, closed_form or solver")
    for key in ("seed", "estimator_seed", "workers"):
        if not isinstance(cfg[key], int) or isinstance(cfg[key], bool) or cfg[key] < 0:
            raise ConfigError(f"{_where(lines, key)}{key} must be a nonnegative integer")
    model = raw.get("model", {})
    if command != "simulate" or model:
        _check_keys(model, {"id", "k", "alternatives", "covariates", "kappa", "periods", "latent"},
                    "model", lines)
        if "id" not in model:
            raise ConfigError(f"{_where(lines, 'model')}model block needs an id")
    hyp = raw.get("hypothesis", {})
    if hyp:
        _check_keys(hyp, HYPOTHESIS_KEYS, "hypothesis", lines)
        for sub, keys in (("lattice", LATTICE_KEYS), ("box", BOX_KEYS),
                          ("functional", FUNCTIONAL_KEYS), ("phi_grid", PHI_GRID_KEYS)):
            if sub in hyp and isinstance(hyp[sub], dict):
                _check_keys(hyp[sub], keys, f"hypothesis.{sub}", lines)
        if command != "simulate" and "grid" not in hyp and "lattice" not in hyp:
            raise ConfigError(f"{_where(lines, 'hypothesis')}hypothesis needs a grid or a lattice")
        if command != "simulate" and "box" not in hyp:
            raise ConfigError(f"{_where(lines, 'hypothesis')}hypothesis needs a search box")
        if command == "confset" and ("functional" not in hyp or "phi_grid" not in hyp):
            raise ConfigError(f"{_where(lines, 'hypothesis')}confset needs functional and phi_grid")
    data = raw.get("data", {})
    if isinstance(data, str):
        data = {"path": data}
    if data:
        _check_keys(data, DATA_KEYS, "data", lines)
    sim = raw.get("simulation", {})
    if sim:
        _check_keys(sim, SIM_KEYS, "simulation", lines)
        if isinstance(sim.get("selection"), dict):
            _check_keys(sim["selection"], SELECTION_KEYS, "simulation.selection", lines)
    return RunConfig(command, dict(model), dict(hyp), dict(data), dict(sim), float(alpha),
                     str(cfg["criterion"]), int(cfg["seed"]), int(cfg["estimator_seed"]),
                     str(cfg["lfp_method"]), int(cfg["workers"]), str(cfg["output"]), source,
                     frozenset(raw))


def parse_config(path: str | os.PathLike) -> RunConfig:
    """Read and validate a YAML run configuration; unknown keys are errors."""
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    raw, lines = load_yaml(text)
    return config_from_dict(raw, lines, str(path))


# --- hypothesis grids ---------------------------------------------------------------


def lattice_points(lo, hi, step) -> np.ndarray:
    """Cartesian lattice; coordinates with lo == hi are held fixed."""
    lo = np.asarray(lo, float).ravel()
    hi = np.asarray(hi, float).ravel()
    step = np.broadcast_to(np.asarray(step, float), lo.shape)
    axes = []
    for a, b, s in zip(lo, hi, step):
        if b < a:
            raise ConfigError("lattice upper bound below lower bound")
        if b == a:
            axes.append(np.array([a]))
            continue
        if s <= 0:
            raise ConfigError("lattice step must be positive")
        k = int(round((b - a) / s))
        axes.append(a + s * np.arange(k + 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def hypothesis_grid(hyp: dict) -> np.ndarray:
    if "grid" in hyp:
        grid = np.atleast_2d(np.asarray(hyp["grid"], dtype=float))
    else:
        lat = hyp["lattice"]
        grid = lattice_points(lat["lo"], lat["hi"], lat.get("step", 1.0))
    if grid.size == 0:
        raise ConfigError("empty grid: the null grid has no points")
    return grid


def phi_values(hyp: dict) -> np.ndarray:
    spec = hyp["phi_grid"]
    if isinstance(spec, list):
        vals = np.asarray(spec, dtype=float)
    elif "values" in spec:
        vals = np.asarray(spec["values"], dtype=float)
    else:
        vals = lattice_points([spec["lo"]], [spec["hi"]], spec.get("step", 1.0))[:, 0]
    if vals.size == 0:
        raise ConfigError("empty grid: phi_grid has no values")
    return vals.ravel()


# --- CSV ----------------------------------------------------------------------------------


def ingest_csv(path: str | os.PathLike, space: OutcomeSpace, outcome: str = "y",
               covariates: list[str] | None = None,
               kind: CovariateKind | str = CovariateKind.DISCRETE) -> Dataset:
    """Read a UTF-8 comma-separated file with a header row into a Dataset.

    Outcome labels must match the model's outcome labels exactly; covariate
    columns default to every column other than the outcome, in file order.
    """
    kind = CovariateKind(kind)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read data {path}: {exc.strerror}") from None
    with fh:
        rows = list(csv.reader(fh))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise ConfigError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    dupes = sorted({h for h in header if header.count(h) > 1})
    if dupes:
        raise ConfigError(f"{path}: duplicate header column(s) {dupes}")
    if outcome not in header:
        raise ConfigError(f"{path}: no outcome column {outcome!r} in header {header}")
    covs = [h for h in header if h != outcome] if covariates is None else list(covariates)
    for c in covs:
        if c not in header:
            raise ConfigError(f"{path}: no covariate column {c!r} in header {header}")
    body = rows[1:]
    if not body:
        raise ConfigError(f"{path}: empty file (header only)")
    yi = header.index(outcome)
    ci = [header.index(c) for c in covs]
    lookup = {label: i for i, label in enumerate(space.labels)}
    ys = np.empty(len(body), dtype=np.int64)
    xs = np.empty((len(body), len(ci)))
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ConfigError(f"{path}: row {r} has {len(row)} fields, header has {len(header)}")
        label = row[yi].strip()
        if label not in lookup:
            raise ConfigError(f"{path}: row {r}: unknown outcome label {label!r}; "
                              f"expected one of {list(space.labels)}")
        ys[r - 2] = lookup[label]
        for j, c in enumerate(ci):
            try:
                xs[r - 2, j] = float(row[c])
            except ValueError:
                raise ConfigError(f"{path}: row {r}: covariate {header[c]!r} is not a number: "
                                  f"{row[c]!r}") from None
    return Dataset(ys, xs, kind)


def write_csv(data: Dataset, path: str | os.PathLike, space: OutcomeSpace, outcome: str = "y",
              covariates: list[str] | None = None) -> None:
    covs = covariates or [f"x{j + 1}" for j in range(data.x.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([outcome, *covs])
        for y, x in zip(data.y, data.x):
            w.writerow([space.labels[int(y)], *(repr(float(v)) for v in x)])


def file_sha256(path: str | os.PathLike) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
