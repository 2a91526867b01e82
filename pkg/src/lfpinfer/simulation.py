"""Data-generating processes with explicit selection, and the Monte Carlo harness."""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .inference import (
    Criterion,
    Dataset,
    HypothesisSpec,
    PipelineOptions,
    crossfit_lr,
    split_sample,
)
from .models.base import IncompleteModel
from .registry import build_model

# Table 1 alternatives (multiples of 0.069) and Table 2 alternatives (multiples of 1.474/14)
TABLE1_H = (0.0, 0.069, 0.138, 0.207, 0.276, 0.345, 0.414, 0.483, 0.552, 0.621, 0.690,
            0.759, 0.828, 0.897, 0.966)
TABLE2_H = (0.0, 0.105, 0.211, 0.316, 0.421, 0.526, 0.632, 0.737, 0.842, 0.947, 1.053,
            1.158, 1.263, 1.368, 1.474)
DEFAULT_SEED = 20240101


class SelectionKind(enum.Enum):
    FIXED_PROB = "fixed_prob"
    ALWAYS_FIRST = "always_first"
    ALWAYS_SECOND = "always_second"
    COVARIATE_DEPENDENT = "covariate_dependent"
    UNIT_ALTERNATING = "unit_alternating"


@dataclass(frozen=True)
class SelectionPolicy:
    """Rule picking the realized outcome when the predicted set has several members.

    "First" is the highest-index member of the set and "second" the lowest;
    for the entry game's multiplicity set {01, 10} these are (1,0) and (0,1).
    The covariate-dependent rule picks the first member iff x[0] >= x[-1]
    (always the first member when there are no covariates).
    """

    kind: SelectionKind = SelectionKind.FIXED_PROB
    p_sel: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", SelectionKind(self.kind))
        if not 0.0 <= self.p_sel <= 1.0:
            raise ValueError("selection probability must lie in [0, 1]")

    def pick_first(self, xs: np.ndarray, units: np.ndarray, v: np.ndarray) -> np.ndarray:
        k = self.kind
        if k is SelectionKind.FIXED_PROB:
            return v < self.p_sel
        if k is SelectionKind.ALWAYS_FIRST:
            return np.ones(len(v), dtype=bool)
        if k is SelectionKind.ALWAYS_SECOND:
            return np.zeros(len(v), dtype=bool)
        if k is SelectionKind.COVARIATE_DEPENDENT:
            if xs.shape[1] == 0:
                return np.ones(len(v), dtype=bool)
            return xs[:, 0] >= xs[:, -1]
        return units % 2 == 0

    def choose(self, masks: np.ndarray, xs: np.ndarray, units: np.ndarray, v: np.ndarray) -> np.ndarray:
        masks = np.asarray(masks, dtype=np.int64)
        if np.any(masks <= 0):
            raise ValueError("empty predicted set")
        highest = np.floor(np.log2(masks)).astype(np.int64)
        lowest = np.floor(np.log2(masks & -masks)).astype(np.int64)
        return np.where(self.pick_first(xs, units, v), highest, lowest)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "p_sel": self.p_sel}


@dataclass(frozen=True)
class XLaw:
    """Independent coordinates, each uniform on its own finite list of levels."""

    levels: tuple[tuple[float, ...], ...] = ()

    @property
    def dim(self) -> int:
        return len(self.levels)

    def from_uniform(self, v: np.ndarray) -> np.ndarray:
        cols = []
        for j, lev in enumerate(self.levels):
            lev = np.asarray(lev, dtype=float)
            idx = np.minimum((v[:, j] * len(lev)).astype(np.int64), len(lev) - 1)
            cols.append(lev[idx])
        return np.stack(cols, axis=1) if cols else np.zeros((len(v), 0))


def unit_stream(seed: int, rep: int) -> np.random.Generator:
    """Counter-based stream for replication ``rep``; units consume rows in order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rep])))


def simulate_dgp(model: IncompleteModel, theta, selection: SelectionPolicy, n: int, seed: int,
                 rep: int = 0, x_law: XLaw | None = None) -> Dataset:
    """Draw n units: covariates, latent, predicted set, then the selected outcome.

    Each unit reads one fixed-width row of uniforms, so unit i's draws depend
    only on (seed, rep, i) and not on n.
    """
    x_law = x_law or XLaw()
    if x_law.dim != model.x_dim:
        raise ValueError(f"covariate law has {x_law.dim} coordinates, model needs {model.x_dim}")
    width = x_law.dim + model.n_uniforms + 1
    block = unit_stream(seed, rep).random((n, width))
    xs = x_law.from_uniform(block[:, : x_law.dim])
    u = model.latent_from_uniform(block[:, x_law.dim: x_law.dim + model.n_uniforms])
    masks = model.predicted_masks(theta, xs if model.x_dim else np.zeros((1, 0)), u)
    y = selection.choose(masks, xs, np.arange(n), block[:, -1])
    return Dataset(y, xs)


@dataclass(frozen=True)
class McDesign:
    """Monte Carlo design; the truth at alternative h is ``truth_base + h * truth_direction``."""

    name: str
    model: dict
    truth_base: tuple[float, ...]
    truth_direction: tuple[float, ...]
    theta0_grid: tuple[tuple[float, ...], ...]
    box_lo: tuple[float, ...]
    box_hi: tuple[float, ...]
    n: int
    reps: int = 1000
    alpha: float = 0.05
    criterion: str = "mle"
    selection: SelectionPolicy = field(default_factory=SelectionPolicy)
    h_grid: tuple[float, ...] = (0.0,)
    seed: int = DEFAULT_SEED
    x_levels: tuple[tuple[float, ...], ...] = ()

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("need at least one replication")
        if not self.h_grid:
            raise ValueError("h grid is empty")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        Criterion(self.criterion)

    def truth(self, h: float) -> np.ndarray:
        return np.asarray(self.truth_base, float) + h * np.asarray(self.truth_direction, float)

    def hypothesis(self) -> HypothesisSpec:
        return HypothesisSpec(np.array(self.theta0_grid), self.box_lo, self.box_hi)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model": self.model,
            "truth_base": list(self.truth_base),
            "truth_direction": list(self.truth_direction),
            "theta0_grid": [list(t) for t in self.theta0_grid],
            "box_lo": list(self.box_lo),
            "box_hi": list(self.box_hi),
            "n": self.n,
            "reps": self.reps,
            "alpha": self.alpha,
            "criterion": self.criterion,
            "selection": self.selection.to_dict(),
            "h_grid": list(self.h_grid),
            "seed": self.seed,
            "x_levels": [list(lv) for lv in self.x_levels],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "McDesign":
        d = dict(d)
        sel = d.pop("selection", {})
        return cls(
            name=d["name"], model=dict(d["model"]),
            truth_base=tuple(map(float, d["truth_base"])),
            truth_direction=tuple(map(float, d["truth_direction"])),
            theta0_grid=tuple(tuple(map(float, t)) for t in d["theta0_grid"]),
            box_lo=tuple(map(float, d["box_lo"])), box_hi=tuple(map(float, d["box_hi"])),
            n=int(d["n"]), reps=int(d.get("reps", 1000)), alpha=float(d.get("alpha", 0.05)),
            criterion=str(d.get("criterion", "mle")),
            selection=SelectionPolicy(SelectionKind(sel.get("kind", "fixed_prob")),
                                      float(sel.get("p_sel", 0.5))),
            h_grid=tuple(map(float, d.get("h_grid", (0.0,)))),
            seed=int(d.get("seed", DEFAULT_SEED)),
            x_levels=tuple(tuple(map(float, lv)) for lv in d.get("x_levels", ())),
        )

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    k = int(round((hi - lo) / step))
    return lo + step * np.arange(k + 1)


def table1_design(n: int = 100, criterion: str = "mle", reps: int = 1000,
                  h_grid: Sequence[float] = TABLE1_H, seed: int = DEFAULT_SEED,
                  selection: SelectionPolicy | None = None, box_lo: float = -3.0) -> McDesign:
    """No covariates; H0: beta = 0 against beta = (-h, -h)."""
    return McDesign(
        name="table1", model={"id": "entry_game", "k": 0},
        truth_base=(0.0, 0.0), truth_direction=(-1.0, -1.0), theta0_grid=((0.0, 0.0),),
        box_lo=(box_lo, box_lo), box_hi=(0.0, 0.0), n=n, reps=reps, criterion=criterion,
        selection=selection or SelectionPolicy(), h_grid=tuple(h_grid), seed=seed,
    )


def table2_design(n: int = 100, criterion: str = "moment", reps: int = 1000,
                  h_grid: Sequence[float] = TABLE2_H, seed: int = DEFAULT_SEED,
                  selection: SelectionPolicy | None = None, beta_true: float = -0.5,
                  beta_step: float = 0.25, beta_lo: float = -2.0, delta_bound: float = 2.0) -> McDesign:
    """Covariates uniform on {-2,...,2}^2; H0: delta = 0 with beta a nuisance on a lattice."""
    betas = _grid(beta_lo, 0.0, beta_step)
    grid = tuple((float(b1), float(b2), 0.0, 0.0) for b1 in betas for b2 in betas)
    levels = (-2.0, -1.0, 0.0, 1.0, 2.0)
    return McDesign(
        name="table2", model={"id": "entry_game", "k": 1},
        truth_base=(beta_true, beta_true, 0.0, 0.0), truth_direction=(0.0, 0.0, 1.0, 1.0),
        theta0_grid=grid, box_lo=(beta_lo, beta_lo, -delta_bound, -delta_bound),
        box_hi=(0.0, 0.0, delta_bound, delta_bound), n=n, reps=reps, criterion=criterion,
        selection=selection or SelectionPolicy(), h_grid=tuple(h_grid), seed=seed,
        x_levels=(levels, levels),
    )


@dataclass
class McCell:
    """Raw replication output at one alternative."""

    h: float
    log_t: np.ndarray
    log_t_swap: np.ndarray
    log_s: np.ndarray
    reject: np.ndarray

    @property
    def power(self) -> float:
        return float(np.mean(self.reject))

    @property
    def mc_se(self) -> float:
        p = self.power
        return math.sqrt(p * (1 - p) / len(self.reject))


@dataclass
class McResult:
    design: McDesign
    cells: list[McCell]

    def rows(self) -> list[dict]:
        return [
            {"n": self.design.n, "criterion": self.design.criterion, "h": c.h,
             "power": c.power, "mc_se": c.mc_se, "reps": len(c.reject)}
            for c in self.cells
        ]


def split_seed(seed: int, rep: int) -> int:
    return int(np.random.SeedSequence([seed, rep, 1]).generate_state(1)[0])


def _run_reps(design: McDesign, h: float, reps: Sequence[int]) -> np.ndarray:
    model = build_model(design.model)
    hyp = design.hypothesis()
    theta = design.truth(h)
    opts = PipelineOptions(Criterion(design.criterion), estimate_cache={})
    x_law = XLaw(design.x_levels)
    out = np.empty((len(reps), 3))
    for i, r in enumerate(reps):
        data = simulate_dgp(model, theta, design.selection, design.n, design.seed, r, x_law)
        rec = crossfit_lr(data, split_sample(data, split_seed(design.seed, r)), hyp, model,
                          design.alpha, opts)
        out[i] = (rec.log_t, rec.log_t_swap, rec.log_s)
    return out


def mc_table(design: McDesign, workers: int = 1,
             progress: Callable[[float, int], None] | None = None) -> McResult:
    """Rejection rates of the cross-fit test at each alternative h.

    Replication r uses the same random stream at every h, so the power
    curve is computed with common random numbers.
    """
    cells = []
    for h in design.h_grid:
        reps = list(range(design.reps))
        if workers > 1:
            chunks = [reps[i::workers] for i in range(workers)]
            with ProcessPoolExecutor(workers) as ex:
                parts = list(ex.map(_run_reps, [design] * workers, [h] * workers, chunks))
            out = np.empty((design.reps, 3))
            for chunk, part in zip(chunks, parts):
                out[chunk] = part
        else:
            out = _run_reps(design, h, reps)
        log_s = out[:, 2]
        reject = log_s > -math.log(design.alpha)
        cells.append(McCell(float(h), out[:, 0], out[:, 1], log_s, reject))
        if progress:
            progress(h, design.reps)
    return McResult(design, cells)


def power_curve(result_or_design, workers: int = 1) -> list[tuple[float, float]]:
    res = result_or_design if isinstance(result_or_design, McResult) else mc_table(
        result_or_design, workers)
    return [(c.h, c.power) for c in res.cells]


TABLE_COLUMNS = ("n", "criterion", "h", "power", "mc_se", "reps")


def write_table_csv(rows: list[dict], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k]) for k in TABLE_COLUMNS})


def manifest(design: McDesign, extra: dict | None = None) -> dict:
    out = {
        "version": __version__,
        "design": design.to_dict(),
        "design_hash": design.config_hash(),
    }
    if extra:
        out.update(extra)
    return out


def default_workers() -> int:
    return max(1, len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1)
