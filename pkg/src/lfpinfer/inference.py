"""Split-sample and cross-fit likelihood-ratio tests with the 1/alpha cutoff."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from .capacity import _bit_table
from .models.base import IncompleteModel
from .optim import InfeasibleError
from .solvers import feasibility_density, kl_projection, lfp_density

N_STARTS = 5
NM_MAXITER = 500
NM_TOL = 1e-6
MOMENT_SE_FLOOR = 0.01


class CovariateKind(enum.Enum):
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


class Criterion(enum.Enum):
    MOMENT = "moment"
    MLE = "mle"
    ENTRANTS = "entrants"


class Decision(enum.Enum):
    REJECT = "Reject"
    FAIL_TO_REJECT = "FailToReject"


@dataclass(frozen=True)
class Dataset:
    """Outcome indices ``y`` (n,) and covariates ``x`` (n, d), d possibly 0."""

    y: np.ndarray
    x: np.ndarray
    kind: CovariateKind = CovariateKind.DISCRETE

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.int64).ravel()
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(len(y), -1) if x.size else np.zeros((len(y), 0))
        if len(y) == 0:
            raise ValueError("dataset is empty")
        if x.shape[0] != len(y):
            raise ValueError(f"{len(y)} outcomes but {x.shape[0]} covariate rows")
        if np.any(y < 0):
            raise ValueError("outcome indices must be nonnegative")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.y[idx], self.x[idx], self.kind)

    def check_space(self, m: int) -> None:
        if np.any(self.y >= m):
            bad = int(np.argmax(self.y >= m))
            raise ValueError(f"observation {bad} has outcome index {self.y[bad]} outside 0..{m - 1}")


@dataclass(frozen=True)
class SplitPlan:
    d0: np.ndarray
    d1: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        d0 = np.asarray(self.d0, dtype=np.int64)
        d1 = np.asarray(self.d1, dtype=np.int64)
        if len(np.intersect1d(d0, d1)):
            raise ValueError("split halves overlap")
        allidx = np.sort(np.concatenate([d0, d1]))
        if not np.array_equal(allidx, np.arange(len(allidx))):
            raise ValueError("split halves must partition 0..n-1")
        object.__setattr__(self, "d0", d0)
        object.__setattr__(self, "d1", d1)

    def swapped(self) -> "SplitPlan":
        return SplitPlan(self.d1, self.d0, self.seed)


def split_sample(data: Dataset, seed: int) -> SplitPlan:
    """Seeded uniform partition with |D0| = ceil(n/2)."""
    n = data.n
    if n < 2:
        raise ValueError("need at least two observations to split")
    perm = np.random.default_rng(seed).permutation(n)
    n0 = (n + 1) // 2
    return SplitPlan(np.sort(perm[:n0]), np.sort(perm[n0:]), seed)


@dataclass(frozen=True)
class HypothesisSpec:
    """Finite grid standing for the null set plus the unrestricted search box."""

    theta0_grid: np.ndarray
    box_lo: np.ndarray
    box_hi: np.ndarray
    functional: str | None = None
    phi_star: float | None = None

    def __post_init__(self):
        grid = np.atleast_2d(np.asarray(self.theta0_grid, dtype=float))
        lo = np.asarray(self.box_lo, dtype=float).ravel()
        hi = np.asarray(self.box_hi, dtype=float).ravel()
        if grid.size == 0:
            raise ValueError("null grid is empty")
        if lo.shape != hi.shape or grid.shape[1] != lo.size:
            raise ValueError("grid and box dimensions disagree")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "theta0_grid", grid)
        object.__setattr__(self, "box_lo", lo)
        object.__setattr__(self, "box_hi", hi)


# --- cells --------------------------------------------------------------------


@dataclass(frozen=True)
class CellTable:
    """Distinct covariate values of a sample with outcome counts.

    ``counts`` are the observed outcomes at each distinct x; ``hat_counts``
    feed the nonparametric estimate of p(.|x) (identical for discrete
    covariates, nearest-neighbour counts for continuous ones).
    """

    xs: np.ndarray
    inverse: np.ndarray
    counts: np.ndarray
    hat_counts: np.ndarray

    @property
    def p_hat(self) -> np.ndarray:
        tot = self.hat_counts.sum(axis=1, keepdims=True)
        return self.hat_counts / np.maximum(tot, 1)

    def key(self) -> bytes:
        return self.xs.tobytes() + self.counts.tobytes() + self.hat_counts.tobytes()


def cell_table(data: Dataset, m: int) -> CellTable:
    data.check_space(m)
    if data.x.shape[1] == 0:
        xs = np.zeros((1, 0))
        inverse = np.zeros(data.n, dtype=np.int64)
    else:
        xs, inverse = np.unique(data.x, axis=0, return_inverse=True)
        inverse = inverse.ravel()
    counts = np.zeros((len(xs), m))
    np.add.at(counts, (inverse, data.y), 1.0)
    if data.kind is CovariateKind.DISCRETE or data.x.shape[1] == 0:
        hat = counts
    else:
        k = math.ceil(math.sqrt(data.n))
        dist = np.linalg.norm(xs[:, None, :] - data.x[None, :, :], axis=2)
        nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
        hat = np.zeros((len(xs), m))
        for c in range(len(xs)):
            np.add.at(hat[c], data.y[nearest[c]], 1.0)
    return CellTable(xs, inverse, counts, hat)


def _loglik(q: np.ndarray, counts: np.ndarray) -> float:
    """sum counts * log q with 0 log 0 = 0; -inf if an observed outcome has q = 0."""
    pos = counts > 0
    if np.any(q[pos] <= 0):
        return -np.inf
    return float(np.sum(counts[pos] * np.log(q[pos])))


# --- criteria for the unrestricted estimator ----------------------------------


def _moment_objective(cells: CellTable, model: IncompleteModel) -> Callable:
    m = model.space.m
    table = _bit_table(m).astype(float)[1:-1]  # proper nonempty events
    n_c = cells.hat_counts.sum(axis=1)
    keep = n_c > 0
    xs = cells.xs[keep]
    p_ev = (cells.hat_counts[keep] @ table.T) / n_c[keep, None]
    s_hat = np.sqrt(p_ev * (1 - p_ev) / n_c[keep, None]) + MOMENT_SE_FLOOR

    def q1(theta):
        nu = model.capacity_values(theta, xs)[:, 1:-1]
        return float(np.max(np.maximum(nu - p_ev, 0.0) / s_hat, initial=0.0))

    return q1


def project_densities(theta, model: IncompleteModel, xs, p_hat) -> np.ndarray:
    """KL projection of p_hat(.|x) onto the core of nu_theta(.|x), per row of xs."""
    q = model.closed_form_projection(theta, xs, p_hat)
    if q is not None:
        return q
    return np.array([kl_projection(ph, model.capacity(theta, x))[0] for x, ph in zip(xs, p_hat)])


def _mle_objective(cells: CellTable, model: IncompleteModel) -> Callable:
    p_hat = cells.p_hat
    pos = cells.counts > 0
    weights = cells.counts[pos]

    def neg(theta):
        q = project_densities(theta, model, cells.xs, p_hat)[pos]
        if q.min() <= 0:
            return np.inf
        return -float(weights @ np.log(q))

    return neg


def _entrants_objective(cells: CellTable, model: IncompleteModel) -> Callable:
    if not hasattr(model, "entrant_probs"):
        raise ValueError("the entrants criterion needs the entry-game model")
    # W = number of entrants: 00 -> 0, 01/10 -> 1, 11 -> 2
    w_counts = np.stack([cells.counts[:, 0], cells.counts[:, 1] + cells.counts[:, 2],
                         cells.counts[:, 3]], axis=1)

    def neg(theta):
        return -_loglik(model.entrant_probs(theta, cells.xs), w_counts)

    return neg


def moment_criterion(theta, data: Dataset | CellTable, model: IncompleteModel) -> float:
    """Largest studentized violation sup_{A,x} (nu(A|x) - P_hat(A|x))_+ / s_hat."""
    cells = data if isinstance(data, CellTable) else cell_table(data, model.space.m)
    return _moment_objective(cells, model)(theta)


def neg_loglik_criterion(theta, data: Dataset | CellTable, model: IncompleteModel) -> float:
    """-sum_i log of the KL-projected cell frequencies at (Y_i, X_i)."""
    cells = data if isinstance(data, CellTable) else cell_table(data, model.space.m)
    return _mle_objective(cells, model)(theta)


def criterion_function(kind: Criterion, cells: CellTable, model: IncompleteModel) -> Callable:
    """Objective to be minimized for the chosen estimator."""
    kind = Criterion(kind)
    if kind is Criterion.MOMENT:
        return _moment_objective(cells, model)
    if kind is Criterion.MLE:
        return _mle_objective(cells, model)
    return _entrants_objective(cells, model)


@dataclass(frozen=True)
class Estimate:
    theta: np.ndarray
    value: float
    non_identified: bool
    start_values: tuple[float, ...] = ()


def latin_starts(lo, hi, n_starts: int = N_STARTS, seed: int = 0) -> np.ndarray:
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    u = qmc.LatinHypercube(d=len(lo), seed=seed).random(n_starts)
    return lo + u * (hi - lo)


def minimize_over_box(fun: Callable, lo, hi, seed: int = 0) -> Estimate:
    """Multistart Nelder-Mead over a box; the first start attaining the best value wins."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    free = hi > lo
    if not np.any(free):
        return Estimate(lo.copy(), float(fun(lo)), False, ())
    base = lo.copy()

    def full(z):
        t = base.copy()
        t[free] = z
        return t

    def f(z):
        # Nelder-Mead keeps iterates inside the bounds itself
        val = fun(full(z))
        return val if np.isfinite(val) else 1e300

    starts = latin_starts(lo[free], hi[free], N_STARTS, seed)
    results = []
    for z0 in starts:
        r = minimize(f, z0, method="Nelder-Mead", bounds=list(zip(lo[free], hi[free])),
                     options={"maxiter": NM_MAXITER, "xatol": NM_TOL, "fatol": NM_TOL})
        z = np.clip(r.x, lo[free], hi[free])
        results.append((float(fun(full(z))), z))
    values = np.array([v for v, _ in results])
    best = int(np.argmin(values))  # argmin returns the first index on ties
    ties = [z for v, z in results if abs(v - values[best]) <= NM_TOL]
    spread = max(float(np.max(np.abs(z - results[best][1]))) for z in ties)
    return Estimate(full(results[best][1]), float(values[best]), spread > 1e-3,
                    tuple(float(v) for v in values))


def unrestricted_estimate(data: Dataset | CellTable, criterion, model: IncompleteModel,
                          box_lo, box_hi, seed: int = 0) -> Estimate:
    """Extremum estimator on one half of the sample; Entrants maximizes its likelihood."""
    cells = data if isinstance(data, CellTable) else cell_table(data, model.space.m)
    return minimize_over_box(criterion_function(criterion, cells, model), box_lo, box_hi, seed)


def entrants_estimator(data: Dataset | CellTable, model: IncompleteModel, box_lo, box_hi,
                       seed: int = 0) -> np.ndarray:
    return unrestricted_estimate(data, Criterion.ENTRANTS, model, box_lo, box_hi, seed).theta


# --- tailor-made likelihood -----------------------------------------------------


def representative_density(theta, model: IncompleteModel, xs) -> np.ndarray:
    """Strictly positive core element of nu_theta(.|x) per row of xs.

    Outcomes that no selection can produce at some x get probability 0 there.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    p = model.closed_form_feasibility(theta, xs)
    if p is not None:
        return p
    out = []
    for x in xs:
        cap = model.capacity(theta, x)
        try:
            out.append(feasibility_density(cap))
        except InfeasibleError:
            out.append(feasibility_density(cap, drop_null=True))
    return np.array(out)


def lfp_densities(theta, model: IncompleteModel, xs, p, method: str = "auto") -> np.ndarray:
    """LFP-based densities q_theta(.|x) for each row of xs against p(.|x)."""
    if method not in ("auto", "closed_form", "solver"):
        raise ValueError(f"unknown lfp method {method!r}")
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if method != "solver":
        q = model.closed_form_lfp(theta, xs, p)
        if q is not None:
            return q
        if method == "closed_form":
            raise ValueError(f"{model.name} has no closed-form LFP density")
    return np.array([lfp_density(model.capacity(theta, x), pp)[0] for x, pp in zip(xs, p)])


def tailor_made_loglik(theta, cells: CellTable, p: np.ndarray, model: IncompleteModel,
                       lfp_method: str = "auto") -> float:
    """sum_{i in D0} log q_theta(Y_i|X_i); -inf when an observed outcome has density 0."""
    return _loglik(lfp_densities(theta, model, cells.xs, p, lfp_method), cells.counts)


def restricted_mle(grid, cells: CellTable, p: np.ndarray, model: IncompleteModel,
                   lfp_method: str = "auto") -> tuple[np.ndarray, float, int]:
    """Grid argmax of the tailor-made likelihood; ties go to the lowest index."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if len(grid) == 0:
        raise ValueError("null grid is empty")
    lls = np.array([tailor_made_loglik(t, cells, p, model, lfp_method) for t in grid])
    best = int(np.argmax(lls))  # first maximal entry; all -inf gives index 0
    return grid[best], float(lls[best]), best


# --- statistics -----------------------------------------------------------------


@dataclass(frozen=True)
class SplitResult:
    log_t: float
    theta_hat1: np.ndarray
    theta_hat0: np.ndarray
    loglik1: float
    loglik0: float
    non_identified: bool
    trace1: np.ndarray = field(repr=False, default=None)
    trace0: np.ndarray = field(repr=False, default=None)


def _log_ratio(l1: float, l0: float) -> float:
    if l0 == -np.inf:
        return np.inf
    return l1 - l0


@dataclass
class PipelineOptions:
    criterion: Criterion = Criterion.MLE
    lfp_method: str = "auto"
    estimator_seed: int = 0
    # optional memo for theta_hat1 keyed by the estimation half's cell table
    estimate_cache: dict | None = None


def _estimate(cells: CellTable, model, hyp: HypothesisSpec, opts: PipelineOptions) -> Estimate:
    cache = opts.estimate_cache
    key = (Criterion(opts.criterion), cells.key()) if cache is not None else None
    if cache is not None and key in cache:
        return cache[key]
    est = unrestricted_estimate(cells, opts.criterion, model, hyp.box_lo, hyp.box_hi,
                                opts.estimator_seed)
    if cache is not None:
        cache[key] = est
    return est


def _evaluate(cells0: CellTable, est: Estimate, grid, model, opts: PipelineOptions) -> SplitResult:
    p = representative_density(est.theta, model, cells0.xs)
    q1 = lfp_densities(est.theta, model, cells0.xs, p, opts.lfp_method)
    l1 = _loglik(q1, cells0.counts)
    theta0, l0, _ = restricted_mle(grid, cells0, p, model, opts.lfp_method)
    return SplitResult(_log_ratio(l1, l0), est.theta, theta0, l1, l0, est.non_identified,
                       q1, lfp_densities(theta0, model, cells0.xs, p, opts.lfp_method))


def split_lr(data: Dataset, plan: SplitPlan, hyp: HypothesisSpec, model: IncompleteModel,
             opts: PipelineOptions | None = None) -> SplitResult:
    """log T_n: theta_hat1 from D1, likelihood ratio evaluated on D0."""
    opts = opts or PipelineOptions()
    m = model.space.m
    cells0 = cell_table(data.subset(plan.d0), m)
    cells1 = cell_table(data.subset(plan.d1), m)
    est = _estimate(cells1, model, hyp, opts)
    res = _evaluate(cells0, est, hyp.theta0_grid, model, opts)
    # per-observation traces log q(Y_i|X_i) on D0, in D0 order
    y0 = data.y[plan.d0]
    with np.errstate(divide="ignore"):
        t1 = np.log(res.trace1[cells0.inverse, y0])
        t0 = np.log(res.trace0[cells0.inverse, y0])
    return SplitResult(res.log_t, res.theta_hat1, res.theta_hat0, res.loglik1, res.loglik0,
                       res.non_identified, t1, t0)


@dataclass(frozen=True)
class TestRecord:
    split: SplitPlan
    alpha: float
    log_t: float
    log_t_swap: float
    forward: SplitResult
    backward: SplitResult

    @property
    def log_s(self) -> float:
        return float(np.logaddexp(self.log_t, self.log_t_swap) - math.log(2.0))

    @staticmethod
    def _exp(v: float) -> float:
        with np.errstate(over="ignore"):
            return float(np.exp(v))

    @property
    def t_n(self) -> float:
        return self._exp(self.log_t)

    @property
    def t_n_swap(self) -> float:
        return self._exp(self.log_t_swap)

    @property
    def s_n(self) -> float:
        return self._exp(self.log_s)

    @property
    def decision(self) -> Decision:
        return decide(self.log_s, self.alpha)

    def to_dict(self) -> dict:
        def num(v):
            return v if np.isfinite(v) else ("inf" if v > 0 else "-inf")

        return {
            "S_n": num(self.s_n),
            "T_n": num(self.t_n),
            "T_n_swap": num(self.t_n_swap),
            "log_S_n": num(self.log_s),
            "log_T_n": num(self.log_t),
            "log_T_n_swap": num(self.log_t_swap),
            "alpha": self.alpha,
            "decision": self.decision.value,
            "threshold": 1.0 / self.alpha,
            "theta_hat1": self.forward.theta_hat1.tolist(),
            "theta_hat1_swap": self.backward.theta_hat1.tolist(),
            "theta_hat0": self.forward.theta_hat0.tolist(),
            "theta_hat0_swap": self.backward.theta_hat0.tolist(),
            "split_seed": self.split.seed,
            "d0": self.split.d0.tolist(),
            "d1": self.split.d1.tolist(),
        }


def decide(log_s: float, alpha: float) -> Decision:
    """Reject iff S_n > 1/alpha, compared on the log scale."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return Decision.REJECT if log_s > -math.log(alpha) else Decision.FAIL_TO_REJECT


def crossfit_lr(data: Dataset, plan: SplitPlan, hyp: HypothesisSpec, model: IncompleteModel,
                alpha: float = 0.05, opts: PipelineOptions | None = None) -> TestRecord:
    """S_n = (T_n + T_n^swap) / 2 with the roles of the halves exchanged for T_n^swap."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    fwd = split_lr(data, plan, hyp, model, opts)
    bwd = split_lr(data, plan.swapped(), hyp, model, opts)
    return TestRecord(plan, alpha, fwd.log_t, bwd.log_t, fwd, bwd)


# --- confidence sets --------------------------------------------------------------


@dataclass(frozen=True)
class ConfidenceSetRow:
    phi: float
    log_s: float
    retained: bool
    n_null_points: int


@dataclass(frozen=True)
class ConfidenceSetResult:
    rows: tuple[ConfidenceSetRow, ...]
    skipped: tuple[float, ...]
    alpha: float
    split: SplitPlan

    @property
    def retained(self) -> list[float]:
        return [r.phi for r in self.rows if r.retained]


def confidence_set(data: Dataset, model: IncompleteModel, functional: Callable,
                   phi_grid: Sequence[float], nuisance_grid, box_lo, box_hi,
                   alpha: float = 0.05, seed: int = 0, tol: float = 1e-9,
                   opts: PipelineOptions | None = None) -> ConfidenceSetResult:
    """Invert the cross-fit test over phi*; one split plan is shared by every phi*.

    The null set for phi* is {theta in nuisance_grid : |phi(theta) - phi*| <= tol}.
    """
    phi_grid = np.asarray(phi_grid, dtype=float).ravel()
    if phi_grid.size == 0:
        raise ValueError("empty grid of functional values")
    grid = np.atleast_2d(np.asarray(nuisance_grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty nuisance grid")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    opts = opts or PipelineOptions()
    plan = split_sample(data, seed)
    m = model.space.m
    halves = []
    for a, b in ((plan.d0, plan.d1), (plan.d1, plan.d0)):
        cells_eval = cell_table(data.subset(a), m)
        cells_est = cell_table(data.subset(b), m)
        hyp = HypothesisSpec(grid[:1], box_lo, box_hi)
        est = _estimate(cells_est, model, hyp, opts)
        p = representative_density(est.theta, model, cells_eval.xs)
        l1 = tailor_made_loglik(est.theta, cells_eval, p, model, opts.lfp_method)
        halves.append((cells_eval, p, l1))
    phis = np.array([functional(t) for t in grid])
    rows, skipped = [], []
    for phi in phi_grid:
        sub = grid[np.abs(phis - phi) <= tol]
        if len(sub) == 0:
            skipped.append(float(phi))
            continue
        logs = []
        for cells_eval, p, l1 in halves:
            _, l0, _ = restricted_mle(sub, cells_eval, p, model, opts.lfp_method)
            logs.append(_log_ratio(l1, l0))
        log_s = float(np.logaddexp(*logs) - math.log(2.0))
        rows.append(ConfidenceSetRow(float(phi), log_s,
                                     decide(log_s, alpha) is Decision.FAIL_TO_REJECT, len(sub)))
    return ConfidenceSetResult(tuple(rows), tuple(skipped), alpha, plan)
