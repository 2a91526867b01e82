"""Convex programs over cores of belief functions.

The generic routines take a :class:`~lfpinfer.capacity.Capacity` and impose
every proper nonempty subset constraint.  The entry-game closed form is kept
here too; it is the oracle for the generic solver on that model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .capacity import Capacity, _bit_table, conjugate, tight_sets
from .optim import (
    InfeasibleError,
    SolveReport,
    Status,
    barrier_newton,
    lp_solve,
)

TIGHT_TOL = 1e-10


@dataclass(frozen=True)
class CoreGeometry:
    """Constraint data of a core with implied equalities split out."""

    capacity: Capacity
    support: np.ndarray  # outcomes with positive plausibility
    blocks: tuple[int, ...]  # partition of the outcome space into tight atoms
    block_values: np.ndarray
    ineq_masks: np.ndarray  # proper subsets whose constraint is not implied-tight

    @property
    def m(self) -> int:
        return self.capacity.m

    def equalities(self) -> tuple[np.ndarray, np.ndarray]:
        table = _bit_table(self.m)
        return table[list(self.blocks)].astype(float), self.block_values

    def inequalities(self) -> tuple[np.ndarray, np.ndarray]:
        """Rows for Q(A) >= nu(A) on non-tight A plus q_y >= 0 on the support."""
        table = _bit_table(self.m)
        rows = [table[self.ineq_masks].astype(float), np.eye(self.m)[self.support]]
        rhs = [self.capacity.values[self.ineq_masks], np.zeros(len(self.support))]
        return np.vstack(rows), np.concatenate(rhs)


def core_geometry(c: Capacity, tol: float = TIGHT_TOL) -> CoreGeometry:
    m = c.m
    full = c.space.full
    tight = set(int(a) for a in tight_sets(c, tol)) | {full}
    blocks = []
    for y in range(m):
        b = full
        for a in tight:
            if a >> y & 1:
                b &= a
        if b not in blocks:
            blocks.append(b)
    covered = 0
    for b in blocks:
        if covered & b:
            raise InfeasibleError("tight sets of the capacity do not form a partition")
        covered |= b
    values = np.array([c.values[b] for b in blocks])
    if values.sum() <= 0:
        raise InfeasibleError("capacity assigns no mass to its tight blocks")
    values = values / values.sum()
    plaus = conjugate(c).singletons()
    support = np.nonzero(plaus > tol)[0]
    ineq = np.array(sorted(a for a in range(1, full) if a not in tight), dtype=np.int64)
    return CoreGeometry(c, support, tuple(blocks), values, ineq)


def _interior_point(geo: CoreGeometry) -> np.ndarray:
    """Point of the core maximizing the smallest slack of every non-implied constraint."""
    m = geo.m
    g, h = geo.inequalities()
    a_eq, b_eq = geo.equalities()
    n_rows = len(g)
    # variables (q, t); maximize t s.t. g q - t >= h
    a_ub = np.hstack([-g, np.ones((n_rows, 1))])
    a_eq2 = np.hstack([a_eq, np.zeros((len(a_eq), 1))])
    c = np.zeros(m + 1)
    c[-1] = 1.0
    bounds = [(0.0, None)] * m + [(None, 1.0)]
    x, _ = lp_solve(c, a_ub=a_ub, b_ub=-h, a_eq=a_eq2, b_eq=b_eq, bounds=bounds, maximize=True)
    if n_rows and x[-1] <= 1e-13:
        raise InfeasibleError("core has no relative interior; capacity is not 2-monotone?")
    q = np.clip(x[:m], 0.0, None)
    zero = np.setdiff1d(np.arange(m), geo.support)
    q[zero] = 0.0
    return q


def _core_lp_rows(c: Capacity):
    table = _bit_table(c.m)[1:-1].astype(float)
    return -table, -np.asarray(c.values[1:-1])


def max_min_slack(c: Capacity, floor_outcomes=None) -> tuple[np.ndarray, float]:
    """LP ``max eps`` s.t. core constraints and ``p_y >= eps`` on ``floor_outcomes``."""
    m = c.m
    floor = np.arange(m) if floor_outcomes is None else np.asarray(floor_outcomes)
    a_core, b_core = _core_lp_rows(c)
    a_floor = np.zeros((len(floor), m + 1))
    a_floor[np.arange(len(floor)), floor] = -1.0
    a_floor[:, -1] = 1.0
    a_ub = np.vstack([np.hstack([a_core, np.zeros((len(a_core), 1))]), a_floor])
    b_ub = np.concatenate([b_core, np.zeros(len(floor))])
    obj = np.zeros(m + 1)
    obj[-1] = 1.0
    bounds = [(0.0, None)] * m + [(None, 1.0)]
    x, _ = lp_solve(obj, a_ub=a_ub, b_ub=b_ub, a_eq=np.r_[np.ones(m), 0.0][None], b_eq=[1.0],
                    bounds=bounds, maximize=True)
    return x[:m], float(x[-1])


def feasibility_density(c: Capacity, drop_null: bool = False) -> np.ndarray:
    """Strictly positive core element chosen by max-min slack.

    The max-min LP generally has many maximizers, so the floor is raised
    lexicographically (leximin): outcomes whose floor cannot be raised are
    frozen and the LP is re-solved for the rest.  The result is unique.

    With ``drop_null`` outcomes of zero plausibility get probability zero
    instead of raising InfeasibleError.
    """
    m = c.m
    plaus = conjugate(c).singletons()
    support = np.arange(m)
    if drop_null:
        support = np.nonzero(plaus > TIGHT_TOL)[0]
    a_core, b_core = _core_lp_rows(c)
    levels = np.zeros(m)
    free = list(support)
    frozen: list[int] = []
    first = True
    while free:
        # raise a common floor t on the free outcomes; frozen ones keep their level
        n_var = m + 1
        rows = [np.hstack([a_core, np.zeros((len(a_core), 1))])]
        rhs = [b_core]
        for y in free:
            r = np.zeros(n_var)
            r[y], r[-1] = -1.0, 1.0
            rows.append(r[None])
            rhs.append([0.0])
        for y in frozen:
            r = np.zeros(n_var)
            r[y] = -1.0
            rows.append(r[None])
            rhs.append([-(levels[y] - 1e-12)])
        a_ub, b_ub = np.vstack(rows), np.concatenate(rhs)
        a_eq = np.r_[np.ones(m), 0.0][None]
        obj = np.zeros(n_var)
        obj[-1] = 1.0
        bounds = [(0.0, None)] * m + [(None, 1.0)]
        x, _ = lp_solve(obj, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=[1.0], bounds=bounds,
                        maximize=True)
        t = float(x[-1])
        if first and t <= 1e-12:
            raise InfeasibleError(
                "no strictly positive core element: some outcome has zero plausibility"
            )
        first = False
        if len(free) == 1:
            levels[free[0]] = t
            break
        blocked = []
        for y in free:
            r_floor = a_ub.copy()
            b_floor = b_ub.copy()
            # fix the common floor at t
            r_floor[:, -1] = 0.0
            for i, yy in enumerate(free):
                b_floor[len(a_core) + i] = -(t - 1e-12)
            obj_y = np.zeros(n_var)
            obj_y[y] = 1.0
            xy, _ = lp_solve(obj_y, a_ub=r_floor, b_ub=b_floor, a_eq=a_eq, b_eq=[1.0],
                             bounds=bounds, maximize=True)
            if xy[y] <= t + 1e-9:
                blocked.append(y)
        if not blocked:
            blocked = [free[int(np.argmin(x[free]))]]
        for y in blocked:
            levels[y] = t
            free.remove(y)
            frozen.append(y)
    levels = np.clip(levels, 0.0, None)
    return levels / levels.sum()


def _lfp_objective(p: np.ndarray, support: np.ndarray):
    p = np.asarray(p, dtype=float)

    def f(q):
        qs, ps = q[support], p[support]
        if np.any(qs <= 0):
            return np.inf, None, None
        r = ps / qs
        val = float(np.sum((qs + ps) * np.log1p(r)))
        grad = np.zeros_like(q)
        grad[support] = np.log1p(r) - r
        hess = np.zeros((len(q), len(q)))
        hess[support, support] = ps**2 / (qs**2 * (qs + ps))
        return val, grad, hess

    return f


def _kl_objective(p_hat: np.ndarray, support: np.ndarray):
    w = np.asarray(p_hat, dtype=float)
    pos = support[w[support] > 0]

    def f(q):
        qs = q[pos]
        if np.any(qs <= 0):
            return np.inf, None, None
        val = float(np.sum(w[pos] * (np.log(w[pos]) - np.log(qs))))
        grad = np.zeros_like(q)
        grad[pos] = -w[pos] / qs
        hess = np.zeros((len(q), len(q)))
        hess[pos, pos] = w[pos] / qs**2
        return val, grad, hess

    return f


def _solve_over_core(objective, geo: CoreGeometry) -> tuple[np.ndarray, SolveReport]:
    g, h = geo.inequalities()
    a_eq, b_eq = geo.equalities()
    start = _interior_point(geo)
    q, report = barrier_newton(objective, g, h, start, a_eq, b_eq)
    q = np.clip(q, 0.0, None)
    q[np.setdiff1d(np.arange(geo.m), geo.support)] = 0.0
    return q, report


def lfp_density(c_theta: Capacity, p) -> tuple[np.ndarray, SolveReport]:
    """Least-favorable core element of ``c_theta`` against the density ``p``.

    Minimizes sum_y (q_y + p_y) log((q_y + p_y) / q_y) over the core; terms
    for outcomes outside the support of ``c_theta`` are left out.
    """
    p = np.asarray(p, dtype=float)
    if p.shape != (c_theta.m,) or np.any(p < 0):
        raise ValueError("p must be a nonnegative vector over the outcome space")
    geo = core_geometry(c_theta)
    q, report = _solve_over_core(_lfp_objective(p, geo.support), geo)
    return q, report


def kl_projection(p_hat, c_theta: Capacity) -> tuple[np.ndarray, SolveReport]:
    """argmin_q sum_y p_hat_y log(p_hat_y / q_y) over the core of ``c_theta``.

    If ``p_hat`` charges an outcome of zero plausibility the divergence is
    infinite; the returned density then minimizes the remaining terms and the
    report's objective is ``inf``.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    if p_hat.shape != (c_theta.m,) or np.any(p_hat < 0):
        raise ValueError("p_hat must be a nonnegative vector over the outcome space")
    geo = core_geometry(c_theta)
    q, report = _solve_over_core(_kl_objective(p_hat, geo.support), geo)
    outside = np.setdiff1d(np.arange(c_theta.m), geo.support)
    if np.any(p_hat[outside] > 0):
        report = SolveReport(np.inf, report.kkt_residual, report.iterations, report.status,
                             report.history)
    return q, report


def lfp_pair(c0: Capacity, c1: Capacity) -> tuple[np.ndarray, np.ndarray, SolveReport]:
    """Jointly least-favorable pair (q0, q1), each in its own core."""
    if c0.space != c1.space:
        raise ValueError("capacities live on different outcome spaces")
    m = c0.m
    geo0, geo1 = core_geometry(c0), core_geometry(c1)
    s0 = geo0.support

    def f(z):
        q0, q1 = z[:m], z[m:]
        a, b = q0[s0], q1[s0]
        if np.any(a <= 0) or np.any(b < 0):
            return np.inf, None, None
        s = a + b
        val = float(np.sum(s * (np.log(s) - np.log(a))))
        grad = np.zeros(2 * m)
        grad[s0] = np.log(s) - np.log(a) + 1.0 - s / a
        grad[m + s0] = np.log(s) - np.log(a) + 1.0
        hess = np.zeros((2 * m, 2 * m))
        i0, i1 = s0, m + s0
        hess[i0, i0] = 1.0 / s - 2.0 / a + s / a**2
        hess[i1, i1] = 1.0 / s
        hess[i0, i1] = hess[i1, i0] = 1.0 / s - 1.0 / a
        return val, grad, hess

    g0, h0 = geo0.inequalities()
    g1, h1 = geo1.inequalities()
    g = np.block([[g0, np.zeros((len(g0), m))], [np.zeros((len(g1), m)), g1]])
    h = np.concatenate([h0, h1])
    e0, b0 = geo0.equalities()
    e1, b1 = geo1.equalities()
    a_eq = np.block([[e0, np.zeros((len(e0), m))], [np.zeros((len(e1), m)), e1]])
    b_eq = np.concatenate([b0, b1])
    outside = np.setdiff1d(np.arange(m), s0)
    start = np.concatenate([_interior_point(geo0), _interior_point(geo1)])
    z, report = barrier_newton(f, g, h, start, a_eq, b_eq)
    z = np.clip(z, 0.0, None)
    q0, q1 = z[:m].copy(), z[m:].copy()
    q0[outside] = 0.0
    q1[np.setdiff1d(np.arange(m), geo1.support)] = 0.0
    if np.any(q1[outside] > 1e-12):
        report = SolveReport(np.inf, report.kkt_residual, report.iterations, report.status,
                             report.history)
    return q0, q1, report


# --- entry game closed form -------------------------------------------------


@dataclass(frozen=True)
class GameEtas:
    """Bracket for P((1,0)) in the two-player entry game.

    eta1: mass on {(0,1),(1,0)}; eta2/eta3: upper/lower bound on P((1,0)).
    """

    eta1: float
    eta2: float
    eta3: float

    def __post_init__(self):
        tol = 1e-12
        if not (-tol <= self.eta3 <= self.eta2 + tol <= self.eta1 + 2 * tol <= 1 + 3 * tol):
            raise ValueError(f"need 0 <= eta3 <= eta2 <= eta1 <= 1, got {self}")

    @classmethod
    def from_masses(cls, masses) -> "GameEtas":
        """From (f00, f01, f10, f11, f_multi) region probabilities."""
        f00, f01, f10, f11, fm = masses
        return cls(1.0 - f00 - f11, f10 + fm, f10)


def entry_game_regime(etas: GameEtas, p_rel: float) -> int:
    """Which branch of the closed form applies (1 interior, 2 upper, 3 lower)."""
    z = p_rel * etas.eta1
    if etas.eta3 <= z <= etas.eta2:
        return 1
    return 2 if z > etas.eta2 else 3


def entry_game_lfp(etas: GameEtas, p, f00: float, f11: float) -> np.ndarray:
    """Closed-form least-favorable density of the entry game.

    Outcomes are ordered (0,0), (0,1), (1,0), (1,1).
    """
    p = np.asarray(p, dtype=float)
    if abs(f00 + f11 + etas.eta1 - 1.0) > 1e-9:
        raise ValueError("f00 + f11 + eta1 must equal 1")
    if p.shape != (4,) or p[1] <= 0 or p[2] <= 0:
        raise ValueError("p must be positive on (0,1) and (1,0)")
    p_rel = p[2] / (p[1] + p[2])
    regime = entry_game_regime(etas, p_rel)
    q10 = {1: p_rel * etas.eta1, 2: etas.eta2, 3: etas.eta3}[regime]
    return np.array([f00, etas.eta1 - q10, q10, f11])


__all__ = [
    "CoreGeometry",
    "GameEtas",
    "InfeasibleError",
    "SolveReport",
    "Status",
    "core_geometry",
    "entry_game_lfp",
    "entry_game_regime",
    "feasibility_density",
    "kl_projection",
    "lfp_density",
    "lfp_pair",
    "max_min_slack",
]
