"""Small dense LP and log-barrier Newton machinery.

Problems here have at most a few hundred constraints and a handful of
variables, so everything is dense.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg
from scipy.optimize import linprog, nnls


class Status(enum.Enum):
    CONVERGED = "Converged"
    MAX_ITER = "MaxIter"
    INFEASIBLE = "Infeasible"


@dataclass(frozen=True)
class SolveReport:
    objective: float
    kkt_residual: float
    iterations: int
    status: Status
    history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


class SolverError(RuntimeError):
    def __init__(self, message: str, report: SolveReport | None = None):
        super().__init__(message)
        self.report = report


class InfeasibleError(SolverError):
    pass


# cores can be thinner than HiGHS's default 1e-7 feasibility tolerance
LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def lp_solve(
    c, a_ub=None, b_ub=None, a_eq=None, b_eq=None, bounds=(0.0, None), maximize: bool = False
) -> tuple[np.ndarray, SolveReport]:
    """Solve ``min c@x`` (or max) subject to ``a_ub@x <= b_ub``, ``a_eq@x == b_eq``.

    Raises InfeasibleError when the feasible set is empty.
    """
    c = np.asarray(c, dtype=float)
    sign = -1.0 if maximize else 1.0
    res = linprog(
        sign * c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs",
        options=LP_OPTIONS,
    )
    if res.status == 2:
        report = SolveReport(np.nan, np.inf, int(res.nit), Status.INFEASIBLE)
        raise InfeasibleError("linear program is infeasible", report)
    if res.status == 1:
        report = SolveReport(np.nan, np.inf, int(res.nit), Status.MAX_ITER)
        raise SolverError("linear program hit its iteration limit", report)
    if res.status != 0:
        raise SolverError(f"linear program failed: {res.message}")
    x = np.asarray(res.x, dtype=float)
    return x, SolveReport(float(c @ x), 0.0, int(res.nit), Status.CONVERGED)


# objective(x) -> (value, gradient, hessian); value may be +inf outside the domain
Objective = Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]]

MU_SCHEDULE = tuple(10.0 ** -k for k in range(11))  # 1 ... 1e-10


def _newton_direction(h: np.ndarray, g: np.ndarray) -> np.ndarray:
    try:
        d = -np.linalg.solve(h, g)
        if np.all(np.isfinite(d)):
            return d
    except (np.linalg.LinAlgError, ValueError):
        pass
    return -np.linalg.lstsq(h, g, rcond=None)[0]


def _affine_parametrization(a_eq, b_eq, x_start):
    n = len(x_start)
    if a_eq is None or len(a_eq) == 0:
        return np.eye(n), np.array(x_start, dtype=float)
    a_eq = np.atleast_2d(np.asarray(a_eq, dtype=float))
    b_eq = np.asarray(b_eq, dtype=float)
    z = scipy.linalg.null_space(a_eq, rcond=1e-10)
    # move the start onto the affine set (it should already be there)
    x0 = x_start - np.linalg.lstsq(a_eq, a_eq @ x_start - b_eq, rcond=None)[0]
    return z, x0


def barrier_newton(
    objective: Objective,
    g_ineq: np.ndarray,
    h_ineq: np.ndarray,
    x_start: np.ndarray,
    a_eq: np.ndarray | None = None,
    b_eq: np.ndarray | None = None,
    *,
    mu_schedule=MU_SCHEDULE,
    max_inner: int = 100,
    armijo: float = 1e-4,
    polish: bool = True,
) -> tuple[np.ndarray, SolveReport]:
    """Minimize a smooth convex objective over ``{x: g_ineq@x >= h_ineq, a_eq@x == b_eq}``.

    ``x_start`` must satisfy the equalities and every inequality strictly.
    Runs a log-barrier path with Newton inner steps and Armijo backtracking,
    then tries an active-set polish of the final iterate.
    """
    g_ineq = np.atleast_2d(np.asarray(g_ineq, dtype=float))
    h_ineq = np.asarray(h_ineq, dtype=float)
    zb, x = _affine_parametrization(a_eq, b_eq, np.asarray(x_start, dtype=float))
    gz = g_ineq @ zb if len(g_ineq) else np.zeros((0, zb.shape[1]))
    live = np.linalg.norm(gz, axis=1) > 1e-12 if len(gz) else np.zeros(0, bool)
    const_slack = g_ineq[~live] @ x - h_ineq[~live] if len(g_ineq) else np.zeros(0)
    if np.any(const_slack < -1e-9):
        report = SolveReport(np.nan, np.inf, 0, Status.INFEASIBLE)
        raise InfeasibleError("inequalities inconsistent with the equality constraints", report)
    g_live, h_live = g_ineq[live], h_ineq[live]

    def slack(xx):
        return g_live @ xx - h_live

    s = slack(x)
    if np.any(s <= 0):
        raise ValueError("barrier start is not strictly feasible")
    value0 = objective(x)[0]
    if not np.isfinite(value0):
        raise ValueError("barrier start is outside the objective's domain")

    if zb.shape[1] == 0:
        val = objective(x)[0]
        return x, SolveReport(float(val), 0.0, 0, Status.CONVERGED, (float(val),))

    history = []
    iterations = 0
    status = Status.CONVERGED
    gs = g_live @ zb
    cur = objective(x)
    polished = None
    mu = mu_schedule[0]
    for mu in mu_schedule:
        # centering only needs to be rough until the last barrier weights
        inner_tol = max(1e-15, 1e-3 * mu)
        for _ in range(max_inner):
            iterations += 1
            val, grad, hess = cur
            s = slack(x)
            inv_s = 1.0 / s
            fval = val - mu * np.sum(np.log(s))
            gvec = zb.T @ (grad - g_live.T @ (mu * inv_s))
            hmat = zb.T @ hess @ zb + gs.T @ ((mu * inv_s**2)[:, None] * gs)
            d = _newton_direction(hmat, gvec)
            decrement = -float(gvec @ d)
            if decrement < 0:
                d = -gvec
                decrement = float(gvec @ gvec)
            if decrement / 2 <= inner_tol:
                break
            dx = zb @ d
            # first trial step stops short of the nearest inequality boundary
            ds = g_live @ dx
            shrink = ds < 0
            t = min(1.0, 0.99 * float(np.min(-s[shrink] / ds[shrink]))) if np.any(shrink) else 1.0
            for _ in range(80):
                xn = x + t * dx
                sn = slack(xn)
                if np.all(sn > 0):
                    trial = objective(xn)
                    if np.isfinite(trial[0]):
                        fn = trial[0] - mu * np.sum(np.log(sn))
                        if fn <= fval - armijo * t * decrement:
                            break
                t *= 0.5
            else:
                break
            x, cur = xn, trial
        else:
            status = Status.MAX_ITER
        history.append(float(cur[0]))
        if polish and mu <= 1e-3:
            s = slack(x)
            polished = _active_set_polish(objective, g_live, h_live, a_eq, b_eq, x, s, mu / s, mu)
            if polished is not None and polished[1] <= 1e-10 and objective(polished[0])[0] <= cur[0] + 1e-12:
                break
            polished = None

    val, grad, _ = cur
    s = slack(x)
    lam = mu / s
    stat = zb.T @ (grad - g_live.T @ lam)
    kkt = max(float(np.max(np.abs(stat), initial=0.0)), float(np.max(lam * s, initial=0.0)))

    if polish:
        if polished is None:
            polished = _active_set_polish(objective, g_live, h_live, a_eq, b_eq, x, s, lam, mu)
        if polished is not None:
            xp, kkt_p = polished
            vp = objective(xp)[0]
            if vp <= val + 1e-12 and kkt_p <= kkt:
                x, val, kkt = xp, vp, kkt_p
                history.append(float(vp))
    if status is Status.CONVERGED and kkt > 1e-8:
        status = Status.MAX_ITER
    return x, SolveReport(float(val), float(kkt), iterations, status, tuple(history))


def _active_set_polish(objective, g_live, h_live, a_eq, b_eq, x, s, lam, mu):
    """Solve the equality problem on the apparent active set; None if it fails."""
    active = s < np.sqrt(mu) if mu > 0 else s <= 0
    rows, rhs = [], []
    if a_eq is not None and len(a_eq):
        rows.append(np.atleast_2d(a_eq))
        rhs.append(np.asarray(b_eq, dtype=float))
    if np.any(active):
        rows.append(g_live[active])
        rhs.append(h_live[active])
    if not rows:
        return None
    mat = np.vstack(rows)
    r = np.concatenate(rhs)
    xp = x - np.linalg.lstsq(mat, mat @ x - r, rcond=None)[0]
    zb = scipy.linalg.null_space(mat, rcond=1e-10)
    if not np.isfinite(objective(xp)[0]):
        return None
    for _ in range(50):
        if zb.shape[1] == 0:
            break
        val, grad, hess = objective(xp)
        gvec = zb.T @ grad
        d = _newton_direction(zb.T @ hess @ zb, gvec)
        dec = -float(gvec @ d)
        if not np.isfinite(dec) or dec <= 1e-30:
            break
        t = 1.0
        for _ in range(60):
            xn = xp + t * (zb @ d)
            vn = objective(xn)[0]
            if np.isfinite(vn) and vn <= val - 1e-4 * t * dec + 1e-15:
                break
            t *= 0.5
        else:
            break
        xp = xn
    inactive_slack = g_live[~active] @ xp - h_live[~active]
    if np.any(inactive_slack < -1e-12):
        return None
    _, grad, _ = objective(xp)
    g_act = g_live[active]
    if a_eq is not None and len(a_eq):
        zeq = scipy.linalg.null_space(np.atleast_2d(a_eq), rcond=1e-10)
    else:
        zeq = np.eye(len(xp))
    # nonnegative multipliers for the active rows; equality multipliers are
    # eliminated by working in the null space of the equalities
    if g_act.shape[0]:
        lam_act, _ = nnls(zeq.T @ g_act.T, zeq.T @ grad)
    else:
        lam_act = np.zeros(0)
    stat = zeq.T @ (grad - g_act.T @ lam_act)
    resid = float(np.max(np.abs(stat), initial=0.0))
    act_slack = g_act @ xp - h_live[active]
    comp = float(np.max(np.abs(lam_act * act_slack), initial=0.0))
    return xp, max(resid, comp)
