"""Two-player static entry game with pure-strategy Nash equilibria.

Player j's payoff from entering is ``x_j @ delta_j + beta_j * y_other + u_j``
with ``beta_j <= 0``.  Outcomes are ordered ``00, 01, 10, 11`` (player 1's
action first).  The five support sets of the predicted set are the four
singletons and the multiplicity set ``{01, 10}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from ..capacity import Capacity, OutcomeSpace, RandomSetDistribution
from .base import IncompleteModel
from .latent import LatentKind, LatentSpec

GAME_SPACE = OutcomeSpace(("00", "01", "10", "11"))
# atom masks: {00}, {01}, {10}, {11}, {01,10}
ATOM_MASKS = np.array([1, 2, 4, 8, 6], dtype=np.int64)
_SUBSET = ((np.arange(16)[:, None] & ATOM_MASKS[None, :]) == ATOM_MASKS[None, :]).astype(float)


@dataclass(frozen=True)
class EntryGameTheta:
    beta: tuple[float, float]
    delta: tuple[tuple[float, ...], tuple[float, ...]] = ((), ())

    def __post_init__(self):
        if len(self.beta) != 2 or any(b > 0 for b in self.beta):
            raise ValueError(f"beta must be two nonpositive numbers, got {self.beta}")
        if len(self.delta) != 2 or len(self.delta[0]) != len(self.delta[1]):
            raise ValueError("delta needs one coefficient vector of equal length per player")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([np.asarray(self.beta, float), np.asarray(self.delta[0], float),
                               np.asarray(self.delta[1], float)])

    @classmethod
    def from_vector(cls, v) -> "EntryGameTheta":
        v = np.asarray(v, dtype=float)
        k = (len(v) - 2) // 2
        return cls((float(v[0]), float(v[1])), (tuple(v[2:2 + k]), tuple(v[2 + k:])))


class EntryGame(IncompleteModel):
    """Entry game with ``k`` covariates per player (``k`` may be zero).

    theta = (beta1, beta2, delta1[0:k], delta2[0:k]); x = (x1[0:k], x2[0:k]).
    """

    name = "entry_game"

    def __init__(self, k: int = 0, latent: LatentSpec | None = None):
        self.k = int(k)
        self.latent = latent or LatentSpec()
        if self.latent.dim != 2:
            raise ValueError("entry game latent must be two-dimensional")
        self.space = GAME_SPACE

    @property
    def n_params(self) -> int:
        return 2 + 2 * self.k

    @property
    def x_dim(self) -> int:
        return 2 * self.k

    def check_theta(self, theta) -> np.ndarray:
        theta = super().check_theta(theta)
        if theta[0] > 0 or theta[1] > 0:
            raise ValueError(f"interaction effects must be nonpositive, got {theta[:2]}")
        return theta

    def _xs(self, xs):
        xs = np.asarray(xs, dtype=float)
        if xs.ndim < 2:
            xs = xs.reshape(-1, self.x_dim) if self.x_dim else np.zeros((1, 0))
        return xs

    def thresholds(self, theta, xs):
        """Lower (a) and upper (b) entry thresholds of the latent per player."""
        theta = self.check_theta(theta)
        xs = self._xs(xs)
        k = self.k
        idx1 = xs[:, :k] @ theta[2:2 + k] if k else np.zeros(len(xs))
        idx2 = xs[:, k:] @ theta[2 + k:] if k else np.zeros(len(xs))
        a1, a2 = -idx1, -idx2
        return a1, a2, a1 - theta[0], a2 - theta[1]

    def _single_normal_cell(self, xs) -> bool:
        return self.latent.kind is LatentKind.BIVARIATE_NORMAL_IID and np.shape(xs)[0] == 1

    def _masses_scalar(self, theta, x) -> tuple[float, ...]:
        # plain-float path for one covariate cell; avoids numpy overhead in optimizer loops
        t = self.check_theta(theta).tolist()
        xv = np.ravel(x).tolist()
        k = self.k
        a1 = -sum(xv[i] * t[2 + i] for i in range(k))
        a2 = -sum(xv[k + i] * t[2 + k + i] for i in range(k))
        b1, b2 = a1 - t[0], a2 - t[1]
        fa1, fa2, fb1, fb2 = (0.5 * math.erfc(-v / math.sqrt(2.0)) for v in (a1, a2, b1, b2))
        return (fa1 * fa2, fa1 * (1 - fa2) + (fb1 - fa1) * (1 - fb2),
                (1 - fb1) * fb2 + (fb1 - fa1) * fa2, (1 - fb1) * (1 - fb2),
                (fb1 - fa1) * (fb2 - fa2))

    def _bracket_scalar(self, theta, x):
        f00, f01, f10, f11, fm = self._masses_scalar(theta, x)
        return min(max(1.0 - f00 - f11, 0.0), 1.0), f10 + fm, f10, f00, f11

    def masses(self, theta, xs) -> np.ndarray:
        """(n, 5) probabilities of the support sets {00},{01},{10},{11},{01,10}."""
        if self._single_normal_cell(xs):
            return np.array([self._masses_scalar(theta, xs)])
        if self.latent.kind is LatentKind.BIVARIATE_NORMAL_IID:
            theta = self.check_theta(theta)
            xs = self._xs(xs)
            k = self.k
            z = np.zeros((len(xs), 4))
            if k:
                z[:, 0] = -(xs[:, :k] @ theta[2:2 + k])
                z[:, 1] = -(xs[:, k:] @ theta[2 + k:])
            z[:, 2] = z[:, 0] - theta[0]
            z[:, 3] = z[:, 1] - theta[1]
            fa1, fa2, fb1, fb2 = ndtr(z).T
            out = np.empty((len(xs), 5))
            out[:, 0] = fa1 * fa2
            out[:, 1] = fa1 * (1 - fa2) + (fb1 - fa1) * (1 - fb2)
            out[:, 2] = (1 - fb1) * fb2 + (fb1 - fa1) * fa2
            out[:, 3] = (1 - fb1) * (1 - fb2)
            out[:, 4] = (fb1 - fa1) * (fb2 - fa2)
            return out
        a1, a2, b1, b2 = self.thresholds(theta, xs)
        u = self.latent.nodes
        w = self.latent.weights
        masks = self._node_masks(a1[:, None], a2[:, None], b1[:, None], b2[:, None],
                                 u[None, :, 0], u[None, :, 1])
        return np.stack([(masks == m) @ w for m in ATOM_MASKS], axis=1)

    @staticmethod
    def _node_masks(a1, a2, b1, b2, u1, u2):
        # equilibrium checks; ties at thresholds follow entry iff profit >= 0
        e00 = (u1 < a1) & (u2 < a2)
        e11 = (u1 >= b1) & (u2 >= b2)
        e01 = (u1 < b1) & (u2 >= a2)
        e10 = (u1 >= a1) & (u2 < b2)
        return (e00 * 1 + e01 * 2 + e10 * 4 + e11 * 8).astype(np.int64)

    def random_set(self, theta, x) -> RandomSetDistribution:
        mass = self.masses(theta, np.asarray(x, dtype=float).reshape(1, self.x_dim))[0]
        return RandomSetDistribution(self.space, ATOM_MASKS, mass)

    def capacity_values(self, theta, xs) -> np.ndarray:
        return np.clip(self.masses(theta, xs) @ _SUBSET.T, 0.0, 1.0)

    def capacity(self, theta, x) -> Capacity:
        return Capacity(self.space, self.capacity_values(theta, np.reshape(x, (1, self.x_dim)))[0])

    def etas(self, theta, xs):
        """(eta1, eta2, eta3, f00, f11) arrays over cells."""
        f = self.masses(theta, xs)
        f00, f01, f10, f11, fm = f.T
        eta1 = np.clip(1.0 - f00 - f11, 0.0, 1.0)
        return eta1, f10 + fm, f10, f00, f11

    def entrant_probs(self, theta, xs) -> np.ndarray:
        """P(number of entrants = 0, 1, 2) per cell."""
        f = self.masses(theta, xs)
        return np.stack([f[:, 0], f[:, 1] + f[:, 2] + f[:, 4], f[:, 3]], axis=1)

    def is_complete(self, theta) -> bool:
        theta = self.check_theta(theta)
        return bool(theta[0] == 0 and theta[1] == 0)

    # closed forms ------------------------------------------------------------
    def _assemble(self, f00, f11, eta1, q10):
        return np.stack([f00, eta1 - q10, q10, f11], axis=1)

    @staticmethod
    def _share(p) -> float:
        p = np.ravel(p).tolist()
        d = p[1] + p[2]
        return p[2] / d if d > 0 else 0.5

    def _scalar_density(self, theta, xs, share):
        eta1, eta2, eta3, f00, f11 = self._bracket_scalar(theta, xs)
        z = share * eta1
        q10 = eta2 if z > eta2 else (eta3 if z < eta3 else z)
        return np.array([[f00, eta1 - q10, q10, f11]])

    def closed_form_lfp(self, theta, xs, p):
        if self._single_normal_cell(xs):
            return self._scalar_density(theta, xs, self._share(p))
        eta1, eta2, eta3, f00, f11 = self.etas(theta, xs)
        p = np.atleast_2d(p)
        denom = p[:, 1] + p[:, 2]
        with np.errstate(invalid="ignore", divide="ignore"):
            p_rel = np.where(denom > 0, p[:, 2] / denom, 0.5)
        z = p_rel * eta1
        # ties at the bracket ends resolve to the interior branch; values coincide there
        q10 = np.where(z > eta2, eta2, np.where(z < eta3, eta3, z))
        return self._assemble(f00, f11, eta1, q10)

    def closed_form_feasibility(self, theta, xs):
        if self._single_normal_cell(xs):
            return self._scalar_density(theta, xs, 0.5)
        eta1, eta2, eta3, f00, f11 = self.etas(theta, xs)
        q10 = np.clip(eta1 / 2.0, eta3, eta2)
        return self._assemble(f00, f11, eta1, q10)

    def closed_form_projection(self, theta, xs, p_hat):
        if self._single_normal_cell(xs):
            return self._scalar_density(theta, xs, self._share(p_hat))
        eta1, eta2, eta3, f00, f11 = self.etas(theta, xs)
        p_hat = np.atleast_2d(p_hat)
        denom = p_hat[:, 1] + p_hat[:, 2]
        with np.errstate(invalid="ignore", divide="ignore"):
            share = np.where(denom > 0, p_hat[:, 2] / denom, 0.5)
        q10 = np.clip(share * eta1, eta3, eta2)
        return self._assemble(f00, f11, eta1, q10)

    # simulation ----------------------------------------------------------------
    def predicted_masks(self, theta, xs, u):
        a1, a2, b1, b2 = self.thresholds(theta, xs)
        u = np.asarray(u, dtype=float)
        return self._node_masks(a1, a2, b1, b2, u[:, 0], u[:, 1])

    def counterfactual_entry(self, theta, player: int, x_player=(), y_other: int = 0) -> float:
        """P(player enters) with own covariates and the rival's action set externally."""
        theta = self.check_theta(theta)
        k = self.k
        delta = theta[2:2 + k] if player == 0 else theta[2 + k:]
        idx = float(np.dot(np.asarray(x_player, dtype=float).reshape(k), delta)) if k else 0.0
        return float(ndtr(idx + theta[player] * y_other))
