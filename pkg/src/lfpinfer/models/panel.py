"""Short-panel dynamic binary choice with a fixed effect and unobserved initial outcome."""

from __future__ import annotations

import itertools

import numpy as np

from ..capacity import OutcomeSpace, RandomSetDistribution
from .base import IncompleteModel, aggregate_sets
from .latent import LatentKind, LatentSpec, gauss_hermite

# outcome paths are 2**T; capacities over them are dense arrays of length 2**(2**T)
MAX_PERIODS = 4


class PanelBinaryModel(IncompleteModel):
    """y_t = 1{x_t @ b + gamma * y_{t-1} + a + u_t >= 0}, t = 1..T.

    theta = (b[0:d], gamma).  The fixed effect ``a`` ranges over the real
    line and ``y_0`` over {0, 1}; both are left unrestricted.  Outcome labels
    are paths such as ``"0110"`` (period 1 first).
    """

    name = "panel_binary"

    def __init__(self, periods: int, n_covariates: int, latent: LatentSpec | None = None):
        if periods < 2:
            raise ValueError("panel needs at least two periods")
        if periods > MAX_PERIODS:
            raise ValueError(
                f"T={periods} gives 2**{periods} outcome paths; at most T={MAX_PERIODS} supported"
            )
        self.T = int(periods)
        self.d = int(n_covariates)
        self.latent = latent or gauss_hermite(self.T, 32 if self.T <= 2 else 12)
        if self.latent.kind is not LatentKind.FIXED_NODES or self.latent.dim != self.T:
            raise ValueError("panel model needs FixedNodes latent of dimension T")
        labels = ["".join(map(str, path)) for path in itertools.product((0, 1), repeat=self.T)]
        self.space = OutcomeSpace(tuple(labels))
        # weight of period t in the outcome index (period 1 is the leading bit)
        self._bit = 1 << np.arange(self.T - 1, -1, -1)

    @property
    def n_params(self) -> int:
        return self.d + 1

    @property
    def x_dim(self) -> int:
        return self.T * self.d

    def index(self, theta, x) -> np.ndarray:
        theta = self.check_theta(theta)
        if self.d == 0:
            return np.zeros(self.T)
        return np.asarray(x, dtype=float).reshape(self.T, self.d) @ theta[: self.d]

    def _paths_mask(self, g: np.ndarray, gamma: float, u: np.ndarray) -> np.ndarray:
        """Predicted-set masks for latent rows ``u`` given index values ``g`` (T,)."""
        u = np.atleast_2d(u)
        n = len(u)
        # candidate switching points of the fixed effect
        bps = np.concatenate([-g - u, -g - gamma - u], axis=1)
        bps = np.sort(bps, axis=1)
        span = np.max(np.abs(bps), axis=1, keepdims=True) + 1.0
        mids = (bps[:, :-1] + bps[:, 1:]) / 2.0
        reps = np.concatenate([-span, mids, span], axis=1)  # (n, 2T+1)
        masks = np.zeros(n, dtype=np.int64)
        for y0 in (0, 1):
            prev = np.full(reps.shape, y0)
            idx = np.zeros(reps.shape, dtype=np.int64)
            for t in range(self.T):
                yt = (g[t] + gamma * prev + reps + u[:, [t]] >= 0).astype(np.int64)
                idx += yt * self._bit[t]
                prev = yt
            masks |= np.bitwise_or.reduce(np.left_shift(1, idx), axis=1)
        return masks

    def random_set(self, theta, x) -> RandomSetDistribution:
        theta = self.check_theta(theta)
        masks = self._paths_mask(self.index(theta, x), theta[-1], self.latent.nodes)
        return aggregate_sets(self.space, masks, self.latent.weights)

    def is_complete(self, theta) -> bool:
        return False

    def predicted_masks(self, theta, xs, u):
        theta = self.check_theta(theta)
        xs = np.asarray(xs, dtype=float).reshape(-1, self.x_dim)
        u = np.atleast_2d(u)
        if len(xs) == 1:
            return self._paths_mask(self.index(theta, xs[0]), theta[-1], u)
        return np.concatenate([
            self._paths_mask(self.index(theta, x), theta[-1], u[i:i + 1])
            for i, x in enumerate(xs)
        ])
