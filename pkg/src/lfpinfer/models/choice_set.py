"""Discrete choice with unobserved heterogeneous choice sets.

A decision maker picks the utility maximizer within a choice set of at
least ``kappa`` alternatives; the set itself is not observed, so the
prediction is every alternative that wins some ``kappa``-subset.
"""

from __future__ import annotations

import numpy as np

from ..capacity import OutcomeSpace, RandomSetDistribution
from .base import IncompleteModel, aggregate_sets
from .latent import LatentKind, LatentSpec, gauss_hermite

MAX_ALTERNATIVES = 12


class ChoiceSetModel(IncompleteModel):
    """theta: linear utility-index coefficients; x: (J, d) alternative covariates, flattened."""

    name = "choice_set"

    def __init__(self, n_alternatives: int, n_covariates: int, kappa: int,
                 latent: LatentSpec | None = None):
        if n_alternatives > MAX_ALTERNATIVES:
            raise ValueError(f"at most {MAX_ALTERNATIVES} alternatives supported")
        if not 2 <= kappa <= n_alternatives:
            raise ValueError("kappa must satisfy 2 <= kappa <= J")
        self.J = int(n_alternatives)
        self.d = int(n_covariates)
        self.kappa = int(kappa)
        self.latent = latent or gauss_hermite(self.J, 32 if self.J <= 3 else 8)
        if self.latent.kind is not LatentKind.FIXED_NODES or self.latent.dim != self.J:
            raise ValueError("choice-set model needs FixedNodes latent of dimension J")
        self.space = OutcomeSpace(tuple(str(j + 1) for j in range(self.J)))

    @property
    def n_params(self) -> int:
        return self.d

    @property
    def x_dim(self) -> int:
        return self.J * self.d

    def utility_index(self, theta, x) -> np.ndarray:
        theta = self.check_theta(theta)
        return np.asarray(x, dtype=float).reshape(self.J, self.d) @ theta

    def optimal_sets(self, v: np.ndarray) -> np.ndarray:
        """Masks of alternatives winning some kappa-subset, per row of utilities.

        Ranking by (-utility, index) breaks ties toward the lower index; an
        alternative wins some kappa-subset iff at least kappa-1 others rank
        below it.
        """
        v = np.atleast_2d(v)
        order = np.lexsort((np.broadcast_to(np.arange(self.J), v.shape), -v), axis=1)
        top = order[:, : self.J - self.kappa + 1]
        return np.bitwise_or.reduce(1 << top, axis=1).astype(np.int64)

    def random_set(self, theta, x) -> RandomSetDistribution:
        v = self.utility_index(theta, x)[None, :] + self.latent.nodes
        return aggregate_sets(self.space, self.optimal_sets(v), self.latent.weights)

    def is_complete(self, theta) -> bool:
        return self.kappa == self.J

    def predicted_masks(self, theta, xs, u):
        xs = np.asarray(xs, dtype=float).reshape(-1, self.x_dim)
        theta = self.check_theta(theta)
        v = xs.reshape(len(xs), self.J, self.d) @ theta + np.asarray(u, dtype=float)
        return self.optimal_sets(v)
