"""Common interface of the incomplete discrete choice models."""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from scipy.special import ndtri

from ..capacity import Capacity, OutcomeSpace, RandomSetDistribution, containment_from_random_set
from .latent import LatentKind, LatentSpec


def aggregate_sets(space: OutcomeSpace, masks: np.ndarray, weights: np.ndarray) -> RandomSetDistribution:
    """Random-set law from per-node predicted sets and node weights."""
    return RandomSetDistribution(space, masks, weights)


class IncompleteModel(ABC):
    """Parametric family mapping (theta, x) to the law of a predicted set.

    Parameters and covariates are flat float vectors.  Subclasses may supply
    closed forms for the programs solved per covariate cell; the generic
    solvers are used otherwise.
    """

    space: OutcomeSpace
    latent: LatentSpec
    name: str = "model"

    @property
    @abstractmethod
    def n_params(self) -> int: ...

    @property
    @abstractmethod
    def x_dim(self) -> int: ...

    @abstractmethod
    def random_set(self, theta, x) -> RandomSetDistribution: ...

    def capacity(self, theta, x) -> Capacity:
        return containment_from_random_set(self.random_set(theta, x))

    def capacity_values(self, theta, xs: np.ndarray) -> np.ndarray:
        """(n_cells, 2**m) array of containment functionals."""
        xs = np.atleast_2d(np.asarray(xs, dtype=float)).reshape(len(xs), self.x_dim)
        return np.array([self.capacity(theta, x).values for x in xs])

    # optional closed forms -------------------------------------------------
    def closed_form_lfp(self, theta, xs, p):
        return None

    def closed_form_feasibility(self, theta, xs):
        return None

    def closed_form_projection(self, theta, xs, p_hat):
        return None

    def is_complete(self, theta) -> bool:
        return False

    # simulation ------------------------------------------------------------
    @property
    def n_uniforms(self) -> int:
        """Uniform draws consumed per unit to produce one latent vector."""
        return self.latent.dim if self.latent.kind is LatentKind.BIVARIATE_NORMAL_IID else 1

    def latent_from_uniform(self, v: np.ndarray) -> np.ndarray:
        """Map an (n, n_uniforms) block of U(0,1) draws to latent vectors."""
        v = np.asarray(v, dtype=float).reshape(-1, self.n_uniforms)
        if self.latent.kind is LatentKind.BIVARIATE_NORMAL_IID:
            return ndtri(np.clip(v, 1e-300, 1 - 1e-16))
        cdf = np.cumsum(self.latent.weights)
        idx = np.minimum(np.searchsorted(cdf, v[:, 0], side="right"), len(cdf) - 1)
        return self.latent.nodes[idx]

    def draw_latent(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.latent_from_uniform(rng.random((n, self.n_uniforms)))

    @abstractmethod
    def predicted_masks(self, theta, xs: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Predicted set (as mask) for each row of covariates and latent draws."""

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.shape != (self.n_params,):
            raise ValueError(f"{self.name} expects {self.n_params} parameters, got {theta.size}")
        return theta
