"""Latent-variable laws and deterministic discretizations of them."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc


class LatentKind(enum.Enum):
    BIVARIATE_NORMAL_IID = "BivariateNormalIID"
    FIXED_NODES = "FixedNodes"


@dataclass(frozen=True)
class LatentSpec:
    """Law of the latent vector U.

    ``BIVARIATE_NORMAL_IID`` is the exact iid standard normal pair; the
    ``FIXED_NODES`` kind is a discrete law on ``nodes`` with ``weights``.
    """

    kind: LatentKind = LatentKind.BIVARIATE_NORMAL_IID
    nodes: np.ndarray | None = field(default=None, repr=False)
    weights: np.ndarray | None = field(default=None, repr=False)
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind is LatentKind.FIXED_NODES:
            if self.nodes is None or self.weights is None:
                raise ValueError("FixedNodes latent needs nodes and weights")
            nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
            w = np.asarray(self.weights, dtype=float).ravel()
            if nodes.shape[0] != w.shape[0]:
                raise ValueError("one weight per node required")
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ValueError("node weights must be nonnegative and sum to 1")
            nodes.setflags(write=False)
            w = w / w.sum()
            w.setflags(write=False)
            object.__setattr__(self, "nodes", nodes)
            object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        if self.kind is LatentKind.BIVARIATE_NORMAL_IID:
            return 2
        return self.nodes.shape[1]


def gauss_hermite(dim: int, n_per_dim: int = 32) -> LatentSpec:
    """Tensor Gauss-Hermite rule for an iid standard normal vector."""
    x, w = np.polynomial.hermite_e.hermegauss(n_per_dim)
    w = w / w.sum()
    nodes = np.array(list(itertools.product(x, repeat=dim)))
    weights = np.prod(np.array(list(itertools.product(w, repeat=dim))), axis=1)
    return LatentSpec(
        LatentKind.FIXED_NODES, nodes, weights / weights.sum(),
        meta={"rule": "gauss_hermite", "n_per_dim": n_per_dim},
    )


def qmc_normal(dim: int, n: int = 4096, seed: int = 0) -> LatentSpec:
    """Scrambled Sobol points mapped to iid standard normals, equal weights."""
    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    m = int(np.ceil(np.log2(n)))
    u = sampler.random_base2(m)[:n]
    nodes = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return LatentSpec(
        LatentKind.FIXED_NODES, nodes, np.full(len(nodes), 1.0 / len(nodes)), seed=seed,
        meta={"rule": "sobol", "n": n},
    )
