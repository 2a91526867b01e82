"""Finite outcome spaces, set functions and their cores.

Subsets of an outcome space with ``m`` elements are encoded as ``m``-bit
integer masks (bit ``i`` set means outcome ``i`` is in the set).  A capacity
is a dense array of length ``2**m`` indexed by mask.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

MAX_OUTCOMES = 20
NORMALIZATION_TOL = 1e-12
CORE_TOL = 1e-9
PRUNE_MASS = 1e-14


@dataclass(frozen=True)
class OutcomeSpace:
    """Ordered, finite set of outcome labels."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(s) for s in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(set(labels)) != len(labels):
            raise ValueError(f"outcome labels must be distinct: {labels}")
        if not 2 <= len(labels) <= MAX_OUTCOMES:
            raise ValueError(
                f"outcome space needs between 2 and {MAX_OUTCOMES} outcomes, got {len(labels)}"
            )

    @property
    def m(self) -> int:
        return len(self.labels)

    @property
    def full(self) -> int:
        return (1 << self.m) - 1

    def index(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise KeyError(f"unknown outcome label {label!r}") from None

    def mask(self, members: Iterable) -> int:
        """Mask of a collection of labels or integer indices."""
        out = 0
        for x in members:
            i = x if isinstance(x, (int, np.integer)) else self.index(x)
            if not 0 <= i < self.m:
                raise IndexError(f"outcome index {i} out of range")
            out |= 1 << int(i)
        return out

    def members(self, mask: int) -> tuple[int, ...]:
        return tuple(i for i in range(self.m) if mask >> i & 1)

    def describe(self, mask: int) -> str:
        return "{" + ",".join(self.labels[i] for i in self.members(mask)) + "}"


def _bit_table(m: int) -> np.ndarray:
    """Boolean (2**m, m) table; row A, column y is True iff y in A."""
    masks = np.arange(1 << m)
    return ((masks[:, None] >> np.arange(m)) & 1).astype(bool)


@dataclass(frozen=True)
class RandomSetDistribution:
    """Finite law of a random nonempty subset of an outcome space.

    Atoms with identical masks are merged; masses below ``PRUNE_MASS`` are
    dropped and the rest renormalized.
    """

    space: OutcomeSpace
    masks: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        masks = np.asarray(self.masks, dtype=np.int64).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        if masks.shape != weights.shape:
            raise ValueError("masks and weights must have the same length")
        if np.any(weights < -NORMALIZATION_TOL):
            raise ValueError("atom masses must be nonnegative")
        if np.any(masks <= 0) or np.any(masks > self.space.full):
            raise ValueError("every atom must be a nonempty subset of the outcome space")
        uniq, inv = np.unique(masks, return_inverse=True)
        merged = np.zeros(len(uniq))
        np.add.at(merged, inv, np.clip(weights, 0.0, None))
        keep = merged >= PRUNE_MASS
        uniq, merged = uniq[keep], merged[keep]
        total = merged.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"atom masses sum to {total!r}, expected 1")
        merged = merged / total
        uniq.setflags(write=False)
        merged.setflags(write=False)
        object.__setattr__(self, "masks", uniq)
        object.__setattr__(self, "weights", merged)

    @classmethod
    def from_atoms(cls, space: OutcomeSpace, atoms: Iterable[tuple[Iterable, float]]):
        atoms = list(atoms)
        return cls(space, [space.mask(k) for k, _ in atoms], [w for _, w in atoms])

    def atoms(self) -> list[tuple[int, float]]:
        return [(int(k), float(w)) for k, w in zip(self.masks, self.weights)]

    def mass_of(self, mask: int) -> float:
        hit = np.nonzero(self.masks == mask)[0]
        return float(self.weights[hit[0]]) if len(hit) else 0.0


@dataclass(frozen=True)
class Capacity:
    """Normalized monotone set function stored as a dense array over masks."""

    space: OutcomeSpace
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        n = 1 << self.space.m
        if v.shape != (n,):
            raise ValueError(f"capacity needs {n} values, got {v.shape[0]}")
        if abs(v[0]) > NORMALIZATION_TOL or abs(v[-1] - 1.0) > NORMALIZATION_TOL:
            raise ValueError("capacity must satisfy nu(empty)=0 and nu(full)=1")
        if np.any(v < -NORMALIZATION_TOL) or np.any(v > 1 + NORMALIZATION_TOL):
            raise ValueError("capacity values must lie in [0, 1]")
        masks = np.arange(n)
        for y in range(self.space.m):
            lower = masks[(masks >> y & 1) == 0]
            if np.any(v[lower | (1 << y)] < v[lower] - NORMALIZATION_TOL):
                raise ValueError("capacity is not monotone")
        v[0], v[-1] = 0.0, 1.0
        v = np.clip(v, 0.0, 1.0)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __call__(self, mask: int) -> float:
        return float(self.values[mask])

    @property
    def m(self) -> int:
        return self.space.m

    def singletons(self) -> np.ndarray:
        return self.values[1 << np.arange(self.m)]

    def is_additive(self, tol: float = 1e-12) -> bool:
        table = _bit_table(self.m)
        return bool(np.all(np.abs(table @ self.singletons() - self.values) <= tol))

    @classmethod
    def additive(cls, space: OutcomeSpace, probs: Sequence[float]) -> "Capacity":
        probs = np.asarray(probs, dtype=float)
        return cls(space, _bit_table(space.m) @ probs)


def make_density(probs, tol: float = NORMALIZATION_TOL) -> np.ndarray:
    """Validate a probability vector; returns a read-only float array."""
    p = np.array(probs, dtype=float).ravel()
    if p.size < 1 or np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError(f"not a probability vector: {p}")
    if abs(p.sum() - 1.0) > tol:
        raise ValueError(f"density sums to {p.sum()!r}, expected 1")
    p.setflags(write=False)
    return p


def containment_from_random_set(d: RandomSetDistribution) -> Capacity:
    """nu(A) = P(G subset of A): sum of atom masses contained in A."""
    m = d.space.m
    nu = np.zeros(1 << m)
    nu[d.masks] = d.weights
    # superset-sum (zeta) transform over the subset lattice
    for y in range(m):
        bit = 1 << y
        idx = np.arange(1 << m)
        hi = idx[(idx & bit) != 0]
        nu[hi] += nu[hi ^ bit]
    return Capacity(d.space, np.clip(nu, 0.0, 1.0))


def mobius(c: Capacity) -> np.ndarray:
    """Moebius inverse of a capacity (atom masses for a belief function)."""
    m = c.m
    out = np.array(c.values, dtype=float)
    idx = np.arange(1 << m)
    for y in range(m):
        bit = 1 << y
        hi = idx[(idx & bit) != 0]
        out[hi] -= out[hi ^ bit]
    return out


def conjugate(c: Capacity) -> Capacity:
    full = c.space.full
    idx = np.arange(1 << c.m)
    v = 1.0 - c.values[full ^ idx]
    v[0] = 0.0
    return Capacity(c.space, v)


def _k_monotone_violations(values: np.ndarray, tuples: np.ndarray, tol: float) -> bool:
    """True if any row of ``tuples`` (mask k-tuples) violates order-k monotonicity."""
    k = tuples.shape[1]
    union = np.bitwise_or.reduce(tuples, axis=1)
    rhs = np.zeros(len(tuples))
    for r in range(1, k + 1):
        sign = 1.0 if r % 2 else -1.0
        for sub in itertools.combinations(range(k), r):
            inter = np.bitwise_and.reduce(tuples[:, sub], axis=1)
            rhs += sign * values[inter]
    return bool(np.any(values[union] < rhs - tol))


def check_k_monotone(
    c: Capacity, k: int, *, exhaustive_max_m: int = 5, n_samples: int = 10_000, seed: int = 0,
    tol: float = 1e-12,
) -> bool:
    """Order-k monotonicity check.

    Exhaustive over all multisets of k subsets when ``m <= exhaustive_max_m``,
    otherwise on ``n_samples`` random k-tuples drawn with ``seed``.
    """
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    n = 1 << c.m
    values = np.asarray(c.values)
    if c.m <= exhaustive_max_m:
        it = itertools.combinations_with_replacement(range(n), k)
        while True:
            chunk = np.fromiter(
                itertools.chain.from_iterable(itertools.islice(it, 50_000)), dtype=np.int64
            )
            if chunk.size == 0:
                return True
            if _k_monotone_violations(values, chunk.reshape(-1, k), tol):
                return False
    rng = np.random.default_rng(seed)
    tuples = rng.integers(0, n, size=(n_samples, k))
    return not _k_monotone_violations(values, tuples, tol)


def core_membership(q, c: Capacity, tol: float = CORE_TOL) -> bool:
    q = np.asarray(q, dtype=float)
    if q.shape != (c.m,) or np.any(q < -tol) or abs(q.sum() - 1.0) > 1e-9:
        return False
    return bool(np.all(_bit_table(c.m) @ q >= c.values - tol))


def core_constraints(c: Capacity) -> tuple[np.ndarray, np.ndarray]:
    """Rows (indicator of A) and right-hand sides nu(A), proper nonempty A only."""
    table = _bit_table(c.m)[1:-1].astype(float)
    return table, np.asarray(c.values[1:-1], dtype=float)


def tight_sets(c: Capacity, tol: float = 1e-12) -> np.ndarray:
    """Masks A whose core constraint holds with equality on the whole core.

    For a 2-monotone capacity the largest value of Q(A) over the core is
    1 - nu(A^c), so the constraint is an implied equality iff
    nu(A) + nu(A^c) = 1.
    """
    idx = np.arange(1, c.space.full)
    gap = 1.0 - c.values[idx] - c.values[c.space.full ^ idx]
    return idx[gap <= tol]


def lower_envelope(c: Capacity, a: int) -> float:
    """min Q(A) over the core, by linear programming."""
    from .optim import lp_solve

    table, rhs = core_constraints(c)
    objective = _bit_table(c.m)[a].astype(float)
    x, report = lp_solve(
        objective, a_ub=-table, b_ub=-rhs, a_eq=np.ones((1, c.m)), b_eq=np.ones(1),
        bounds=(0.0, None),
    )
    return float(objective @ x)


def choquet_integral(f, c: Capacity) -> float:
    """Choquet integral of a per-outcome function against ``c``.

    Uses the layer-cake sum over outcomes ranked by decreasing ``f``; with a
    normalized capacity this equals the two-term integral for signed ``f``.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (c.m,):
        raise ValueError(f"f must have length {c.m}")
    order = np.argsort(-f, kind="stable")
    total, prev, mask = 0.0, 0.0, 0
    for y in order:
        mask |= 1 << int(y)
        cur = c.values[mask]
        total += f[y] * (cur - prev)
        prev = cur
    return float(total)
