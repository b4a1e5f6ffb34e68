"""Finite plane trees, their Lukasiewicz coding and Galton-Watson samplers."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable

import numpy as np

from ._kernels import count_distinct, locations_from_parents, preorder_parents
from .distributions import JumpDistribution, OffspringDistribution, sample_jump, sample_offspring
from .errors import CapExceeded, InfeasibleSize, InvalidPath

DEFAULT_SIZE_CAP = 10_000_000


@dataclass(frozen=True, eq=False)
class PlaneTree:
    """Plane tree stored as child counts in preorder."""

    children: np.ndarray

    def __post_init__(self):
        self.children.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.children)

    def __len__(self):
        return len(self.children)

    def __eq__(self, other):
        return isinstance(other, PlaneTree) and np.array_equal(self.children, other.children)

    def __hash__(self):
        return hash(self.children.tobytes())

    def __repr__(self):
        body = ",".join(map(str, self.children[:20]))
        return f"PlaneTree([{body}{',...' if self.size > 20 else ''}])"

    def parents(self) -> np.ndarray:
        return preorder_parents(self.children)[0]

    def heights(self) -> np.ndarray:
        par = self.parents()
        h = np.zeros(self.size, np.int64)
        for i in range(1, self.size):
            h[i] = h[par[i]] + 1
        return h

    def to_text(self) -> str:
        return "\n".join(str(int(x)) for x in lukasiewicz(self)) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PlaneTree":
        return tree_from_lukasiewicz([int(t) for t in text.split()])


@dataclass(frozen=True, eq=False)
class SpatialTree:
    tree: PlaneTree
    locations: np.ndarray

    @property
    def dim(self) -> int:
        return self.locations.shape[1]


def lukasiewicz(tree: PlaneTree) -> np.ndarray:
    return tree.children.astype(np.int64) - 1


def check_lukasiewicz(increments: np.ndarray) -> None:
    if len(increments) == 0:
        raise InvalidPath("empty path")
    if np.any(increments < -1):
        raise InvalidPath("increments must be >= -1")
    walk = np.cumsum(increments)
    if walk[-1] != -1:
        raise InvalidPath(f"path ends at {walk[-1]}, not -1")
    if len(walk) > 1 and walk[:-1].min() < 0:
        raise InvalidPath("path hits -1 before its last step")


def tree_from_lukasiewicz(increments: Iterable[int]) -> PlaneTree:
    inc = np.asarray(list(increments) if not isinstance(increments, np.ndarray) else increments, dtype=np.int64)
    check_lukasiewicz(inc)
    return PlaneTree(inc + 1)


def first_passage(increments: np.ndarray, level: int = -1) -> int:
    """Index (1-based) of the first partial sum equal to ``level``, or -1."""
    hit = np.flatnonzero(np.cumsum(increments) <= level)
    return int(hit[0]) + 1 if len(hit) else -1


def sample_forest_counts(mu: OffspringDistribution, roots: int, rng: np.random.Generator,
                         size_cap: int = DEFAULT_SIZE_CAP, truncate: bool = False) -> np.ndarray:
    """Preorder child counts of ``roots`` iid GW trees (walk run to -roots).

    With ``truncate`` the first ``size_cap`` counts are returned instead of
    raising when the forest is larger.
    """
    out = []
    level = 0
    total = 0
    block = 64
    while True:
        n = min(block, size_cap - total)
        if n <= 0:
            if truncate:
                return np.concatenate(out)
            raise CapExceeded(f"forest larger than {size_cap} vertices")
        c = sample_offspring(mu, rng, n)
        walk = level + np.cumsum(c - 1)
        hit = np.flatnonzero(walk <= -roots)
        if len(hit):
            out.append(c[: hit[0] + 1])
            return np.concatenate(out)
        out.append(c)
        level = int(walk[-1])
        total += n
        block = min(block * 4, 1 << 22)


def sample_gw(mu: OffspringDistribution, rng: np.random.Generator, size_cap: int = DEFAULT_SIZE_CAP) -> PlaneTree:
    """Unconditioned Galton-Watson tree via its Lukasiewicz walk."""
    return PlaneTree(sample_forest_counts(mu, 1, rng, size_cap))


def gw_size(mu: OffspringDistribution, rng: np.random.Generator, size_cap: int = DEFAULT_SIZE_CAP) -> int:
    """Total progeny of one GW tree, or -1 when it exceeds ``size_cap``."""
    try:
        return len(sample_forest_counts(mu, 1, rng, size_cap))
    except CapExceeded:
        return -1


def _support_gcd(mu: OffspringDistribution) -> int:
    ks = [int(k) for k in np.flatnonzero(mu.pmf) if k > 0]
    if mu.kind == "geometric":
        return 1
    return reduce(math.gcd, ks, 0)


def size_feasible(mu: OffspringDistribution, n: int) -> bool:
    """Whether n - 1 is a sum of n values from the support of mu."""
    if n < 1:
        return False
    if n == 1:
        return mu.p(0) > 0
    if mu.p(0) == 0:
        return False
    g = _support_gcd(mu)
    if g == 0 or (n - 1) % g:
        return False
    if mu.kind == "geometric" or mu.p(1) > 0:
        return True
    ks = [int(k) for k in np.flatnonzero(mu.pmf) if k > 0]
    target = n - 1
    if target > 200_000:
        # Large multiples of the gcd are representable (Frobenius) with far fewer than n summands.
        return True
    INF = n + 1
    best = np.full(target + 1, INF, np.int64)
    best[0] = 0
    for s in range(1, target + 1):
        for k in ks:
            if k <= s and best[s - k] + 1 < best[s]:
                best[s] = best[s - k] + 1
    return bool(best[target] <= n)


def cycle_rotate(increments: np.ndarray) -> np.ndarray:
    """Unique cyclic shift of a sum -1 sequence whose walk first hits -1 at the end."""
    walk = np.cumsum(increments)
    m = int(np.argmin(walk)) + 1
    return np.concatenate([increments[m:], increments[:m]])


def _uniform_composition(total: int, parts: int, rng: np.random.Generator) -> np.ndarray:
    # stars and bars: parts-1 bars among total+parts-1 slots
    if parts == 1:
        return np.array([total], np.int64)
    slots = total + parts - 1
    bars = np.sort(rng.choice(slots, parts - 1, replace=False))
    edges = np.concatenate([[-1], bars, [slots]])
    return np.diff(edges) - 1


def sample_gw_conditioned_size(mu: OffspringDistribution, n: int, rng: np.random.Generator,
                               max_tries: int = 10_000_000) -> PlaneTree:
    """Exact sample of the GW tree conditioned to have n vertices."""
    if not size_feasible(mu, n):
        raise InfeasibleSize(f"no tree of size {n} under {mu.name}")
    if mu.kind == "geometric":
        counts = _uniform_composition(n - 1, n, rng)
    else:
        for _ in range(max_tries):
            counts = sample_offspring(mu, rng, n)
            if counts.sum() == n - 1:
                break
        else:
            raise CapExceeded(f"rejection sampler did not hit size {n}")
    return PlaneTree(cycle_rotate(counts.astype(np.int64) - 1) + 1)


def sample_uniform_plane_tree(n: int, rng: np.random.Generator) -> PlaneTree:
    """Uniform plane tree with n vertices."""
    from .distributions import make_geometric_critical

    return sample_gw_conditioned_size(make_geometric_critical(), n, rng)


def assign_locations(tree: PlaneTree, theta: JumpDistribution, rng: np.random.Generator,
                     root: np.ndarray | None = None) -> SpatialTree:
    steps = sample_jump(theta, rng, tree.size)
    root = np.zeros(theta.dim, np.int64) if root is None else np.asarray(root, np.int64)
    loc = locations_from_parents(tree.parents(), steps, root)
    return SpatialTree(tree, loc)


def range_of(spatial: SpatialTree) -> int:
    return count_distinct(spatial.locations)


def enumerate_plane_trees(n: int) -> list[PlaneTree]:
    """All plane trees with n vertices (Catalan(n-1) of them)."""
    out = []

    def rec(prefix, level, left):
        if left == 0:
            if level == -1:
                out.append(PlaneTree(np.array(prefix, np.int64) + 1))
            return
        for step in range(-1, left):
            nxt = level + step
            if nxt < -1 or (nxt == -1 and left > 1):
                continue
            rec(prefix + [step], nxt, left - 1)

    rec([], 0, n)
    return out


def tree_probability(tree: PlaneTree, mu: OffspringDistribution) -> float:
    return float(np.prod([mu.p(int(k)) for k in tree.children]))
