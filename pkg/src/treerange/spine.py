"""The invariant infinite tree, its shift, and estimators of the range constant.

Vertices of the infinite tree are enumerated as u_0 = root, then the non-spine
vertices of T_0, T_{-1}, T_{-2}, ... each in lexicographical order.  Beyond
its root, each T_{-j} is a forest whose child counts in preorder are iid mu,
so any preorder prefix can be generated without finishing the forest.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import stats

from ._kernels import PointSet, any_equal_zero, forest_fill, locations_from_parents, mark_box, preorder_parents
from .analytics import GreenTable
from .distributions import (
    JumpDistribution,
    OffspringDistribution,
    sample_jump,
    sample_jump_index,
    sample_offspring,
    sample_tail,
    tail,
    tail_array,
)
from .errors import CapExceeded, DomainError, HTableMiss, InsufficientPrefix
from .estimates import EstimateRecord
from .gw_trees import assign_locations, range_of, sample_forest_counts, sample_gw_conditioned_size
from .parallel import replicate

POOL = 1 << 16


# --------------------------------------------------------------------------
# reference encoding


class SpinePrefix:
    """Finite, lazily extended encoding of a spatial infinite tree.

    ``counts[j]`` and ``locs[j]`` hold a preorder prefix of T_{-j} (root first,
    absolute locations); ``complete[j]`` tells whether the prefix is the whole
    tree.  New material is drawn from ``rng`` on demand.
    """

    def __init__(self, mu: OffspringDistribution, theta: JumpDistribution, rng: np.random.Generator):
        self.mu, self.theta, self.rng = mu, theta, rng
        self.counts: list[np.ndarray] = []
        self.steps: list[np.ndarray] = []
        self.locs: list[np.ndarray] = []
        self.complete: list[bool] = []
        self.frozen = False

    # -- construction --------------------------------------------------------
    @classmethod
    def sample(cls, mu, theta, rng, subtrees: int = 1) -> "SpinePrefix":
        sp = cls(mu, theta, rng)
        sp.ensure_subtrees(subtrees)
        return sp

    @classmethod
    def from_parts(cls, mu, theta, counts, locs, complete, rng=None) -> "SpinePrefix":
        """Fixed encoding; with ``rng=None`` any extension raises InsufficientPrefix."""
        sp = cls(mu, theta, rng)
        d = theta.dim
        for c, l, done in zip(counts, locs, complete):
            c = np.asarray(c, np.int64)
            l = np.asarray(l, np.int64).reshape(len(c), d)
            st = np.zeros_like(l)
            par, _ = preorder_parents(c)
            st[1:] = l[1:] - l[par[1:]]
            sp.counts.append(c)
            sp.steps.append(st)
            sp.locs.append(l)
            sp.complete.append(bool(done))
        sp.frozen = rng is None
        return sp

    def _need_rng(self):
        if self.frozen or self.rng is None:
            raise InsufficientPrefix("encoded prefix is exhausted")

    def ensure_subtrees(self, J: int):
        d = self.theta.dim
        while len(self.counts) < J:
            self._need_rng()
            j = len(self.counts)
            if j == 0:
                root = np.zeros(d, np.int64)
                c = sample_offspring(self.mu, self.rng)
            else:
                # edge (-j-1) -> (-j) carries a theta step
                root = self.locs[j - 1][0] - sample_jump(self.theta, self.rng)
                c = sample_tail(self.mu, self.rng)
            self.counts.append(np.array([c], np.int64))
            self.steps.append(np.zeros((1, d), np.int64))
            self.locs.append(root[None, :].copy())
            self.complete.append(c == 0)

    def extend(self, j: int, amount: int):
        if self.complete[j]:
            return
        self._need_rng()
        c = sample_offspring(self.mu, self.rng, amount)
        st = sample_jump(self.theta, self.rng, amount)
        counts = np.concatenate([self.counts[j], c])
        steps = np.concatenate([self.steps[j], st])
        par, end = preorder_parents(counts)
        if end > 0:
            counts, steps, par = counts[:end], steps[:end], par[:end]
            self.complete[j] = True
        self.counts[j] = counts
        self.steps[j] = steps
        self.locs[j] = locations_from_parents(par, steps, self.locs[j][0])

    def ensure_length(self, j: int, length: int):
        while not self.complete[j] and len(self.counts[j]) < length:
            self.extend(j, max(64, length - len(self.counts[j])))

    def ensure_complete(self, j: int, cap: int = 10_000_000):
        while not self.complete[j]:
            if len(self.counts[j]) > cap:
                raise CapExceeded(f"spine subtree {j} exceeds {cap} vertices")
            self.extend(j, max(64, len(self.counts[j])))

    def first_child_size(self, j: int, cap: int = 10_000_000) -> int:
        """Size of the subtree of the first child of spine vertex -j."""
        while True:
            _, end = preorder_parents(self.counts[j][1:])
            if end > 0:
                return int(end)
            if self.complete[j]:
                raise InsufficientPrefix("spine vertex has no child")
            if len(self.counts[j]) > cap:
                raise CapExceeded(f"first subtree of spine vertex {j} exceeds {cap} vertices")
            self.extend(j, max(64, len(self.counts[j])))

    # -- queries ------------------------------------------------------------
    def root_count(self, j: int) -> int:
        self.ensure_subtrees(j + 1)
        return int(self.counts[j][0])

    def spine_location(self, j: int) -> np.ndarray:
        self.ensure_subtrees(j + 1)
        return self.locs[j][0]

    def locations(self, n: int) -> np.ndarray:
        """z_{u_0}, ..., z_{u_{n-1}}."""
        out = [np.zeros((1, self.theta.dim), np.int64)]
        have = 1
        j = 0
        while have < n:
            self.ensure_subtrees(j + 1)
            self.ensure_length(j, n - have + 1)
            part = self.locs[j][1:]
            if not self.complete[j] and len(part) < n - have:
                raise InsufficientPrefix("encoded prefix is too short")
            out.append(part[: n - have])
            have += len(out[-1])
            j += 1
        return np.concatenate(out)[:n]

    def shift(self) -> "SpinePrefix":
        """tau*: re-root at the first non-spine vertex and recentre locations."""
        k = 0
        while True:
            if k >= len(self.counts):
                if self.frozen:
                    raise InsufficientPrefix("no non-spine vertex in the encoded prefix")
                self.ensure_subtrees(k + 1)
            if self.counts[k][0] >= 1:
                break
            k += 1
        if self.frozen and len(self.counts[k]) < 2:
            raise InsufficientPrefix("first child of the spine vertex is not encoded")
        s = self.first_child_size(k)
        zv = self.locs[k][1].copy()
        new = SpinePrefix(self.mu, self.theta, self.rng)
        new.frozen = self.frozen
        ck = self.counts[k]
        new.counts.append(ck[1:1 + s].copy())
        new.steps.append(self.steps[k][1:1 + s].copy())
        new.locs.append(self.locs[k][1:1 + s] - zv)
        new.complete.append(True)
        rest = np.concatenate([[ck[0] - 1], ck[1 + s:]])
        new.counts.append(rest.astype(np.int64))
        new.steps.append(np.concatenate([self.steps[k][:1], self.steps[k][1 + s:]]))
        new.locs.append(np.concatenate([self.locs[k][:1], self.locs[k][1 + s:]]) - zv)
        new.complete.append(self.complete[k])
        for j in range(k + 1, len(self.counts)):
            new.counts.append(self.counts[j])
            new.steps.append(self.steps[j])
            new.locs.append(self.locs[j] - zv)
            new.complete.append(self.complete[j])
        return new

    def shift_n(self, n: int) -> "SpinePrefix":
        sp = self
        for _ in range(n):
            sp = sp.shift()
        return sp

    def statistic(self) -> tuple[int, int, int]:
        """(k(T_0), k(T_{-1}), min(#T_0, 10))."""
        self.ensure_subtrees(2)
        self.ensure_length(0, 10)
        size0 = len(self.counts[0]) if self.complete[0] else 10
        return int(self.counts[0][0]), int(self.counts[1][0]), min(size0, 10)


def shift_tau(encoding: SpinePrefix) -> SpinePrefix:
    return encoding.shift()


# --------------------------------------------------------------------------
# streaming walk


class SpineStream:
    """Lazy sequence of (index, location) of u_0, u_1, ... under the invariant law.

    Memory is the open-vertex stack of the current spine subtree plus the
    sampling pools; visited sets are kept by the consumer.
    """

    def __init__(self, mu: OffspringDistribution, theta: JumpDistribution, rng: np.random.Generator,
                 record_roots: int = 8):
        self.mu, self.theta = mu, theta
        self.d = theta.dim
        self._rng_counts, self._rng_jumps, self._rng_spine = rng.spawn(3)
        self.support = np.ascontiguousarray(theta.support, np.int64)
        self._counts = np.empty(0, np.int64)
        self._jumps = np.empty(0, np.int64)
        self._cp = self._jp = 0
        self._stack_loc = np.zeros((1024, self.d), np.int64)
        self._stack_rem = np.zeros(1024, np.int64)
        self._sp = 0
        self.spine_index = 0
        self.spine_loc = np.zeros(self.d, np.int64)
        self.emitted = 0
        self.root_counts: list[int] = []
        self._record = record_roots
        c0 = sample_offspring(mu, self._rng_spine)
        self._push_root(c0)

    def _push_root(self, c: int):
        if len(self.root_counts) < self._record:
            self.root_counts.append(int(c))
        if c > 0:
            self._stack_loc[0] = self.spine_loc
            self._stack_rem[0] = c
            self._sp = 1

    def _advance_spine(self):
        self.spine_index += 1
        self.spine_loc = self.spine_loc - self.support[sample_jump_index(self.theta, self._rng_spine)]
        self._push_root(sample_tail(self.mu, self._rng_spine))

    def take(self, m: int) -> np.ndarray:
        out = np.empty((m, self.d), np.int64)
        pos = 0
        if self.emitted == 0 and m > 0:
            out[0] = 0
            pos = 1
        while pos < m:
            if self._sp == 0:
                self._advance_spine()
                continue
            if self._cp >= len(self._counts):
                self._counts = sample_offspring(self.mu, self._rng_counts, POOL)
                self._cp = 0
            if self._jp >= len(self._jumps):
                self._jumps = sample_jump_index(self.theta, self._rng_jumps, POOL)
                self._jp = 0
            if self._sp >= len(self._stack_rem) - 1:
                self._stack_loc = np.concatenate([self._stack_loc, np.zeros_like(self._stack_loc)])
                self._stack_rem = np.concatenate([self._stack_rem, np.zeros_like(self._stack_rem)])
            pos, self._cp, self._jp, self._sp = forest_fill(
                out, pos, self._counts, self._cp, self._jumps, self._jp, self.support,
                self._stack_loc, self._stack_rem, self._sp)
        self.emitted += m
        return out

    def __iter__(self) -> Iterator[tuple[int, np.ndarray]]:
        while True:
            base = self.emitted
            block = self.take(4096)
            for i in range(len(block)):
                yield base + i, block[i]


def stream_spine_walk(mu: OffspringDistribution, theta: JumpDistribution, rng: np.random.Generator) -> SpineStream:
    return SpineStream(mu, theta, rng)


@dataclass
class RangeTrace:
    n: int
    checkpoints: np.ndarray
    r_values: np.ndarray
    seed: int | None = None
    params: dict = field(default_factory=dict)

    @property
    def final(self) -> int:
        return int(self.r_values[-1])


def range_process(stream: SpineStream, n: int, checkpoints: Sequence[int] | None = None,
                  chunk: int = 1 << 16) -> RangeTrace:
    """R_k = #{z_{u_0}, ..., z_{u_{k-1}}} at the requested k <= n."""
    if n < 1:
        raise DomainError("n must be >= 1")
    cps = np.unique(np.asarray(checkpoints if checkpoints is not None else [n], np.int64))
    if cps[0] < 1 or cps[-1] > n:
        raise DomainError("checkpoints must lie in [1, n]")
    visited = PointSet(stream.d, min(n, 1 << 20))
    vals = np.empty(len(cps), np.int64)
    done = 0
    count = 0
    ci = 0
    while done < n:
        m = min(chunk, n - done)
        flags = visited.add(stream.take(m))
        running = count + np.cumsum(flags, dtype=np.int64)
        while ci < len(cps) and cps[ci] <= done + m:
            vals[ci] = running[cps[ci] - done - 1]
            ci += 1
        count = int(running[-1])
        done += m
    return RangeTrace(n, cps, vals)


def _range_replica(rng, mu, theta, n, checkpoints):
    tr = range_process(SpineStream(mu, theta, rng), n, checkpoints)
    return tr.r_values / tr.checkpoints


def estimate_range_constant(mu, theta, n: int, reps: int, seed: int, checkpoints=None, workers: int = 1) -> EstimateRecord:
    """R_n / n over independent replicas of the infinite spatial tree."""
    t0 = time.perf_counter()
    cps = sorted(set(checkpoints or []) | {n})
    res = np.array(replicate(_range_replica, reps, seed, (mu, theta, n, cps), workers))
    extra = {"checkpoints": cps, "mean_by_checkpoint": res.mean(axis=0).tolist()}
    return EstimateRecord.from_samples(res[:, -1], {"n": n, "dim": theta.dim, "mu": mu.name}, seed,
                                       (time.perf_counter() - t0) * 1e3, extra)


def _first_return_replica(rng, mu, theta, horizon, chunk=1 << 15):
    """Smallest j in [1, horizon] with z_{u_j} = 0, or horizon + 1."""
    st = SpineStream(mu, theta, rng)
    done = 0
    while done <= horizon:
        m = min(chunk, horizon + 1 - done)
        block = st.take(m)
        start = 1 if done == 0 else 0
        hit = any_equal_zero(block, start)
        if hit >= 0:
            return done + hit
        done += m
    return horizon + 1


def estimate_no_return(mu: OffspringDistribution, theta: JumpDistribution, horizon: int, reps: int, seed: int,
                       workers: int = 1, curve: Sequence[int] | None = None) -> EstimateRecord:
    """P(z_{u_j} != 0 for 1 <= j <= horizon); ``extra['curve']`` gives smaller horizons."""
    if horizon < 1:
        raise DomainError("horizon must be >= 1")
    t0 = time.perf_counter()
    first = np.array(replicate(_first_return_replica, reps, seed, (mu, theta, horizon), workers))
    surv = (first > horizon).astype(float)
    hs = sorted(set(curve or [int(h) for h in np.unique(np.geomspace(1, horizon, 13).astype(int))]) | {horizon})
    extra = {"curve": {int(h): float(np.mean(first > h)) for h in hs}}
    return EstimateRecord.from_samples(surv, {"horizon": horizon, "dim": theta.dim, "mu": mu.name}, seed,
                                       (time.perf_counter() - t0) * 1e3, extra)


# --------------------------------------------------------------------------
# finite spatial trees: a and h


def _spatial_gw(rng, mu, theta, cap):
    counts = sample_forest_counts(mu, 1, rng, cap, truncate=True)
    par, end = preorder_parents(counts)
    steps = sample_jump(theta, rng, len(counts))
    loc = locations_from_parents(par, steps, np.zeros(theta.dim, np.int64))
    return loc, end > 0


def _a_replica(rng, mu, theta, cap):
    loc, _ = _spatial_gw(rng, mu, theta, cap)
    return float(any_equal_zero(loc, 1) < 0)


def _h_replica(rng, mu, theta, y, cap):
    loc, _ = _spatial_gw(rng, mu, theta, cap)
    return float(not np.any(np.all(loc == -np.asarray(y), axis=1)))


def estimate_a(mu, theta, reps: int, seed: int, cap: int = 1_000_000, workers: int = 1) -> EstimateRecord:
    """a = P(z_u != 0 for every non-root u) for a GW spatial tree."""
    t0 = time.perf_counter()
    x = replicate(_a_replica, reps, seed, (mu, theta, cap), workers)
    return EstimateRecord.from_samples(x, {"dim": theta.dim}, seed, (time.perf_counter() - t0) * 1e3)


def estimate_h(mu, theta, y, reps: int, seed: int, cap: int = 1_000_000, workers: int = 1) -> EstimateRecord:
    """h(y) = P(z_u != -y for every u) for a GW spatial tree."""
    t0 = time.perf_counter()
    x = replicate(_h_replica, reps, seed, (mu, theta, np.asarray(y, np.int64), cap), workers)
    return EstimateRecord.from_samples(x, {"dim": theta.dim, "y": list(map(int, y))}, seed,
                                       (time.perf_counter() - t0) * 1e3)


@dataclass
class HTable:
    """Visit frequencies of GW spatial trees on the box |x|_inf <= L, by batch."""

    theta: JumpDistribution
    L: int
    visits: np.ndarray        # (batches, cells) int32
    trees: np.ndarray         # (batches,)
    a_hits: np.ndarray        # (batches,) trees with a non-root vertex at 0
    truncated: int
    fallback: str = "calibrated"
    green: GreenTable | None = None
    kappa: float = 1.0

    @property
    def batches(self) -> int:
        return len(self.trees)

    def _index(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        side = 2 * self.L + 1
        inside = np.abs(pts).max(axis=1) <= self.L
        idx = np.zeros(len(pts), np.int64)
        p = pts[inside] + self.L
        acc = np.zeros(len(p), np.int64)
        for k in range(pts.shape[1]):
            acc = acc * side + p[:, k]
        idx[inside] = acc
        return idx, inside

    def visit_prob(self, x, batch: int | None = None) -> np.ndarray:
        """P(some vertex sits at x), batch-wise or pooled."""
        pts = np.atleast_2d(np.asarray(x, np.int64))
        idx, inside = self._index(pts)
        out = np.empty(len(pts))
        if batch is None:
            tot = self.visits.sum(axis=0, dtype=np.int64)
            out[inside] = tot[idx[inside]] / self.trees.sum()
        else:
            out[inside] = self.visits[batch, idx[inside]] / self.trees[batch]
        if not inside.all():
            if self.fallback == "error" or self.green is None:
                raise HTableMiss(f"{int((~inside).sum())} points outside the box of radius {self.L}")
            g = self.green(pts[~inside])
            out[~inside] = np.minimum(1.0, (self.kappa if self.fallback == "calibrated" else 1.0) * g)
        return out

    def h(self, y, batch: int | None = None) -> np.ndarray:
        return 1.0 - self.visit_prob(-np.atleast_2d(np.asarray(y, np.int64)), batch)

    def h_all(self, y) -> np.ndarray:
        """h at the points y for every batch (rows 0..B-1) and pooled (row B)."""
        pts = -np.atleast_2d(np.asarray(y, np.int64))
        idx, inside = self._index(pts)
        B = self.batches
        out = np.empty((B + 1, len(pts)))
        v = self.visits[:, idx[inside]]
        out[:B, inside] = v / self.trees[:, None]
        out[B, inside] = v.sum(axis=0) / self.trees.sum()
        if not inside.all():
            if self.fallback == "error" or self.green is None:
                raise HTableMiss(f"{int((~inside).sum())} points outside the box of radius {self.L}")
            g = self.green(pts[~inside])
            out[:, ~inside] = np.minimum(1.0, (self.kappa if self.fallback == "calibrated" else 1.0) * g)
        return 1.0 - out

    def a(self, batch: int | None = None) -> float:
        if batch is None:
            return 1.0 - self.a_hits.sum() / self.trees.sum()
        return 1.0 - self.a_hits[batch] / self.trees[batch]


def _htable_block(rng, mu, theta, L, trees, cap):
    cells = (2 * L + 1) ** theta.dim
    counts = np.zeros(cells, np.int32)
    stamp = np.full(cells, -1, np.int32)
    a_hits = 0
    truncated = 0
    for t in range(trees):
        loc, complete = _spatial_gw(rng, mu, theta, cap)
        truncated += not complete
        if any_equal_zero(loc, 1) >= 0:
            a_hits += 1
        mark_box(loc, L, stamp, counts, t)
    return counts, trees, a_hits, truncated


def build_h_table(mu: OffspringDistribution, theta: JumpDistribution, L: int, trees: int, seed: int,
                  batches: int = 8, cap: int = 10_000_000, fallback: str = "calibrated",
                  green: GreenTable | None = None, workers: int = 1) -> HTable:
    """Estimate visit probabilities on a box from ``trees`` GW spatial trees.

    Outside the box ``fallback`` selects 1 - G ("green", a lower bound on h),
    1 - kappa G with kappa fitted on the outer shell ("calibrated"), or an
    HTableMiss error ("error").
    """
    if fallback not in ("green", "calibrated", "error"):
        raise DomainError(f"unknown fallback {fallback!r}")
    per_batch = -(-trees // batches)
    blocks = replicate(_htable_block, batches, seed, (mu, theta, L, per_batch, cap), workers)
    visits = np.stack([b[0] for b in blocks])
    tab = HTable(theta, L, visits, np.array([b[1] for b in blocks]), np.array([b[2] for b in blocks]),
                 int(sum(b[3] for b in blocks)), fallback, green)
    if green is not None and fallback == "calibrated":
        tab.kappa = shell_ratio(tab, green)
    return tab


def shell_ratio(tab: HTable, green: GreenTable) -> float:
    """Fitted P(visit x) / G(x) over L/2 < |x|_inf <= L."""
    L, d = tab.L, tab.theta.dim
    side = 2 * L + 1
    grid = np.indices((side,) * d).reshape(d, -1).T - L
    sup = np.abs(grid).max(axis=1)
    shell = grid[(sup > L // 2) & (sup <= L)]
    p = tab.visit_prob(shell)
    g = green(shell)
    return float(p.sum() / g.sum())


def phi_values(mu: OffspringDistribution, q: np.ndarray) -> np.ndarray:
    """Phi = sum_k tail(k) q^k for q in [0, 1]."""
    q = np.clip(q, 0.0, 1.0)
    if mu.kind == "geometric":
        return 1.0 / (2.0 - q)
    t = tail_array(mu, mu.support_max)
    return np.polynomial.polynomial.polyval(q, t)


def _log_products(mu, theta, walks, tab, checkpoints):
    """log prod_{j<=J} Phi(-S_j) at the checkpoints: shape (B+1, walks, checkpoints)."""
    reps, jmax, d = walks.shape
    pts = -walks.reshape(-1, d)
    q = np.zeros((tab.batches + 1, len(pts)))
    for v, p in zip(theta.support, theta.probs):
        q += p * tab.h_all(pts + v)
    logphi = np.log(phi_values(mu, q)).reshape(tab.batches + 1, reps, jmax)
    cum = np.cumsum(logphi, axis=2)
    return cum[:, :, np.asarray(checkpoints) - 1]


def _walk_block(rng, theta, jmax):
    steps = sample_jump(theta, rng, jmax)
    return np.cumsum(steps, axis=0)


def estimate_c_formula(mu: OffspringDistribution, theta: JumpDistribution, j_max: int, reps: int, seed: int,
                       h_table: HTable, workers: int = 1, chunk: int = 64) -> EstimateRecord:
    """a * E[prod_{j<=j_max} Phi(-S_j)] with Phi built from the h table.

    The standard error combines walk-to-walk variation with the batch spread
    of the h table.
    """
    t0 = time.perf_counter()
    a_full = h_table.a()
    if j_max == 0:
        a_b = np.array([h_table.a(b) for b in range(h_table.batches)])
        se = float(a_b.std(ddof=1) / math.sqrt(len(a_b))) if len(a_b) > 1 else 0.0
        return EstimateRecord(a_full, se, reps, {"j_max": 0}, seed, (time.perf_counter() - t0) * 1e3)
    cps = sorted({max(1, j_max // 10), j_max})
    prods = []
    outside = 0
    walks_all = replicate(_walk_block, reps, seed, (theta, j_max), workers)
    for s in range(0, reps, chunk):
        w = np.stack(walks_all[s:s + chunk])
        outside += int((np.abs(w).max(axis=2) > h_table.L - theta.radius).sum())
        prods.append(np.exp(_log_products(mu, theta, w, h_table, cps)))
    prods = np.concatenate(prods, axis=1)
    batch_prods = prods[:-1, :, -1]
    prods = prods[-1]
    final = prods[:, -1]
    mean_prod = float(final.mean())
    value = a_full * mean_prod
    # walk noise (a fixed) + table noise (spread of batch estimates over sqrt(batches))
    walk_var = (a_full ** 2) * final.var(ddof=1) / len(final) if len(final) > 1 else 0.0
    batch_est = np.array([h_table.a(b) * batch_prods[b].mean() for b in range(h_table.batches)])
    table_var = batch_est.var(ddof=1) / len(batch_est) if len(batch_est) > 1 else 0.0
    extra = {
        "a": a_full,
        "mean_product": mean_prod,
        "value_at_jmax_over_10": float(a_full * prods[:, 0].mean()),
        "walk_stderr": math.sqrt(walk_var),
        "table_stderr": math.sqrt(table_var),
        "fallback_fraction": outside / float(reps * j_max),
        "fallback": h_table.fallback,
        "kappa": h_table.kappa,
        "h_trees": int(h_table.trees.sum()),
        "h_truncated": h_table.truncated,
    }
    return EstimateRecord(value, math.sqrt(walk_var + table_var), reps, {"j_max": j_max, "dim": theta.dim}, seed,
                          (time.perf_counter() - t0) * 1e3, extra)


# --------------------------------------------------------------------------
# conditioned trees


def _conditioned_replica(rng, mu, theta, n):
    tree = sample_gw_conditioned_size(mu, n + 1, rng)
    return range_of(assign_locations(tree, theta, rng))


def conditioned_range(mu: OffspringDistribution, theta: JumpDistribution, n: int, reps: int, seed: int,
                      workers: int = 1) -> EstimateRecord:
    """Range / n of a spatial GW tree conditioned to have n + 1 vertices."""
    if n < 1:
        raise DomainError("n must be >= 1")
    t0 = time.perf_counter()
    r = np.array(replicate(_conditioned_replica, reps, seed, (mu, theta, n), workers), dtype=float)
    return EstimateRecord.from_samples(r / n, {"n": n, "dim": theta.dim, "mu": mu.name}, seed,
                                       (time.perf_counter() - t0) * 1e3, {"max_range": float(r.max())})


# --------------------------------------------------------------------------
# shift invariance


def gw_size_pmf(mu: OffspringDistribution, nmax: int) -> np.ndarray:
    """P(#T = n) for n <= nmax via P(#T = n) = P(S_n = -1) / n for the walk with steps k - 1."""
    pmf = np.asarray(mu.pmf, float)
    out = np.zeros(nmax + 1)
    width = nmax * (len(pmf) - 1) + nmax + 1
    dist = np.zeros(width + 1)
    off = nmax  # index of level 0
    dist[off] = 1.0
    for n in range(1, nmax + 1):
        new = np.zeros_like(dist)
        for k, q in enumerate(pmf):
            if q == 0 or k - 1 > width:
                continue
            s = k - 1
            if s < 0:
                new[:-1] += q * dist[1:]
            else:
                new[s:] += q * dist[: len(dist) - s]
        dist = new
        out[n] = dist[off - 1] / n
    return out


def invariance_expected(mu: OffspringDistribution) -> tuple[np.ndarray, np.ndarray]:
    """Cell probabilities for (k(T_0), k(T_-1)) on {0,1,2}^2 plus the rest, and for min(#T_0, 10)."""
    joint = np.array([mu.p(a) * tail(mu, b) for a in range(3) for b in range(3)])
    joint = np.append(joint, 1.0 - joint.sum())
    size = gw_size_pmf(mu, 9)[1:]
    size = np.append(size, 1.0 - size.sum())
    return joint, size


def _invariance_replica(rng, mu, theta, shifts, cap):
    sp = SpinePrefix.sample(mu, theta, rng)
    out = []
    done = 0
    try:
        for s in shifts:
            while done < s:
                k = 0
                while True:
                    sp.ensure_subtrees(k + 1)
                    if sp.counts[k][0] >= 1:
                        break
                    k += 1
                sp.first_child_size(k, cap)
                sp = sp.shift()
                done += 1
            out.append(sp.statistic())
    except CapExceeded:
        return None
    return out


def shift_invariance_test(mu: OffspringDistribution, theta: JumpDistribution, samples: int, seed: int,
                          shifts: Sequence[int] = (0, 1, 3), cap: int = 10_000_000, level: float = 0.01,
                          workers: int = 1) -> dict:
    """Chi-square of the statistic vector against its exact law after 0, 1 and 3 shifts."""
    t0 = time.perf_counter()
    res = replicate(_invariance_replica, samples, seed, (mu, theta, tuple(shifts), cap), workers)
    kept = [r for r in res if r is not None]
    joint_p, size_p = invariance_expected(mu)
    report = {"samples": samples, "censored": samples - len(kept), "checks": {}}
    ok = True
    for i, s in enumerate(shifts):
        st = np.array([r[i] for r in kept])
        cell = np.where((st[:, 0] <= 2) & (st[:, 1] <= 2), 3 * np.minimum(st[:, 0], 2) + np.minimum(st[:, 1], 2), 9)
        obs_j = np.bincount(cell, minlength=10)
        obs_s = np.bincount(st[:, 2] - 1, minlength=10)
        cj = stats.chisquare(obs_j, joint_p * len(st))
        cs = stats.chisquare(obs_s, size_p * len(st))
        report["checks"][s] = {"joint_p": float(cj.pvalue), "size_p": float(cs.pvalue)}
        ok &= bool(cj.pvalue > level and cs.pvalue > level)
    report["passed"] = ok
    report["elapsed_ms"] = (time.perf_counter() - t0) * 1e3
    return report
