"""The discrete snake driven by the jump law theta.

The lifetime is a simple random walk.  Given the lifetime path, the head at
time k sits X_k = zeta_k - 2 min zeta jumps away from the starting head, which
turns head-return probabilities into a one-dimensional sum.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats
from scipy.special import gammaln

from ._kernels import count_distinct, excursion_heads, free_snake_heads
from .analytics import GreenTable, return_probabilities
from .distributions import JumpDistribution, sample_jump, sample_jump_index
from .errors import DomainError, TooFewHits
from .estimates import EstimateRecord
from .parallel import replicate


# --------------------------------------------------------------------------
# state and kernel


@dataclass
class SnakeState:
    """Lifetime and path of the snake.

    The path is the initial path for lifetimes <= ``floor`` (the running
    minimum of the lifetime) and the ``stack`` of appended values above it.
    Initial values are drawn lazily and memoised in ``init``: ``init[i]`` is
    w(zeta_0 - i), distributed as -S_i.
    """

    theta: JumpDistribution
    zeta: int
    zeta0: int
    floor: int
    init: list = field(default_factory=list)
    stack: list = field(default_factory=list)
    rng: np.random.Generator | None = None

    @classmethod
    def start(cls, theta: JumpDistribution, rng: np.random.Generator | None = None, m: int = 0,
              init_path=None) -> "SnakeState":
        st = cls(theta, m, m, m, [np.zeros(theta.dim, np.int64)], [], rng)
        if init_path is not None:
            st.init = [np.asarray(v, np.int64) for v in init_path]
        return st

    def value(self, j: int) -> np.ndarray:
        """w(j) for j <= zeta."""
        if j > self.zeta:
            raise DomainError("w(j) undefined above the lifetime")
        if j > self.floor:
            return self.stack[j - self.floor - 1]
        i = self.zeta0 - j
        while len(self.init) <= i:
            if self.rng is None:
                raise DomainError("initial path exhausted")
            self.init.append(self.init[-1] - sample_jump(self.theta, self.rng))
        return self.init[i]

    @property
    def head(self) -> np.ndarray:
        return self.value(self.zeta)


def snake_step(state: SnakeState, rng: np.random.Generator, erase: bool | None = None, jump=None) -> SnakeState:
    """Erase the endpoint or append head + theta-jump, each with probability 1/2."""
    if erase is None:
        erase = bool(rng.random() < 0.5)
    if erase:
        if state.stack:
            state.stack.pop()
        else:
            state.floor -= 1
            state.value(state.floor)
        state.zeta -= 1
    else:
        x = sample_jump(state.theta, rng) if jump is None else np.asarray(jump, np.int64)
        state.stack.append(state.head + x)
        state.zeta += 1
    return state


# --------------------------------------------------------------------------
# exact head law


def _check_pitman(k: int, m: int):
    if k < 0 or m < 0 or m > k or (k + m) % 2:
        raise DomainError(f"P(X_{k} = {m}) needs 0 <= m <= k with k + m even")


def pitman_pmf(k: int, m: int, exact: bool = False):
    """P(zeta_k - 2 min zeta = m) = 2(m+1)^2/(k+m+2) P_0(Y_k = m)."""
    _check_pitman(k, m)
    if exact:
        return Fraction(2 * (m + 1) ** 2, k + m + 2) * Fraction(math.comb(k, (k + m) // 2), 2 ** k)
    logp = gammaln(k + 1) - gammaln((k + m) // 2 + 1) - gammaln((k - m) // 2 + 1) - k * math.log(2.0)
    return 2.0 * (m + 1) ** 2 / (k + m + 2) * math.exp(logp)


def pitman_vector(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Support and probabilities of X_k in floating point."""
    m = np.arange(k % 2, k + 1, 2)
    logp = gammaln(k + 1) - gammaln((k + m) // 2 + 1) - gammaln((k - m) // 2 + 1) - k * math.log(2.0)
    return m, 2.0 * (m + 1) ** 2 / (k + m + 2) * np.exp(logp)


def pitman_enumerate(k: int) -> dict[int, Fraction]:
    """Law of X_k by enumerating all 2^k lifetime paths."""
    if k == 0:
        return {0: Fraction(1)}
    codes = np.arange(2 ** k, dtype=np.int64)
    steps = ((codes[:, None] >> np.arange(k)) & 1).astype(np.int8) * 2 - 1
    z = np.cumsum(steps, axis=1, dtype=np.int16)
    lo = np.minimum(z.min(axis=1), 0)
    counts = np.bincount(z[:, -1] - 2 * lo)
    # integer path counts, so the law is exact
    return {int(x): Fraction(int(c), 2 ** k) for x, c in enumerate(counts) if c}


def return_probabilities_exact(theta: JumpDistribution, M: int) -> list[Fraction]:
    """p_m(0) as fractions for m <= M."""
    if theta.kind == "srw":
        d = theta.dim
        n1 = [math.comb(j, j // 2) if j % 2 == 0 else 0 for j in range(M + 1)]
        counts = n1[:]
        for dd in range(2, d + 1):
            counts = [sum(math.comb(m, j) * n1[j] * counts[m - j] for j in range(m + 1)) for m in range(M + 1)]
        return [Fraction(c, (2 * d) ** m) for m, c in enumerate(counts)]
    probs = [Fraction(p).limit_denominator(10 ** 12) for p in theta.probs]
    dist = {(0,) * theta.dim: Fraction(1)}
    out = [Fraction(1)]
    for _ in range(M):
        new: dict = {}
        for x, px in dist.items():
            for v, p in zip(theta.support, probs):
                y = tuple(int(a + b) for a, b in zip(x, v))
                new[y] = new.get(y, Fraction(0)) + px * p
        dist = new
        out.append(dist.get((0,) * theta.dim, Fraction(0)))
    return out


def head_return_exact(theta: JumpDistribution, k: int, exact: bool = False, p0=None):
    """P(head_k = 0) = sum_m P(X_k = m) p_m(0) under the law started from the trivial path."""
    if k < 0:
        raise DomainError("k must be >= 0")
    if exact:
        p = p0 or return_probabilities_exact(theta, k)
        return sum((pitman_pmf(k, m, True) * p[m] for m in range(k % 2, k + 1, 2)), Fraction(0))
    p = return_probabilities(theta, k) if p0 is None else p0
    m, w = pitman_vector(k)
    return float(np.dot(w, p[m]))


def head_return_table(theta: JumpDistribution, ks) -> dict[int, float]:
    """k * P(head_k = 0) for each k, sharing one return-probability table."""
    ks = sorted(ks)
    p = return_probabilities(theta, ks[-1])
    return {k: k * head_return_exact(theta, k, p0=p) for k in ks}


# --------------------------------------------------------------------------
# free snake


def lifetime_steps(rng: np.random.Generator, n: int) -> np.ndarray:
    return (2 * rng.integers(0, 2, n, dtype=np.int8) - 1).astype(np.int8)


def free_snake_run(theta: JumpDistribution, n: int, rng: np.random.Generator, init_path: np.ndarray | None = None):
    """Lifetime steps and heads W_0..W_n of the snake from the trivial head 0.

    The initial path w(-i) = -S_i is drawn only as deep as the lifetime goes.
    """
    ud = lifetime_steps(rng, n)
    zeta = np.cumsum(ud, dtype=np.int64)
    depth = int(max(0, -zeta.min(initial=0)))
    ups = int((ud > 0).sum())
    jumps = sample_jump_index(theta, rng, ups)
    if init_path is None:
        back = sample_jump(theta, rng, depth)
        init_path = np.vstack([np.zeros((1, theta.dim), np.int64), -np.cumsum(back, axis=0)])
    elif len(init_path) < depth + 1:
        raise DomainError("initial path shorter than the lifetime depth")
    heads = free_snake_heads(ud, np.ascontiguousarray(init_path[: depth + 1]), jumps, theta.support)
    return ud, heads


def _no_return_head_replica(rng, theta, n, p_stop, step_cap):
    if p_stop is None:
        ud, heads = free_snake_run(theta, n, rng)
        hit = np.flatnonzero(~heads[1:].any(axis=1))
        return float(len(hit) == 0)
    # run until the lifetime first reaches -p_stop
    block = 1 << 14
    ud_all = []
    level = 0
    total = 0
    while True:
        ud = lifetime_steps(rng, block)
        z = level + np.cumsum(ud, dtype=np.int64)
        hit = np.flatnonzero(z == -p_stop)
        if len(hit):
            ud_all.append(ud[: hit[0] + 1])
            break
        ud_all.append(ud)
        level = int(z[-1])
        total += block
        if total >= step_cap:
            return float("nan")
        block = min(block * 2, 1 << 22)
    ud = np.concatenate(ud_all)
    jumps = sample_jump_index(theta, rng, int((ud > 0).sum()))
    back = sample_jump(theta, rng, p_stop)
    init = np.vstack([np.zeros((1, theta.dim), np.int64), -np.cumsum(back, axis=0)])
    heads = free_snake_heads(ud, init, jumps, theta.support)
    return float(not (~heads[1:].any(axis=1)).any())


def estimate_no_return_head(theta: JumpDistribution, n: int, reps: int, seed: int, p_stop: int | None = None,
                            step_cap: int = 50_000_000, workers: int = 1) -> EstimateRecord:
    """P(head_k != 0 for 1 <= k <= n), or up to tau_p when ``p_stop`` is given.

    ``extra['scaled']`` is the estimate times log n (or log p).
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    t0 = time.perf_counter()
    x = np.array(replicate(_no_return_head_replica, reps, seed, (theta, n, p_stop, step_cap), workers))
    censored = int(np.isnan(x).sum())
    x = x[~np.isnan(x)]
    rec = EstimateRecord.from_samples(x, {"n": n, "p_stop": p_stop, "dim": theta.dim}, seed,
                                      (time.perf_counter() - t0) * 1e3, {"censored": censored})
    scale = math.log(p_stop if p_stop else n) if (p_stop or n) > 1 else float("nan")
    rec.extra["scaled"] = rec.value * scale
    rec.extra["scaled_stderr"] = rec.stderr * scale
    return rec


def _free_range_replica(rng, theta, n, checkpoints):
    ud, heads = free_snake_run(theta, n, rng)
    from ._kernels import running_distinct

    r = running_distinct(heads)
    return r[np.asarray(checkpoints)]


def free_range(theta: JumpDistribution, n: int, reps: int, seed: int, checkpoints=None, workers: int = 1) -> EstimateRecord:
    """(log n / n) R_n with R_n = #{W_0, ..., W_n} for the free snake."""
    if n < 2:
        raise DomainError("n must be >= 2")
    t0 = time.perf_counter()
    cps = sorted(set(checkpoints or []) | {n})
    r = np.array(replicate(_free_range_replica, reps, seed, (theta, n, cps), workers), dtype=float)
    scaled = r * (np.log(cps) / np.asarray(cps, float))
    rec = EstimateRecord.from_samples(scaled[:, -1], {"n": n, "dim": theta.dim}, seed,
                                      (time.perf_counter() - t0) * 1e3)
    rec.extra.update({
        "second_moment": float(np.mean(scaled[:, -1] ** 2)),
        "variance": float(scaled[:, -1].var(ddof=1)) if reps > 1 else 0.0,
        "checkpoints": cps,
        "mean_by_checkpoint": scaled.mean(axis=0).tolist(),
        "target": 4 * math.pi ** 2 * theta.sigma2 ** 2,
    })
    return rec


# --------------------------------------------------------------------------
# excursions


@dataclass(frozen=True, eq=False)
class ExcursionSample:
    n: int
    zeta_path: np.ndarray
    head_path: np.ndarray


def uniform_dyck_steps(n: int, rng: np.random.Generator) -> np.ndarray:
    """+-1 steps of the contour of a uniform plane tree with n+1 vertices."""
    steps = np.concatenate([np.ones(n, np.int8), -np.ones(n + 1, np.int8)])
    rng.shuffle(steps)
    walk = np.cumsum(steps, dtype=np.int64)
    m = int(np.argmin(walk)) + 1
    rot = np.concatenate([steps[m:], steps[:m]])
    return rot[:-1]


def sample_excursion(n: int, theta: JumpDistribution, rng: np.random.Generator) -> ExcursionSample:
    if n < 1:
        raise DomainError("n must be >= 1")
    ud = uniform_dyck_steps(n, rng)
    jumps = sample_jump_index(theta, rng, n)
    heads = excursion_heads(ud, jumps, theta.support)
    zeta = np.concatenate([[0], np.cumsum(ud, dtype=np.int64)])
    return ExcursionSample(n, zeta, heads)


def excursion_range(sample: ExcursionSample) -> int:
    return count_distinct(sample.head_path)


def _excursion_replica(rng, theta, n):
    return excursion_range(sample_excursion(n, theta, rng))


def excursion_range_estimate(theta: JumpDistribution, n: int, reps: int, seed: int, workers: int = 1) -> EstimateRecord:
    """(log n / n) R_n for the excursion of a uniform (n+1)-vertex tree."""
    t0 = time.perf_counter()
    r = np.array(replicate(_excursion_replica, reps, seed, (theta, n), workers), dtype=float)
    scaled = r * math.log(n) / n
    rec = EstimateRecord.from_samples(scaled, {"n": n, "dim": theta.dim}, seed, (time.perf_counter() - t0) * 1e3)
    rec.extra["target"] = 8 * math.pi ** 2 * theta.sigma2 ** 2
    rec.extra["raw_mean"] = float(r.mean())
    return rec


# --------------------------------------------------------------------------
# symmetry under the swap of the initial and final paths


def bowker(table: np.ndarray) -> tuple[float, int, float]:
    """Bowker statistic for symmetry of a square contingency table."""
    stat = 0.0
    dof = 0
    n = table.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            s = table[i, j] + table[j, i]
            if s > 0:
                stat += (table[i, j] - table[j, i]) ** 2 / s
                dof += 1
    p = float(stats.chi2.sf(stat, dof)) if dof else 1.0
    return float(stat), dof, p


def _symmetry_replica(rng, theta, k):
    st = SnakeState.start(theta, rng)
    lo = 0
    for _ in range(k):
        snake_step(st, rng)
        lo = min(lo, st.zeta)
    if st.head.any():
        return None
    i, j = -lo, st.zeta - lo
    # first steps of W_0 and of W_k, both read backwards from the tip
    while len(st.init) < 2:
        st.init.append(st.init[-1] - sample_jump(theta, rng))
    first0 = st.init[1] - st.init[0]
    firstk = st.value(st.zeta - 1) - st.head
    return i, j, first0, firstk


def symmetry_check(theta: JumpDistribution, k: int, reps: int, seed: int, min_hits: int = 100,
                   level: float = 0.01, workers: int = 1) -> dict:
    """Swap test on replicas with head_k = 0.

    Compares the joint law of (-min zeta, zeta_k - min zeta) and of the pair of
    first steps of the initial and final paths with its transpose.
    """
    t0 = time.perf_counter()
    res = [r for r in replicate(_symmetry_replica, reps, seed, (theta, k), workers) if r is not None]
    if len(res) < min_hits:
        raise TooFewHits(f"only {len(res)} replicas with head_k = 0")
    ij = np.array([(r[0], r[1]) for r in res])
    size = int(ij.max()) + 1
    t_ij = np.zeros((size, size))
    np.add.at(t_ij, (ij[:, 0], ij[:, 1]), 1)
    lookup = {tuple(v): i for i, v in enumerate(theta.support)}
    steps = np.array([(lookup[tuple(r[2])], lookup[tuple(r[3])]) for r in res])
    t_st = np.zeros((len(lookup), len(lookup)))
    np.add.at(t_st, (steps[:, 0], steps[:, 1]), 1)
    s1, d1, p1 = bowker(t_ij)
    s2, d2, p2 = bowker(t_st)
    return {
        "hits": len(res),
        "hit_rate": len(res) / reps,
        "depth_stat": s1, "depth_dof": d1, "depth_p": p1,
        "step_stat": s2, "step_dof": d2, "step_p": p2,
        "passed": bool(p1 > level and p2 > level),
        "elapsed_ms": (time.perf_counter() - t0) * 1e3,
    }


# --------------------------------------------------------------------------
# Green identity along a frozen initial path


def _green_identity_replica(rng, theta, init_path, m, step_cap):
    block = 1 << 12
    level = 0
    total = 0
    parts = []
    while True:
        ud = lifetime_steps(rng, block)
        z = level + np.cumsum(ud, dtype=np.int64)
        hit = np.flatnonzero(z == -m)
        if len(hit):
            parts.append(ud[: hit[0] + 1])
            break
        parts.append(ud)
        level = int(z[-1])
        total += block
        if total >= step_cap:
            return float("nan")
        block = min(block * 2, 1 << 20)
    ud = np.concatenate(parts)
    jumps = sample_jump_index(theta, rng, int((ud > 0).sum()))
    heads = free_snake_heads(ud, init_path, jumps, theta.support)
    # visits at times 0 .. tau_m - 1
    return float((~heads[:-1].any(axis=1)).sum())


def green_identity_check(theta: JumpDistribution, init_path: np.ndarray, m: int, reps: int, seed: int,
                         table: GreenTable, step_cap: int = 10_000_000, workers: int = 1) -> dict:
    """Mean head visits to 0 before tau_m against 2 sum_{j<m} G(-w(-j))."""
    init_path = np.ascontiguousarray(np.asarray(init_path, np.int64)[: m + 1])
    if len(init_path) < m + 1:
        raise DomainError("initial path must hold w(0), ..., w(-m)")
    x = np.array(replicate(_green_identity_replica, reps, seed, (theta, init_path, m, step_cap), workers))
    censored = int(np.isnan(x).sum())
    x = x[~np.isnan(x)]
    rhs = 2.0 * float(table(-init_path[:m]).sum())
    se = float(x.std(ddof=1) / math.sqrt(len(x)))
    return {"lhs": float(x.mean()), "lhs_stderr": se, "rhs": rhs, "censored": censored,
            "z": (float(x.mean()) - rhs) / se if se > 0 else float("inf")}
