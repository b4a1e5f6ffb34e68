"""Critical branching random walk started from p particles at the origin."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.stats import norm

from ._kernels import PointSet, pack_keys
from .distributions import JumpDistribution, OffspringDistribution, sample_jump, sample_offspring
from .errors import DomainError
from .parallel import replicate

DEFAULT_PROGENY_CAP = 100_000_000


@dataclass(frozen=True, eq=False)
class PointMeasure:
    """Finite point measure on Z^d: distinct points with positive counts."""

    points: np.ndarray
    mult: np.ndarray

    def __post_init__(self):
        if len(self.points) != len(self.mult):
            raise DomainError("points and counts differ in length")
        if len(self.mult) and self.mult.min() <= 0:
            raise DomainError("counts must be positive")

    @classmethod
    def empty(cls, dim: int) -> "PointMeasure":
        return cls(np.zeros((0, dim), np.int64), np.zeros(0, np.int64))

    @classmethod
    def from_particles(cls, pos: np.ndarray) -> "PointMeasure":
        pos = np.asarray(pos, np.int64)
        if len(pos) == 0:
            return cls(pos.reshape(0, pos.shape[1]), np.zeros(0, np.int64))
        keys = pack_keys(pos)
        if keys is None:
            pts, mult = np.unique(pos, axis=0, return_counts=True)
        else:
            _, first, mult = np.unique(keys, return_index=True, return_counts=True)
            pts = pos[first]
        return cls(pts, mult.astype(np.int64))

    @classmethod
    def at_origin(cls, p: int, dim: int) -> "PointMeasure":
        return cls(np.zeros((1, dim), np.int64), np.array([p], np.int64))

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def total(self) -> int:
        return int(self.mult.sum())

    @property
    def counts(self) -> dict:
        return {tuple(int(v) for v in x): int(c) for x, c in zip(self.points, self.mult)}

    def particles(self) -> np.ndarray:
        return np.repeat(self.points, self.mult, axis=0)


def _next_particles(pos: np.ndarray, mu: OffspringDistribution, theta: JumpDistribution,
                    rng: np.random.Generator) -> np.ndarray:
    kids = sample_offspring(mu, rng, len(pos))
    child = np.repeat(pos, kids, axis=0)
    if len(child):
        child += sample_jump(theta, rng, len(child))
    return child


def brw_step(state: PointMeasure, mu: OffspringDistribution, theta: JumpDistribution,
             rng: np.random.Generator) -> PointMeasure:
    """One generation: each particle is replaced by mu-many children, each displaced by theta."""
    if state.total == 0:
        return PointMeasure.empty(state.dim)
    return PointMeasure.from_particles(_next_particles(state.particles(), mu, theta, rng))


@dataclass
class BrwRunResult:
    range: int
    progeny: int
    generations: int
    truncated: bool


def _offspring_total(mu: OffspringDistribution, z: int, rng: np.random.Generator) -> int:
    """Sum of z iid mu-samples."""
    if mu.kind == "geometric":
        # number of failures before z successes at rate 1/2
        return int(rng.negative_binomial(z, 0.5))
    ks = np.arange(len(mu.pmf))
    return int(rng.multinomial(z, mu.pmf / mu.pmf.sum()) @ ks)


def brw_run(p: int, mu: OffspringDistribution, theta: JumpDistribution | None, rng: np.random.Generator,
            progeny_cap: int = DEFAULT_PROGENY_CAP, initial: np.ndarray | None = None) -> BrwRunResult:
    """Run to extinction or until the progeny exceeds ``progeny_cap``.

    With ``theta=None`` only generation sizes are simulated and ``range`` is 0.
    ``initial`` gives the p starting positions (default: all at the origin).
    """
    if p < 1:
        raise DomainError("p must be >= 1")
    if theta is None:
        z, total, gen = p, p, 0
        while z > 0:
            if total > progeny_cap:
                return BrwRunResult(0, total, gen, True)
            z = _offspring_total(mu, z, rng)
            total += z
            gen += 1
        return BrwRunResult(0, total, gen - 1 if gen else 0, False)
    if initial is None:
        pos = np.zeros((p, theta.dim), np.int64)
    else:
        pos = np.asarray(initial, np.int64)
        if len(pos) != p:
            raise DomainError("initial positions must number p")
    seen = PointSet(theta.dim, 1 << 10)
    seen.add(pos)
    total = p
    gen = 0
    while True:
        pos = _next_particles(pos, mu, theta, rng)
        if len(pos) == 0:
            return BrwRunResult(len(seen), total, gen, False)
        gen += 1
        total += len(pos)
        seen.add(pos)
        if total > progeny_cap:
            return BrwRunResult(len(seen), total, gen, True)


def j_cdf(s):
    """P(J <= s) for the hitting time of 1 by standard Brownian motion."""
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise DomainError("j_cdf needs s > 0")
    out = 2.0 * norm.sf(1.0 / np.sqrt(s))
    return float(out) if out.ndim == 0 else out


def j_density(s):
    s = np.asarray(s, dtype=float)
    return (2 * np.pi * s ** 3) ** -0.5 * np.exp(-0.5 / s)


def scaled_j_cdf(s, sigma2_mu: float):
    """CDF of sigma_mu^{-2} J."""
    return j_cdf(np.asarray(s, float) * sigma2_mu)


def progeny_law(mu: OffspringDistribution, p: int, nmax: int) -> np.ndarray:
    """P(N = n) for n <= nmax, from the walk with steps k - 1 killed on reaching -p."""
    pmf = np.asarray(mu.pmf, float)
    out = np.zeros(nmax + 1)
    # dist[h] = P(walk at height h - p... ) indexed by distance above the killing level
    top = nmax * (len(pmf) - 1) + p + 1
    dist = np.zeros(top + 1)
    dist[p] = 1.0
    for n in range(1, nmax + 1):
        new = np.zeros_like(dist)
        for k, q in enumerate(pmf):
            if q == 0:
                continue
            shift = k - 1
            if shift < 0:
                new[:-1] += q * dist[1:]
            else:
                new[shift:] += q * dist[: len(dist) - shift]
        out[n] = new[0]
        new[0] = 0.0
        dist = new
    return out


def _brw_replica(rng, p, mu, theta, cap):
    r = brw_run(p, mu, theta, rng, cap)
    return r.range, r.progeny, r.generations, r.truncated


def brw_replicas(p: int, mu: OffspringDistribution, theta: JumpDistribution | None, reps: int, seed: int,
                 progeny_cap: int = DEFAULT_PROGENY_CAP, workers: int = 1) -> list[BrwRunResult]:
    return [BrwRunResult(*r) for r in replicate(_brw_replica, reps, seed, (p, mu, theta, progeny_cap), workers)]


def ks_progeny(runs: list[BrwRunResult], p: int, sigma2_mu: float) -> dict:
    """KS distance of N/p^2 to sigma_mu^{-2} J.

    Truncated runs are placed above every untruncated value; the empirical CDF
    below the cap is exact, so the supremum is taken over that region and the
    tail gap at the cap.
    """
    x = np.sort([r.progeny / p ** 2 for r in runs if not r.truncated])
    n = len(runs)
    t = n - len(x)
    f = scaled_j_cdf(x, sigma2_mu)
    i = np.arange(1, len(x) + 1)
    d = max(np.max(i / n - f), np.max(f - (i - 1) / n)) if len(x) else 1.0
    if t:
        cap_s = min(r.progeny for r in runs if r.truncated) / p ** 2
        d = max(d, abs(scaled_j_cdf(cap_s, sigma2_mu) - len(x) / n))
    pval = float(stats.kstwo.sf(d, n))
    return {"ks": float(d), "p_value": pval, "n": n, "truncated": t,
            "critical_01": float(stats.kstwo.isf(0.01, n)), "passed": bool(pval > 0.01)}


def ratio_experiment(p: int, mu: OffspringDistribution, theta: JumpDistribution, reps: int, seed: int,
                     progeny_cap: int = 10_000_000, workers: int = 1) -> dict:
    """Per-replica (R/N, N/p^2) with truncated runs excluded and counted."""
    t0 = time.perf_counter()
    runs = brw_replicas(p, mu, theta, reps, seed, progeny_cap, workers)
    ok = [r for r in runs if not r.truncated]
    ratio = np.array([r.range / r.progeny for r in ok])
    nscaled = np.array([r.progeny / p ** 2 for r in ok])
    q1, q3 = np.percentile(ratio, [25, 75]) if len(ratio) else (np.nan, np.nan)
    out = {
        "p": p, "dim": theta.dim, "reps": reps, "truncated": len(runs) - len(ok),
        "ratio": ratio, "n_scaled": nscaled,
        "ratio_mean": float(ratio.mean()) if len(ratio) else float("nan"),
        "ratio_iqr": float(q3 - q1),
        "runs": runs,
        "elapsed_ms": (time.perf_counter() - t0) * 1e3,
    }
    if theta.dim == 4:
        out["log_ratio_mean"] = float(math.log(p) * out["ratio_mean"])
        out["log_ratio_target"] = 4 * math.pi ** 2 * theta.sigma2 ** 2 * mu.variance
    return out


def criticality_check(mu: OffspringDistribution, theta: JumpDistribution, steps: int, seed: int,
                      start: int = 20) -> dict:
    """Mean of total(next) / total(current) over independent brw_step transitions."""
    rng = np.random.default_rng(seed)
    st = PointMeasure.at_origin(start, theta.dim)
    ratios = np.array([brw_step(st, mu, theta, rng).total / start for _ in range(steps)])
    return {"mean": float(ratios.mean()), "stderr": float(ratios.std(ddof=1) / math.sqrt(steps))}
