"""Offspring laws on Z_+ and jump laws on Z^d.

Both distribution types are immutable after validation.  Samplers never hold
hidden state: every call takes an explicit ``numpy.random.Generator``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from sympy import Matrix
from sympy.matrices.normalforms import hermite_normal_form, smith_normal_form
from sympy.polys.domains import ZZ

from .errors import Degenerate, DomainError, NotAdapted, NotCritical, NotNormalized

SUM_TOL = 1e-12
MEAN_TOL = 1e-10
# Geometric pmf stored up to this index; mass beyond is 2^-65, below double resolution.
GEOMETRIC_TABLE = 64


@dataclass(frozen=True, eq=False)
class OffspringDistribution:
    pmf: np.ndarray
    mean: float
    variance: float
    name: str
    kind: str = "table"
    cap: int | None = None
    _cdf: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self._cdf is None:
            object.__setattr__(self, "_cdf", np.cumsum(self.pmf))
        self.pmf.setflags(write=False)

    @property
    def support_max(self) -> int:
        return len(self.pmf) - 1

    def p(self, k: int) -> float:
        if self.kind == "geometric":
            return 2.0 ** (-(k + 1)) if k >= 0 else 0.0
        return float(self.pmf[k]) if 0 <= k < len(self.pmf) else 0.0

    def tail(self, k: int) -> float:
        return tail(self, k)

    def gen_fn(self, r):
        return gen_fn(self, r)

    def sample(self, rng: np.random.Generator, size=None):
        return sample_offspring(self, rng, size)


@dataclass(frozen=True, eq=False)
class JumpDistribution:
    dim: int
    support: np.ndarray
    probs: np.ndarray
    symmetric: bool
    centered: bool
    covariance: np.ndarray
    sigma2: float
    period: int
    name: str
    kind: str = "table"
    _cdf: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self._cdf is None:
            object.__setattr__(self, "_cdf", np.cumsum(self.probs))
        for arr in (self.support, self.probs, self.covariance):
            arr.setflags(write=False)

    @property
    def radius(self) -> int:
        """Largest sup-norm of a support vector."""
        return int(np.abs(self.support).max())

    def sample(self, rng: np.random.Generator, size=None):
        return sample_jump(self, rng, size)


# --------------------------------------------------------------------------
# offspring


def make_geometric_critical() -> OffspringDistribution:
    """Critical geometric law mu(k) = 2^-(k+1)."""
    k = np.arange(GEOMETRIC_TABLE + 1)
    pmf = 0.5 ** (k + 1)
    return OffspringDistribution(pmf=pmf, mean=1.0, variance=2.0, name="geometric", kind="geometric")


def make_offspring(pmf_entries: Iterable[Sequence[float]], name: str = "table", cap: int | None = None) -> OffspringDistribution:
    """Validate a finite table of ``(k, p)`` pairs."""
    entries = [(int(k), float(p)) for k, p in pmf_entries]
    if not entries:
        raise NotNormalized("empty pmf")
    for k, p in entries:
        if k < 0 or p < 0 or not math.isfinite(p):
            raise DomainError(f"invalid entry ({k}, {p})")
    kmax = max(k for k, _ in entries)
    pmf = np.zeros(kmax + 1)
    for k, p in entries:
        pmf[k] += p
    total = math.fsum(pmf)
    if abs(total - 1.0) > SUM_TOL:
        raise NotNormalized(f"pmf sums to {total!r}")
    ks = np.arange(kmax + 1)
    mean = math.fsum(ks * pmf)
    if kmax >= 1 and pmf[1] == 1.0:
        raise Degenerate("mu(1) = 1")
    if abs(mean - 1.0) > MEAN_TOL:
        raise NotCritical(f"mean is {mean!r}")
    variance = math.fsum(ks * ks * pmf) - mean * mean
    return OffspringDistribution(pmf=pmf, mean=mean, variance=variance, name=name, cap=cap)


def make_truncated_offspring(weights, cap: int, name: str = "truncated") -> OffspringDistribution:
    """Critical law built from unnormalised weights w(k), k < cap.

    Mass not carried by ``weights`` sits at ``cap``; criticality is restored
    by mixing with delta_0 (mean > 1) or delta_2 (mean < 1).
    """
    w = np.array([max(float(weights(k)), 0.0) for k in range(cap)])
    if w.sum() <= 0:
        raise NotNormalized("weights carry no mass")
    pmf = np.zeros(cap + 1)
    pmf[:cap] = w / w.sum()
    m = float(np.arange(cap + 1) @ pmf)
    if m > 1:
        lam = 1.0 - 1.0 / m
        pmf *= 1.0 - lam
        pmf[0] += lam
    elif m < 1:
        lam = (1.0 - m) / (2.0 - m)
        pmf *= 1.0 - lam
        pmf[2] += lam
    pmf /= math.fsum(pmf)
    return make_offspring(enumerate(pmf), name=name, cap=cap)


def make_stable_offspring(alpha: float, cap: int = 10_000) -> OffspringDistribution:
    """Truncated law with tail mu([k, inf)) ~ k^-alpha, alpha in (1, 2)."""
    if not 1.0 < alpha < 2.0:
        raise DomainError("alpha must lie in (1, 2)")
    return make_truncated_offspring(
        lambda k: 0.0 if k < 2 else k ** (-1.0 - alpha), cap, name=f"stable{alpha:g}"
    )


def tail(mu: OffspringDistribution, k: int) -> float:
    """mu([k+1, inf))."""
    if k < 0:
        return 1.0
    if mu.kind == "geometric":
        return 2.0 ** (-(k + 1))
    if k + 1 >= len(mu.pmf):
        return 0.0
    return math.fsum(mu.pmf[k + 1:])


def tail_array(mu: OffspringDistribution, kmax: int) -> np.ndarray:
    """tail(mu, k) for k = 0..kmax."""
    if mu.kind == "geometric":
        return 0.5 ** (np.arange(kmax + 1) + 1.0)
    out = np.zeros(kmax + 1)
    rev = np.cumsum(mu.pmf[::-1])[::-1]  # rev[j] = mu([j, inf))
    n = min(kmax + 1, len(rev) - 1)
    out[:n] = rev[1:n + 1]
    return out


def gen_fn(mu: OffspringDistribution, r):
    """Generating function g(r) = sum_k mu(k) r^k on [0, 1]."""
    r_arr = np.asarray(r, dtype=float)
    if np.any((r_arr < 0) | (r_arr > 1)) or np.any(np.isnan(r_arr)):
        raise DomainError("generating function defined on [0, 1]")
    if mu.kind == "geometric":
        out = 1.0 / (2.0 - r_arr)
    else:
        out = np.polynomial.polynomial.polyval(r_arr, mu.pmf)
    return float(out) if np.ndim(out) == 0 else out


def tail_series(mu: OffspringDistribution, r, kmax: int) -> np.ndarray:
    """Partial sums sum_{k<=kmax} tail(k) r^k (checked against (1-g)/(1-r))."""
    t = tail_array(mu, kmax)
    return np.polynomial.polynomial.polyval(np.asarray(r, dtype=float), t)


def sample_offspring(mu: OffspringDistribution, rng: np.random.Generator, size=None):
    if mu.kind == "geometric":
        out = rng.geometric(0.5, size=size) - 1
    else:
        u = rng.random(size)
        out = np.searchsorted(mu._cdf, u, side="right")
        out = np.minimum(out, len(mu.pmf) - 1)
    return int(out) if size is None else out.astype(np.int64)


def sample_tail(mu: OffspringDistribution, rng: np.random.Generator, size=None):
    """Samples from the law n -> mu([n+1, inf)) (sums to 1 by criticality)."""
    if mu.kind == "geometric":
        out = rng.geometric(0.5, size=size) - 1
        return int(out) if size is None else out.astype(np.int64)
    t = tail_array(mu, len(mu.pmf) - 1)
    cdf = np.cumsum(t)
    u = rng.random(size) * cdf[-1]
    out = np.minimum(np.searchsorted(cdf, u, side="right"), len(t) - 1)
    return int(out) if size is None else out.astype(np.int64)


# --------------------------------------------------------------------------
# jumps


def _exact_fraction(p: float) -> Fraction:
    return Fraction(p)


def adaptedness_check(support: np.ndarray) -> tuple[int, ...]:
    """Certificate that the support generates Z^d.

    Returns the Smith invariant factors (all 1) of the matrix whose columns are
    the support vectors together with their pairwise differences.  Raises
    ``NotAdapted`` carrying the Hermite form otherwise.
    """
    support = np.atleast_2d(np.asarray(support, dtype=np.int64))
    if support.size == 0:
        raise DomainError("empty support")
    d = support.shape[1]
    cols = [tuple(v) for v in support]
    cols += [tuple(a - b) for a, b in itertools.combinations(support, 2)]
    mat = Matrix(d, len(cols), lambda i, j: int(cols[j][i]))
    snf = smith_normal_form(mat, domain=ZZ)
    factors = tuple(abs(int(snf[i, i])) for i in range(min(d, snf.shape[1])))
    if len(factors) < d or any(f != 1 for f in factors):
        try:
            hnf = hermite_normal_form(mat)
            hnf_rows = tuple(tuple(int(x) for x in hnf.row(i)) for i in range(hnf.rows))
        except Exception:  # sympy rejects some rank-deficient shapes
            hnf_rows = None
        err = NotAdapted(factors)
        err.hermite_form = hnf_rows
        raise err
    return factors


def _period(support: np.ndarray) -> int:
    """2 when every support vector has a.x odd for a common a in {0,1}^d."""
    d = support.shape[1]
    for a in itertools.product((0, 1), repeat=d):
        if not any(a):
            continue
        if np.all((support @ np.array(a)) % 2 == 1):
            return 2
    return 1


def make_jump(support, probs, name: str = "table", kind: str = "table", check_adapted: bool = True) -> JumpDistribution:
    support = np.atleast_2d(np.asarray(support, dtype=np.int64))
    probs = np.asarray(probs, dtype=float)
    if support.shape[0] != probs.shape[0]:
        raise DomainError("support and probabilities differ in length")
    if np.any(probs < 0):
        raise DomainError("negative probability")
    keep = probs > 0
    support, probs = support[keep], probs[keep]
    if len({tuple(v) for v in support}) != len(support):
        raise DomainError("support vectors must be distinct")
    if abs(math.fsum(probs) - 1.0) > SUM_TOL:
        raise NotNormalized(f"jump probabilities sum to {math.fsum(probs)!r}")
    d = support.shape[1]
    if check_adapted:
        adaptedness_check(support)
    lookup = {tuple(v): p for v, p in zip(support, probs)}
    symmetric = all(lookup.get(tuple(-v)) == p for v, p in zip(support, probs))
    fr = [_exact_fraction(p) for p in probs]
    mean_exact = [sum(f * int(v[i]) for f, v in zip(fr, support)) for i in range(d)]
    centered = all(m == 0 for m in mean_exact)
    mean = support.T @ probs
    cov = (support.T * probs) @ support - np.outer(mean, mean)
    det = float(np.linalg.det(cov))
    sigma2 = det ** (1.0 / d) if det > 0 else 0.0
    return JumpDistribution(
        dim=d, support=support, probs=probs, symmetric=symmetric, centered=centered,
        covariance=cov, sigma2=sigma2, period=_period(support), name=name, kind=kind,
    )


def make_jump_srw(d: int) -> JumpDistribution:
    """Simple random walk on Z^d: +-e_i with probability 1/(2d) each."""
    if d < 1:
        raise DomainError("dimension must be >= 1")
    eye = np.eye(d, dtype=np.int64)
    support = np.concatenate([eye, -eye])
    probs = np.full(2 * d, 1.0 / (2 * d))
    return make_jump(support, probs, name=f"srw{d}", kind="srw")


def make_jump_delta(vector) -> JumpDistribution:
    """Deterministic jump; not adapted, used for fixtures only."""
    v = np.atleast_2d(np.asarray(vector, dtype=np.int64))
    return make_jump(v, [1.0], name="delta", check_adapted=False)


def sample_jump_index(theta: JumpDistribution, rng: np.random.Generator, size=None):
    if theta.kind == "srw":
        out = rng.integers(0, 2 * theta.dim, size=size)
    else:
        out = np.searchsorted(theta._cdf, rng.random(size), side="right")
        out = np.minimum(out, len(theta.probs) - 1)
    return int(out) if size is None else out.astype(np.int64)


def sample_jump(theta: JumpDistribution, rng: np.random.Generator, size=None):
    idx = sample_jump_index(theta, rng, size)
    return theta.support[idx].copy()


def recompute_sigma2(theta: JumpDistribution) -> float:
    mean = theta.support.T @ theta.probs
    cov = (theta.support.T * theta.probs) @ theta.support - np.outer(mean, mean)
    return float(np.linalg.det(cov)) ** (1.0 / theta.dim)


def offspring_from_config(block: dict) -> OffspringDistribution:
    kind = block.get("kind")
    if kind == "geometric":
        return make_geometric_critical()
    if kind == "table":
        return make_offspring(block["pmf"])
    raise DomainError(f"unknown offspring kind {kind!r}")


def jump_from_config(block: dict) -> JumpDistribution:
    kind = block.get("kind")
    if kind == "srw":
        return make_jump_srw(int(block["dim"]))
    if kind == "table":
        support = [s for s, _ in block["support"]]
        probs = [p for _, p in block["support"]]
        theta = make_jump(support, probs)
        if "dim" in block and int(block["dim"]) != theta.dim:
            raise DomainError("dim does not match support vectors")
        return theta
    raise DomainError(f"unknown jump kind {kind!r}")
