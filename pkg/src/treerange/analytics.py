"""Exact lattice computations for the jump walk S and the lifetime walk.

Transition probabilities come from box convolution; return probabilities and
Green functions of simple random walk use exact one-dimensional reductions,
which reach step counts the box method cannot.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.special import gammaln, ive

from ._kernels import convolve_step
from .distributions import JumpDistribution, OffspringDistribution, tail_array
from .errors import BoxBudgetExceeded, DomainError, NonTransient, ParityError
from .estimates import EstimateRecord
from .parallel import replicate

DEFAULT_MAX_CELLS = 30_000_000


@dataclass(frozen=True, eq=False)
class LatticeFunction:
    dim: int
    radius: int
    values: np.ndarray
    outside_model: Callable | None = None

    def at(self, x) -> float:
        x = np.asarray(x, dtype=np.int64)
        if np.abs(x).max(initial=0) > self.radius:
            if self.outside_model is None:
                return 0.0
            return float(self.outside_model(x[None, :])[0])
        return float(self.values[tuple(x + self.radius)])

    def total(self) -> float:
        return math.fsum(self.values.ravel())

    def csv_rows(self) -> Iterator[str]:
        L = self.radius
        for idx in itertools.product(range(2 * L + 1), repeat=self.dim):
            v = self.values[idx]
            if v != 0.0:
                yield ",".join(str(i - L) for i in idx) + f",{v!r}"


# --------------------------------------------------------------------------
# convolution powers


def _step(arr: np.ndarray, theta: JumpDistribution) -> np.ndarray:
    R = theta.radius
    d = theta.dim
    out_shape = np.array([s + 2 * R for s in arr.shape], np.int64)
    stride = np.ones(d, np.int64)
    for j in range(d - 2, -1, -1):
        stride[j] = stride[j + 1] * out_shape[j + 1]
    offsets = (np.asarray(theta.support, np.int64) + R) @ stride
    out = np.zeros(int(out_shape.prod()))
    convolve_step(arr.ravel(), np.array(arr.shape, np.int64), out, out_shape, offsets,
                  np.asarray(theta.probs, float))
    return out.reshape(tuple(out_shape))


def iter_step_pmf(theta: JumpDistribution, kmax: int, max_cells: int = DEFAULT_MAX_CELLS) -> Iterator[tuple[int, np.ndarray]]:
    """Yield (k, p_k) on the box of radius k*R for k = 0..kmax."""
    R = theta.radius
    if (2 * kmax * R + 1) ** theta.dim > max_cells:
        raise BoxBudgetExceeded(f"box of radius {kmax * R} in d={theta.dim} exceeds {max_cells} cells")
    arr = np.ones((1,) * theta.dim)
    yield 0, arr
    for k in range(1, kmax + 1):
        arr = _step(arr, theta)
        yield k, arr


def step_pmf_power(theta: JumpDistribution, k: int, max_cells: int = DEFAULT_MAX_CELLS) -> LatticeFunction:
    """Exact law of S_k on the box of radius k*R."""
    if k < 0:
        raise DomainError("k must be >= 0")
    arr = None
    for _, arr in iter_step_pmf(theta, k, max_cells):
        pass
    return LatticeFunction(theta.dim, k * theta.radius, arr)


def convolution_mass_drift(theta: JumpDistribution, kmax: int, max_cells: int = DEFAULT_MAX_CELLS,
                           symmetry: bool = True) -> tuple[float, float]:
    """Largest |sum p_k - 1| and largest asymmetry |p_k(x) - p_k(-x)| over k <= kmax."""
    mass = sym = 0.0
    for _, arr in iter_step_pmf(theta, kmax, max_cells):
        # pairwise row sums then an exact fold; error ~ 1e-15 at 4e6 cells
        rows = arr.reshape(arr.shape[0], -1).sum(axis=1)
        mass = max(mass, abs(math.fsum(rows) - 1.0))
        if symmetry and theta.symmetric:
            flipped = arr[(slice(None, None, -1),) * theta.dim]
            sym = max(sym, float(np.abs(arr - flipped).max()))
    return mass, sym


# --------------------------------------------------------------------------
# return probabilities


def _srw1_return(M: int) -> np.ndarray:
    """log P(Y_j = 0) for the one-dimensional simple walk, -inf on odd j."""
    j = np.arange(M + 1)
    out = np.full(M + 1, -np.inf)
    ev = j[j % 2 == 0]
    out[ev] = gammaln(ev + 1) - 2 * gammaln(ev // 2 + 1) - ev * math.log(2.0)
    return out


def _srw_return_probs(d: int, M: int) -> np.ndarray:
    # Coordinate splitting: the number of steps spent in the last coordinate is
    # Bin(m, 1/d); the remaining d-1 coordinates move as SRW in dimension d-1.
    q1 = _srw1_return(M)
    logp = q1.copy()
    lf = gammaln(np.arange(M + 1) + 1.0)
    for dd in range(2, d + 1):
        a, b = math.log(1.0 / dd), math.log((dd - 1.0) / dd)
        new = np.full(M + 1, -np.inf)
        with np.errstate(invalid="ignore"):
            for m in range(M + 1):
                j = np.arange(m + 1)
                t = lf[m] - lf[j] - lf[m - j] + j * a + (m - j) * b + q1[: m + 1] + logp[m - j]
                top = t.max()
                if top > -np.inf:
                    new[m] = top + math.log(np.exp(t - top).sum())
        logp = new
    return np.exp(logp)


def return_probabilities(theta: JumpDistribution, M: int, max_cells: int = DEFAULT_MAX_CELLS, method: str = "auto") -> np.ndarray:
    """p_m(0) = P(S_m = 0) for m = 0..M."""
    if M < 0:
        raise DomainError("M must be >= 0")
    if method == "auto":
        method = "split" if theta.kind == "srw" else "dp"
    if method == "split":
        if theta.kind != "srw":
            raise DomainError("coordinate splitting needs simple random walk")
        return _srw_return_probs(theta.dim, M)
    # Box DP cropped to the points that can still return to 0.
    R, d = theta.radius, theta.dim
    peak = (M // 2) * R
    if (2 * peak + 2 * R + 1) ** d > max_cells:
        raise BoxBudgetExceeded(f"return-probability DP to M={M} needs radius {peak} in d={d}")
    out = np.zeros(M + 1)
    arr = np.ones((1,) * d)
    out[0] = 1.0
    for m in range(1, M + 1):
        arr = _step(arr, theta)
        rad = (arr.shape[0] - 1) // 2
        keep = min(rad, (M - m) * R)
        if keep < rad:
            arr = arr[(slice(rad - keep, rad + keep + 1),) * d]
            rad = keep
        out[m] = arr[(rad,) * d]
    return out


# --------------------------------------------------------------------------
# Green function


@dataclass(frozen=True)
class GreenValue:
    value: float
    K: int
    tail_bound: float
    method: str


def green_asymptotic(theta: JumpDistribution, x) -> np.ndarray:
    """Leading term Gamma(d/2-1)/(2 pi^{d/2}) det(M)^{-1/2} (x.M^{-1}x)^{(2-d)/2}."""
    d = theta.dim
    x = np.atleast_2d(np.asarray(x, dtype=float))
    minv = np.linalg.inv(theta.covariance)
    q = np.einsum("ni,ij,nj->n", x, minv, x)
    c = math.gamma(d / 2 - 1) / (2 * math.pi ** (d / 2)) / math.sqrt(np.linalg.det(theta.covariance))
    with np.errstate(divide="ignore"):
        return c * q ** ((2 - d) / 2)


def _check_transient(theta: JumpDistribution):
    if theta.dim <= 2:
        raise NonTransient(f"jump walk in d={theta.dim} is recurrent")
    if not theta.centered:
        raise DomainError("Green function evaluation assumes a centred jump law")


# Nodes in u = log t for the continuous-time representation of the SRW Green function.
_U_MIN, _T_MAX, _NODES = -30.0, 1e8, 2400


def _bessel_nodes(nodes: int = _NODES):
    u = np.linspace(_U_MIN, math.log(_T_MAX), nodes)
    w = np.full(nodes, u[1] - u[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    t = np.exp(u)
    return t, w * t


def _srw_green_orbits(d: int, orbits: np.ndarray, nodes: int = _NODES, chunk: int = 2000) -> np.ndarray:
    # G(x) = int_0^inf prod_i e^{-t/d} I_{x_i}(t/d) dt for the rate-one continuous-time walk.
    t, w = _bessel_nodes(nodes)
    nmax = int(orbits.max(initial=0))
    table = ive(np.arange(nmax + 1)[:, None], t[None, :] / d)
    tail = (d / (2 * math.pi)) ** (d / 2) * _T_MAX ** (1 - d / 2) / (d / 2 - 1)
    out = np.empty(len(orbits))
    for s in range(0, len(orbits), chunk):
        block = orbits[s:s + chunk]
        prod = table[block[:, 0]].copy()
        for i in range(1, d):
            prod *= table[block[:, i]]
        out[s:s + chunk] = prod @ w + tail
    return out


def green(theta: JumpDistribution, x, eps: float = 1e-8, max_cells: int = DEFAULT_MAX_CELLS, kmax: int = 10_000) -> GreenValue:
    """G(x) = sum_k p_k(x) with an error bound."""
    _check_transient(theta)
    if eps <= 0:
        raise DomainError("eps must be positive")
    x = np.asarray(x, dtype=np.int64)
    d = theta.dim
    if theta.kind == "srw":
        orb = np.sort(np.abs(x))[None, :]
        v_fine = _srw_green_orbits(d, orb, _NODES)[0]
        v_coarse = _srw_green_orbits(d, orb, _NODES // 2)[0]
        r2 = float(x @ x)
        tail = (d / (2 * math.pi)) ** (d / 2) * _T_MAX ** (1 - d / 2) / (d / 2 - 1)
        bound = abs(v_fine - v_coarse) + tail * (d * r2 + d) / _T_MAX + 1e-15
        if bound > eps:
            raise BoxBudgetExceeded(f"quadrature bound {bound:.2e} exceeds eps")
        return GreenValue(float(v_fine), int(_T_MAX), float(bound), "bessel")
    total = 0.0
    prev_max = 1.0
    R = theta.radius
    for k, arr in iter_step_pmf(theta, kmax, max_cells):
        rad = k * R
        if np.abs(x).max(initial=0) <= rad:
            total += arr[tuple(x + rad)]
        cur_max = float(arr.max())
        if k >= 2:
            # sum_{j>k} max p_j <= 2 * max p_k * k^{d/2} * k^{1-d/2} / (d/2 - 1)
            m = max(cur_max, prev_max)
            bound = 2.0 * m * k / (d / 2 - 1)
            if bound < eps:
                return GreenValue(total, k, bound, "convolution")
        prev_max = cur_max
    raise BoxBudgetExceeded(f"tail bound not below {eps} after {kmax} steps")


class GreenTable:
    """G on the box |x|_inf <= radius with the asymptotic form outside."""

    def __init__(self, theta: JumpDistribution, radius: int, max_cells: int = DEFAULT_MAX_CELLS, dp_steps: int | None = None):
        _check_transient(theta)
        self.theta = theta
        self.dim = d = theta.dim
        self.radius = L = int(radius)
        if theta.kind == "srw":
            if (L + 1) ** d > max_cells:
                raise BoxBudgetExceeded("Green table too large")
            orbits = np.array(list(itertools.combinations_with_replacement(range(L + 1), d)), dtype=np.int64)
            vals = _srw_green_orbits(d, orbits)
            dense = np.empty((L + 1,) * d)
            for perm in itertools.permutations(range(d)):
                dense[tuple(orbits[:, p] for p in perm)] = vals
            self._abs = True
            self.values = dense
        else:
            K = dp_steps or max(4 * L, 50)
            R = theta.radius
            acc = np.zeros((2 * L + 1,) * d)
            for k, arr in iter_step_pmf(theta, K, max_cells):
                rad = k * R
                if rad <= L:
                    acc[(slice(L - rad, L + rad + 1),) * d] += arr
                else:
                    acc += arr[(slice(rad - L, rad + L + 1),) * d]
            # Remaining steps contribute about sum_{k>K} LLT(0) uniformly on the box.
            c = (2 * math.pi) ** (-d / 2) / math.sqrt(np.linalg.det(theta.covariance))
            acc += c * K ** (1 - d / 2) / (d / 2 - 1)
            self._abs = False
            self.values = acc
        self.values.setflags(write=False)
        self.corrupted = False

    @property
    def origin(self) -> float:
        return float(self.values[(0,) * self.dim] if self._abs else self.values[(self.radius,) * self.dim])

    def inside(self, pts: np.ndarray) -> np.ndarray:
        return np.abs(pts).max(axis=1) <= self.radius

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.int64))
        out = np.empty(len(pts))
        ins = self.inside(pts)
        if ins.any():
            p = pts[ins]
            idx = np.abs(p) if self._abs else p + self.radius
            out[ins] = self.values[tuple(idx.T)]
        if not ins.all():
            out[~ins] = green_asymptotic(self.theta, pts[~ins])
        return out

    def with_corruption(self, point, factor: float = 2.0) -> "GreenTable":
        """Copy with one entry scaled, used as a negative control."""
        clone = object.__new__(GreenTable)
        clone.__dict__.update(self.__dict__)
        vals = self.values.copy()
        idx = np.abs(np.asarray(point)) if self._abs else np.asarray(point) + self.radius
        vals[tuple(idx)] *= factor
        clone.values = vals
        clone.corrupted = True
        return clone

    def csv_rows(self) -> Iterator[str]:
        L, d = self.radius, self.dim
        for x in itertools.product(range(-L, L + 1), repeat=d):
            yield ",".join(map(str, x)) + f",{self(np.array([x]))[0]!r}"


def harmonic_defect(table: GreenTable, radius: int = 10) -> float:
    """max |G(x) - 1{x=0} - sum_y theta(y) G(x-y)| over |x|_inf <= radius."""
    th = table.theta
    pts = np.array(list(itertools.product(range(-radius, radius + 1), repeat=th.dim)), dtype=np.int64)
    rhs = (np.abs(pts).sum(axis=1) == 0).astype(float)
    for v, p in zip(th.support, th.probs):
        rhs += p * table(pts - v)
    return float(np.abs(table(pts) - rhs).max())


# --------------------------------------------------------------------------
# lifetime walk identities


def _check_parity(k: int, m: int, odd: bool):
    if ((k + m) % 2 == 1) != odd:
        raise ParityError(f"k={k}, m={m} has the wrong parity")


def _kemperman_hits(m: int, kmax: int) -> list[int]:
    """Number of +-1 paths from m first reaching -1 at step k, k = 0..kmax."""
    counts = [0] * (m + kmax + 3)
    counts[m] = 1
    hits = [0] * (kmax + 1)
    for k in range(1, kmax + 1):
        hits[k] = counts[0]
        new = [0] * len(counts)
        for h in range(len(counts) - 1):
            c = counts[h]
            if c:
                new[h + 1] += c
                if h > 0:
                    new[h - 1] += c
        counts = new
    return hits


def _walk_prob(k: int, m: int) -> Fraction:
    """P_0(Y_k = m) exactly."""
    if abs(m) > k or (k + m) % 2:
        return Fraction(0)
    return Fraction(math.comb(k, (k + m) // 2), 2 ** k)


def kemperman_check(m: int, k: int) -> tuple[Fraction, Fraction]:
    """(P_m(T = k), ((m+1)/k) P_0(Y_k = m+1)), both exact."""
    if m < 0 or k <= m:
        raise DomainError("need k > m >= 0")
    _check_parity(k, m, odd=True)
    lhs = Fraction(_kemperman_hits(m, k)[k], 2 ** k)
    rhs = Fraction(m + 1, k) * _walk_prob(k, m + 1)
    return lhs, rhs


def kemperman_grid(m_max: int, k_max: int) -> list[tuple[int, int, Fraction, Fraction]]:
    rows = []
    for m in range(m_max + 1):
        hits = _kemperman_hits(m, k_max)
        for k in range(m + 1, k_max + 1):
            if (k + m) % 2 == 1:
                rows.append((m, k, Fraction(hits[k], 2 ** k), Fraction(m + 1, k) * _walk_prob(k, m + 1)))
    return rows


def llt_compare(k: int, m: int) -> float:
    """Relative error of sqrt(2/(pi k)) exp(-m^2/(2k)) against the exact binomial."""
    if abs(m) > k or k <= 0:
        raise DomainError("need |m| <= k, k >= 1")
    _check_parity(k, m, odd=False)
    exact = float(_walk_prob(k, m))
    main = math.sqrt(2.0 / (math.pi * k)) * math.exp(-m * m / (2.0 * k))
    return abs(main / exact - 1.0)


# --------------------------------------------------------------------------
# Monte Carlo along the jump walk


def sample_walk(theta: JumpDistribution, m: int, rng: np.random.Generator, include_origin: bool = True) -> np.ndarray:
    """S_0..S_m (or S_1..S_m) as an (m+1, d) int64 array."""
    from .distributions import sample_jump

    steps = sample_jump(theta, rng, m)
    walk = np.cumsum(steps, axis=0)
    if include_origin:
        walk = np.vstack([np.zeros((1, theta.dim), dtype=np.int64), walk])
    return walk


def _green_sum_replica(rng, theta, m, table, chunk=1 << 18):
    total = 0.0
    pos = np.zeros(theta.dim, dtype=np.int64)
    total += table(pos[None, :])[0]
    done = 0
    while done < m:
        n = min(chunk, m - done)
        w = sample_walk(theta, n, rng, include_origin=False) + pos
        total += table(w).sum()
        pos = w[-1]
        done += n
    return total


def green_sum_mean_exact(theta: JumpDistribution, m: int, j_exact: int = 4000) -> float:
    """E[sum_{k<=m} G(S_k)] for SRW, exact up to an LLT tail beyond j_exact."""
    # E G(S_k) = sum_{j>=k} p_j(0) = r_k.
    if theta.kind != "srw" or theta.dim != 4:
        raise DomainError("closed-form mean implemented for SRW in d=4")
    p = return_probabilities(theta, j_exact)
    c = 1.0 / (4 * math.pi ** 2 * theta.sigma2 ** 2)
    # parity-averaged LLT: p_j(0) ~ 2c/j^2 on even j, so sum_{j>J} p_j ~ c/J
    tail_J = c / (j_exact + 1)
    r = tail_J + np.cumsum(p[::-1])[::-1]
    lim = min(m, j_exact)
    total = math.fsum(r[: lim + 1])
    if m > j_exact:
        # r_k ~ c/k for k > j_exact
        total += c * (math.log(m + 0.5) - math.log(j_exact + 0.5))
    return total


def green_sum_along_walk(theta: JumpDistribution, m: int, reps: int, seed: int, table: GreenTable | None = None,
                         alphas: Sequence[float] = (0.1, 0.2), workers: int = 1) -> EstimateRecord:
    """Distribution of sum_{k<=m} G(S_k) / log m."""
    if m < 2:
        raise DomainError("m must be >= 2")
    t0 = time.perf_counter()
    table = table or GreenTable(theta, 20)
    sums = np.array(replicate(_green_sum_replica, reps, seed, (theta, m, table), workers))
    logm = math.log(m)
    scaled = sums / logm
    c = 1.0 / (4 * math.pi ** 2 * theta.sigma2 ** 2) if theta.dim == 4 else float("nan")
    extra = {
        "target": c,
        "second_moment": float(np.mean(scaled ** 2)),
        "min_sum_over_G0": float(sums.min() / table.origin),
    }
    for a in alphas:
        extra[f"frac_dev_{a:g}"] = float(np.mean(np.abs(sums - c * logm) >= a * logm))
    return EstimateRecord.from_samples(scaled, {"m": m, "dim": theta.dim}, seed,
                                       (time.perf_counter() - t0) * 1e3, extra)


def _suffcond_factors_log(mu: OffspringDistribution, s: np.ndarray) -> np.ndarray:
    # (1 - g(1-s))/s = sum_k tail(k) (1-s)^k for s in (0,1]; (1-mu(0))/s for s >= 1.
    out = np.empty_like(s)
    big = s >= 1.0
    out[big] = np.log((1.0 - mu.p(0)) / s[big])
    small = ~big
    r = 1.0 - s[small]
    if mu.kind == "geometric":
        out[small] = -np.log1p(s[small])
    else:
        t = tail_array(mu, mu.support_max)
        out[small] = np.log(np.polynomial.polynomial.polyval(r, t))
    return out


def _suffcond_replica(rng, mu, theta, j_max, table, checkpoints, alpha):
    walk = sample_walk(theta, j_max, rng, include_origin=False)
    g = table(walk)
    logf = np.cumsum(_suffcond_factors_log(mu, g))
    out = logf[np.asarray(checkpoints) - 1]
    if alpha is not None:
        stab = np.cumsum(g ** (alpha - 1.0))[np.asarray(checkpoints) - 1]
        return out, stab
    return out, None


def suffcond_diagnostic(mu: OffspringDistribution, theta: JumpDistribution, j_max: int, reps: int, seed: int,
                        table: GreenTable | None = None, j_from: int | None = None, alpha: float | None = None,
                        tol: float = 0.05, workers: int = 1) -> EstimateRecord:
    """Log partial products of (1 - g((1-G(S_j))_+))/G(S_j) along sampled walks.

    ``value`` is the median change of the log product between ``j_from`` and
    ``j_max``; a median change above ``-tol`` counts as stabilised.
    """
    _check_transient(theta)
    t0 = time.perf_counter()
    table = table or GreenTable(theta, 20)
    j_from = j_from or max(1, j_max // 10)
    checkpoints = sorted({int(round(v)) for v in np.geomspace(1, j_max, 25)} | {j_from, j_max})
    res = replicate(_suffcond_replica, reps, seed, (mu, theta, j_max, table, checkpoints, alpha), workers)
    logs = np.array([r[0] for r in res])
    ia, ib = checkpoints.index(j_from), checkpoints.index(j_max)
    drift = logs[:, ib] - logs[:, ia]
    med = float(np.median(drift))
    extra = {
        "j_from": j_from,
        "median_drift": med,
        "mean_drift": float(drift.mean()),
        "stabilized": bool(med > -tol),
        "checkpoints": checkpoints,
        "median_log_product": np.median(logs, axis=0).tolist(),
    }
    if alpha is not None:
        stab = np.array([r[1] for r in res])
        extra["stable_sum_drift_median"] = float(np.median(stab[:, ib] - stab[:, ia]))
    rec = EstimateRecord.from_samples(drift, {"j_max": j_max, "dim": theta.dim, "mu": mu.name}, seed,
                                      (time.perf_counter() - t0) * 1e3, extra)
    rec.value = med
    return rec


# --------------------------------------------------------------------------
# Brownian check


def _bessel_replica(rng, r, t, dt, marginals):
    n = int(math.ceil((t - r) / dt))
    h = (t - r) / n
    b0 = rng.normal(0.0, math.sqrt(r), 4)
    path = b0 + np.cumsum(rng.normal(0.0, math.sqrt(h), (n, 4)), axis=0)
    inv = 1.0 / np.concatenate([[b0 @ b0], np.einsum("ij,ij->i", path, path)])
    integral = h * (inv.sum() - 0.5 * (inv[0] + inv[-1]))
    marg = [2.0 * s / float(np.sum(rng.normal(0.0, math.sqrt(s), 4) ** 2)) for s in marginals]
    return integral, marg


def bessel_log_integral(r: float, t: float, dt: float, reps: int, seed: int,
                        marginals: Sequence[float] = (1.0, 4.0, 16.0), workers: int = 1) -> EstimateRecord:
    """int_r^t ds / rho_s^2 for 4-d Brownian motion from 0, against log(t/r)/2."""
    if not 1.0 <= r < t:
        raise DomainError("need 1 <= r < t")
    if dt > 1e-3 * r:
        raise DomainError("dt must be <= 1e-3 r")
    t0 = time.perf_counter()
    res = replicate(_bessel_replica, reps, seed, (r, t, dt, tuple(marginals)), workers)
    ints = np.array([a for a, _ in res])
    marg = np.array([b for _, b in res])
    extra = {"target": 0.5 * math.log(t / r)}
    for j, s in enumerate(marginals):
        extra[f"marginal_{s:g}"] = float(marg[:, j].mean())
        extra[f"marginal_{s:g}_stderr"] = float(marg[:, j].std(ddof=1) / math.sqrt(len(marg))) if len(marg) > 1 else 0.0
    rec = EstimateRecord.from_samples(ints, {"r": r, "t": t, "dt": dt}, seed, (time.perf_counter() - t0) * 1e3, extra)
    rec.extra["samples"] = ints
    return rec


# --------------------------------------------------------------------------
# second-moment bound


def _signed_perm_count(v: Sequence[int]) -> int:
    n = len(v)
    perms = math.factorial(n)
    for val in set(v):
        perms //= math.factorial(list(v).count(val))
    return perms * 2 ** sum(1 for a in v if a != 0)


def phi_cs(table: GreenTable, radii: Sequence[int], box: int = 64) -> dict[int, float]:
    """Phi(x) = sum_y G(y) G(x-y)^2 at x = r e_1, summed over |y|_inf <= box."""
    d = table.dim
    if table.theta.kind != "srw":
        raise DomainError("orbit reduction assumes simple random walk")
    orbits = list(itertools.combinations_with_replacement(range(box + 1), d - 1))
    mult = np.array([_signed_perm_count(o) for o in orbits], dtype=float)
    orb = np.array(orbits, dtype=np.int64)
    rmax = max(radii)
    a = np.arange(-box - rmax, box + rmax + 1)
    H = np.empty((len(a), len(orb)))
    for i, ai in enumerate(a):
        pts = np.concatenate([np.full((len(orb), 1), ai), orb], axis=1)
        H[i] = table(pts)
    off = box + rmax
    y1 = np.arange(-box, box + 1)
    out = {}
    for r in radii:
        A = H[y1 + off]
        B = H[r - y1 + off]
        out[r] = float(((A * B * B).sum(axis=0) * mult).sum())
    return out


def cs_bound_fit(table: GreenTable, radii: Sequence[int] = (5, 10, 20, 40), box: int = 64) -> dict[int, float]:
    """Fitted C = Phi(x) |x|^2 / (1 + log |x|) per radius."""
    phi = phi_cs(table, radii, box)
    return {r: v * r * r / (1.0 + math.log(r)) for r, v in phi.items()}
