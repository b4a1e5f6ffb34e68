"""Numba kernels shared by the samplers."""
from __future__ import annotations

import numpy as np
from numba import njit

EMPTY = np.iinfo(np.int64).min


@njit(cache=True)
def preorder_parents(counts):
    """Parent index of every vertex of a (possibly truncated) preorder.

    Returns (parents, end) where ``end`` is the number of vertices in the
    first complete tree, or -1 when the sequence stops before the tree closes.
    """
    n = counts.shape[0]
    parents = np.full(n, -1, np.int64)
    stack = np.empty(64, np.int64)
    rem = np.empty(64, np.int64)
    sp = 0
    end = -1
    for i in range(n):
        if i > 0:
            if sp == 0:
                end = i
                break
            parents[i] = stack[sp - 1]
            rem[sp - 1] -= 1
            if rem[sp - 1] == 0:
                sp -= 1
        c = counts[i]
        if c > 0:
            if sp == stack.shape[0]:
                stack = np.concatenate((stack, np.empty(sp, np.int64)))
                rem = np.concatenate((rem, np.empty(sp, np.int64)))
            stack[sp] = i
            rem[sp] = c
            sp += 1
    else:
        if sp == 0:
            end = n
    return parents, end


@njit(cache=True)
def locations_from_parents(parents, steps, root):
    n = parents.shape[0]
    d = root.shape[0]
    loc = np.empty((n, d), np.int64)
    for k in range(d):
        loc[0, k] = root[k]
    for i in range(1, n):
        p = parents[i]
        for k in range(d):
            loc[i, k] = loc[p, k] + steps[i, k]
    return loc


@njit(cache=True)
def forest_fill(out, pos, counts, cp, jumps, jp, support, stack_loc, stack_rem, sp):
    """Continue a preorder traversal of a forest hanging from the stack.

    Each new vertex is attached to the top of the stack, takes the next jump
    and the next offspring count.  Stops when ``out`` is full, the forest is
    exhausted (sp == 0), a pool runs dry, or the stack is full.
    Returns (pos, cp, jp, sp).
    """
    d = out.shape[1]
    m = out.shape[0]
    cap = stack_rem.shape[0]
    while pos < m and sp > 0:
        if cp >= counts.shape[0] or jp >= jumps.shape[0] or sp >= cap:
            break
        t = sp - 1
        j = jumps[jp]
        jp += 1
        for k in range(d):
            out[pos, k] = stack_loc[t, k] + support[j, k]
        stack_rem[t] -= 1
        if stack_rem[t] == 0:
            sp -= 1
        c = counts[cp]
        cp += 1
        if c > 0:
            for k in range(d):
                stack_loc[sp, k] = out[pos, k]
            stack_rem[sp] = c
            sp += 1
        pos += 1
    return pos, cp, jp, sp


# ---------------------------------------------------------------- hashing


@njit(cache=True)
def _hash_row(row, mask):
    h = np.uint64(1469598103934665603)
    for k in range(row.shape[0]):
        h ^= np.uint64(row[k] & 0xFFFFFFFFFFFF)
        h *= np.uint64(1099511628211)
        h ^= h >> np.uint64(29)
    return np.int64(h & np.uint64(mask))


@njit(cache=True)
def hashset_insert(table, used, n_used, pts, new_flags):
    """Insert rows of ``pts``; new_flags[i] = 1 if row i was not present.

    Linear probing; ``table`` has a power-of-two number of rows and the caller
    keeps the load below one half.  Returns the updated element count.
    """
    mask = table.shape[0] - 1
    d = pts.shape[1]
    for i in range(pts.shape[0]):
        h = _hash_row(pts[i], mask)
        while True:
            if not used[h]:
                used[h] = True
                for k in range(d):
                    table[h, k] = pts[i, k]
                n_used += 1
                new_flags[i] = 1
                break
            same = True
            for k in range(d):
                if table[h, k] != pts[i, k]:
                    same = False
                    break
            if same:
                new_flags[i] = 0
                break
            h = (h + 1) & mask
    return n_used


class PointSet:
    """Growable visited set of lattice points."""

    def __init__(self, dim: int, capacity: int = 1 << 16):
        cap = 1
        while cap < 2 * capacity:
            cap <<= 1
        self.dim = dim
        self.table = np.zeros((cap, dim), np.int64)
        self.used = np.zeros(cap, np.bool_)
        self.size = 0

    def _grow(self, need: int):
        cap = self.table.shape[0]
        while 2 * need > cap:
            cap <<= 1
        old = self.table[self.used]
        self.table = np.zeros((cap, self.dim), np.int64)
        self.used = np.zeros(cap, np.bool_)
        self.size = 0
        if len(old):
            self.size = hashset_insert(self.table, self.used, 0, old, np.empty(len(old), np.int8))

    def add(self, pts: np.ndarray) -> np.ndarray:
        """Insert points; returns int8 flags marking first occurrences."""
        pts = np.ascontiguousarray(pts, dtype=np.int64)
        if 2 * (self.size + len(pts)) > self.table.shape[0]:
            self._grow(self.size + len(pts))
        flags = np.empty(len(pts), np.int8)
        self.size = hashset_insert(self.table, self.used, self.size, pts, flags)
        return flags

    def __len__(self):
        return self.size


def pack_keys(pts: np.ndarray):
    """Mixed-radix int64 keys, or None if the bounding box does not fit."""
    pts = np.asarray(pts, dtype=np.int64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) == 0:
        return np.empty(0, np.int64)
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo + 1
    total = 1
    for s in span:
        total *= int(s)
    if total >= 2 ** 62:
        return None
    radix = np.ones(pts.shape[1], np.int64)
    for k in range(pts.shape[1] - 2, -1, -1):
        radix[k] = radix[k + 1] * span[k + 1]
    return (pts - lo) @ radix


def count_distinct(pts: np.ndarray) -> int:
    keys = pack_keys(pts)
    if keys is None:
        return len(np.unique(np.asarray(pts), axis=0))
    return len(np.unique(keys))


def running_distinct(pts: np.ndarray) -> np.ndarray:
    """R_k = number of distinct rows among pts[:k], k = 1..len(pts)."""
    keys = pack_keys(pts)
    if keys is None:
        _, first = np.unique(np.asarray(pts), axis=0, return_index=True)
    else:
        _, first = np.unique(keys, return_index=True)
    flags = np.zeros(len(pts), np.int64)
    flags[first] = 1
    return np.cumsum(flags)


# ---------------------------------------------------------------- h-table marks


@njit(cache=True)
def mark_box(locs, L, stamp, counts, tree_id):
    """Count each in-box cell at most once per tree (cells indexed by x+L)."""
    d = locs.shape[1]
    side = 2 * L + 1
    for i in range(locs.shape[0]):
        idx = 0
        inside = True
        for k in range(d):
            v = locs[i, k]
            if v < -L or v > L:
                inside = False
                break
            idx = idx * side + (v + L)
        if not inside:
            continue
        if stamp[idx] != tree_id:
            stamp[idx] = tree_id
            counts[idx] += 1


@njit(cache=True)
def any_equal_zero(locs, start):
    for i in range(start, locs.shape[0]):
        z = True
        for k in range(locs.shape[1]):
            if locs[i, k] != 0:
                z = False
                break
        if z:
            return i
    return -1


# ---------------------------------------------------------------- snake


@njit(cache=True)
def excursion_heads(updown, jumps, support):
    """Heads along a contour: push head + jump on +1, pop on -1."""
    n = updown.shape[0]
    d = support.shape[1]
    heads = np.zeros((n + 1, d), np.int64)
    stack = np.zeros((n + 2, d), np.int64)
    sp = 1
    jp = 0
    for i in range(n):
        if updown[i] > 0:
            for k in range(d):
                stack[sp, k] = stack[sp - 1, k] + support[jumps[jp], k]
            jp += 1
            sp += 1
        else:
            sp -= 1
        for k in range(d):
            heads[i + 1, k] = stack[sp - 1, k]
    return heads


@njit(cache=True)
def free_snake_heads(updown, init_path, jumps, support):
    """Heads of the free snake started from the path w(-i) = init_path[i].

    ``init_path`` must hold at least -min(lifetime) + 1 values.
    """
    n = updown.shape[0]
    d = support.shape[1]
    depth = init_path.shape[0]
    heads = np.zeros((n + 1, d), np.int64)
    # stack index s <-> lifetime s - (depth - 1); stack[0..depth-1] is the initial path reversed
    stack = np.zeros((depth + n + 1, d), np.int64)
    for i in range(depth):
        for k in range(d):
            stack[i, k] = init_path[depth - 1 - i, k]
    sp = depth
    jp = 0
    for k in range(d):
        heads[0, k] = stack[sp - 1, k]
    for i in range(n):
        if updown[i] > 0:
            for k in range(d):
                stack[sp, k] = stack[sp - 1, k] + support[jumps[jp], k]
            jp += 1
            sp += 1
        else:
            sp -= 1
        for k in range(d):
            heads[i + 1, k] = stack[sp - 1, k]
    return heads


@njit(cache=True)
def convolve_step(arr, shape, out, out_shape, offsets, probs):
    """out[x + v] += p_v arr[x] on row-major flat arrays; offsets are flat shifts in ``out``."""
    d = len(shape)
    idx = np.zeros(d, np.int64)
    ostride = np.ones(d, np.int64)
    for j in range(d - 2, -1, -1):
        ostride[j] = ostride[j + 1] * out_shape[j + 1]
    for i in range(arr.size):
        a = arr[i]
        if a != 0.0:
            base = 0
            for j in range(d):
                base += idx[j] * ostride[j]
            for v in range(len(offsets)):
                out[base + offsets[v]] += probs[v] * a
        # advance the multi-index
        j = d - 1
        while j >= 0:
            idx[j] += 1
            if idx[j] < shape[j]:
                break
            idx[j] = 0
            j -= 1
