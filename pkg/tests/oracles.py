"""Brute-force reference computations, independent of the package code."""

import itertools
import math

import numpy as np

NEG = float("-inf")


def brute_hvt_value(sigma):
    """Best transversal sum by enumerating all n! permutations (None if none finite)."""
    n = len(sigma)
    best = None
    for perm in itertools.permutations(range(n)):
        total = sum(sigma[i][perm[i]] for i in range(n))
        if total != NEG and (best is None or total > best):
            best = total
    return best


def all_hvts(sigma):
    best = brute_hvt_value(sigma)
    n = len(sigma)
    out = []
    for perm in itertools.permutations(range(n)):
        if sum(sigma[i][perm[i]] for i in range(n)) == best:
            out.append(tuple((i, perm[i]) for i in range(n)))
    return out


def brute_essential(sigma):
    return {p for T in all_hvts(sigma) for p in T}


def brute_smallest_offsets(sigma, cmax):
    """Elementwise-smallest valid (c; d) by enumerating c in {0..cmax}^n."""
    n = len(sigma)
    best = brute_hvt_value(sigma)
    valid = []
    for c in itertools.product(range(cmax + 1), repeat=n):
        d = [max(sigma[i][j] + c[i] for i in range(n)) for j in range(n)]
        if any(x == NEG or x < 0 for x in d):
            continue
        if sum(d) - sum(c) == best:
            valid.append((tuple(c), tuple(int(x) for x in d)))
    return valid


def finest_partition(pattern, n):
    """Finest block partition of a square pattern with a perfect matching.

    A row set R can lead a block triangular ordering exactly when no row
    outside R has an entry in a column matched to R.  Two rows share a block
    iff every such leading set contains both or neither.
    """
    match = None
    for perm in itertools.permutations(range(n)):
        if all((i, perm[i]) in pattern for i in range(n)):
            match = perm
            break
    if match is None:
        return None
    leading = []
    for mask in range(1 << n):
        R = {i for i in range(n) if mask >> i & 1}
        cols = {match[i] for i in R}
        if all(not (j in cols) for (i, j) in pattern if i not in R):
            leading.append(R)
    groups = {}
    for i in range(n):
        key = tuple(i in R for R in leading)
        groups.setdefault(key, set()).add(i)
    return {frozenset(g) for g in groups.values()}


def finite_difference(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


def random_sigma(rng, n, p_absent=0.5):
    """Random Σ with entries in {-inf, 0..3} that has a finite transversal."""
    sigma = np.where(rng.random((n, n)) < p_absent, NEG, rng.integers(0, 4, (n, n)).astype(float))
    perm = rng.permutation(n)
    for i in range(n):
        if not math.isfinite(sigma[i, perm[i]]):
            sigma[i, perm[i]] = float(rng.integers(0, 4))
    return sigma
