"""Independent reference computations shared by unit and acceptance tests."""

import itertools
from fractions import Fraction

import numpy as np


def enumerated_drawings(n, a, pack, ell):
    """Expected packs until ``ell`` of ``a`` marked items are seen, by exhaustive enumeration.

    Markov chain over the set of marked items collected so far, solved in
    exact rationals from the largest sets down.
    """
    packs = [frozenset(c) for c in itertools.combinations(range(n), pack)]
    marked = frozenset(range(a))
    states = [frozenset(s) for r in range(a + 1) for s in itertools.combinations(marked, r)]
    value = {}
    for s in sorted(states, key=len, reverse=True):
        if len(s) >= ell:
            value[s] = Fraction(0)
            continue
        stay, ahead = 0, Fraction(0)
        for p in packs:
            t = s | (p & marked)
            if t == s:
                stay += 1
            else:
                ahead += value[t]
        value[s] = (len(packs) + ahead) / (len(packs) - stay)
    return value[frozenset()]


def simulated_drawings(n, a, pack, ell, trials, seed=0, batch=100_000):
    """Monte-Carlo mean of the same waiting time; items ``0..a-1`` are marked."""
    rng = np.random.default_rng(seed)
    total, done_trials = 0, 0
    while done_trials < trials:
        m = min(batch, trials - done_trials)
        seen = np.zeros(m, dtype=np.int64)
        count = np.zeros(m, dtype=np.int64)
        live = np.arange(m)
        while live.size:
            picks = np.argpartition(rng.random((live.size, n)), pack - 1, axis=1)[:, :pack]
            seen[live] |= np.where(picks < a, 1 << np.minimum(picks, 62), 0).sum(axis=1)
            count[live] += 1
            hits = np.array([bin(x).count("1") for x in seen[live]])
            live = live[hits < ell]
        total += int(count.sum())
        done_trials += m
    return total / trials


def reachable_band(f3):
    """Distance-0 shares of a two-entry state from which ``f3`` is one exact step away."""
    return f3[0], f3[0] + f3[1]
