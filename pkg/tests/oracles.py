"""Independent brute-force references used by the unit and acceptance suites."""

import itertools
import math

import numpy as np


def enumerate_hmm(nu, Q, log_e, blocks=None):
    """Exhaustive sum over every state sequence.

    Returns ``(log_likelihood, phi, pair_phi, best_path, best_log_prob)``.
    Works in the linear domain, which is exact enough for the small toy
    sizes used here.
    """
    n, m = log_e.shape
    starts = {0} if blocks is None else {int(b[0]) for b in blocks}
    g = np.exp(log_e)
    total = 0.0
    phi = np.zeros((n, m))
    pair = np.zeros((m, m))
    best, best_lp = None, -math.inf
    for seq in itertools.product(range(m), repeat=n):
        w = 1.0
        trans = []
        for k, s in enumerate(seq):
            if k in starts:
                w *= nu[s]
            else:
                w *= Q[seq[k - 1], s]
                trans.append((seq[k - 1], s))
            w *= g[k, s]
        total += w
        for k, s in enumerate(seq):
            phi[k, s] += w
        for a, b in trans:
            pair[a, b] += w
        lp = math.log(w) if w > 0 else -math.inf
        if lp > best_lp:
            best, best_lp = seq, lp
    return math.log(total), phi / total, pair / total, np.array(best), best_lp


def random_hmm(rng, m, n):
    nu = rng.dirichlet(np.ones(m))
    Q = rng.dirichlet(np.ones(m), size=m)
    log_e = rng.normal(0.0, 1.5, size=(n, m))
    return nu, Q, log_e


def hash_count(read_positions, window_size):
    """Per-window counts through a plain dictionary."""
    table = {}
    for chrom, pos in read_positions:
        key = (chrom, pos // window_size)
        table[key] = table.get(key, 0) + 1
    return table
