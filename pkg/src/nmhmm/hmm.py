"""Discrete-state HMM machinery: smoothing, pairwise posteriors, Viterbi.

Emissions enter as an ``(n, m)`` matrix of log-densities.  Windows are
split into blocks (chromosomes, or runs between masked gaps); the chain
restarts from the initial distribution at every block start and no
transition is counted across a block boundary.

The forward pass normalizes the filtered distribution at every window and
keeps the log normalizers, so ``sum(scale_factors)`` is the log-likelihood
and nothing underflows on long chains.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DomainError, ImpossibleObservationError

STOCHASTIC_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class HmmModel:
    """Initial distribution ``nu`` and transition matrix ``Q``.

    ``emission`` is an optional handle to the emission model that produced
    the log-densities; the engine itself never looks at it.
    """

    nu: np.ndarray
    Q: np.ndarray
    emission: object = None

    def __post_init__(self):
        nu = np.array(self.nu, dtype=float)
        Q = np.array(self.Q, dtype=float)
        m = nu.size
        if nu.ndim != 1 or m < 1:
            raise DomainError("nu must be a non-empty vector")
        if Q.shape != (m, m):
            raise DomainError(f"Q must be {m}x{m}, got {Q.shape}")
        if np.any(nu < 0) or abs(nu.sum() - 1) > STOCHASTIC_TOL:
            raise DomainError("nu must be a probability vector")
        if np.any(Q < 0) or np.any(np.abs(Q.sum(axis=1) - 1) > STOCHASTIC_TOL):
            raise DomainError("rows of Q must be probability vectors")
        nu.setflags(write=False)
        Q.setflags(write=False)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "Q", Q)

    @property
    def m(self):
        return self.nu.size

    @classmethod
    def sticky(cls, m, stay=0.95, emission=None):
        """Uniform ``nu`` and a transition matrix with ``stay`` on the diagonal."""
        if m == 1:
            Q = np.ones((1, 1))
        else:
            Q = np.full((m, m), (1.0 - stay) / (m - 1))
            np.fill_diagonal(Q, stay)
        return cls(np.full(m, 1.0 / m), Q, emission)

    def with_transitions(self, Q, emission=None):
        return HmmModel(self.nu, Q, self.emission if emission is None else emission)


@dataclass(frozen=True, eq=False)
class Smoothing:
    phi: np.ndarray
    pair_phi: np.ndarray
    log_likelihood: float
    scale_factors: np.ndarray


@dataclass(frozen=True, eq=False)
class StatePath:
    """0-based state per window and the joint log-probability of the path."""

    states: np.ndarray
    path_log_likelihood: float


def as_blocks(blocks, n):
    """Validate ``blocks`` as consecutive ``(start, stop)`` ranges tiling ``[0, n)``."""
    if blocks is None:
        return np.array([[0, n]], dtype=np.int64)
    arr = np.asarray(blocks, dtype=np.int64).reshape(-1, 2)
    if arr.size == 0 or arr[0, 0] != 0 or arr[-1, 1] != n:
        raise DomainError("blocks must tile the windows from 0 to n")
    if np.any(arr[:, 1] <= arr[:, 0]) or np.any(arr[1:, 0] != arr[:-1, 1]):
        raise DomainError("blocks must be non-empty and consecutive")
    return arr


def _check(model, emissions_log):
    e = np.ascontiguousarray(emissions_log, dtype=float)
    if e.ndim != 2 or e.shape[1] != model.m:
        raise DomainError(f"emissions must be (n, {model.m}), got {e.shape}")
    if e.shape[0] < 1:
        raise DomainError("need at least one window")
    if np.any(np.isnan(e)) or np.any(e == np.inf):
        raise DomainError("emission log-densities must be finite or -inf")
    return e


@njit(cache=True, nogil=True)
def _forward(log_e, nu, Q, blocks, alpha, shifted, scale, log_scale):
    n, m = log_e.shape
    pred = np.empty(m)
    for b in range(blocks.shape[0]):
        s, t = blocks[b, 0], blocks[b, 1]
        for k in range(s, t):
            top = -np.inf
            for j in range(m):
                if log_e[k, j] > top:
                    top = log_e[k, j]
            if top == -np.inf:
                return k
            if k == s:
                for j in range(m):
                    pred[j] = nu[j]
            else:
                for j in range(m):
                    acc = 0.0
                    for i in range(m):
                        acc += alpha[k - 1, i] * Q[i, j]
                    pred[j] = acc
            c = 0.0
            for j in range(m):
                g = np.exp(log_e[k, j] - top)
                shifted[k, j] = g
                alpha[k, j] = pred[j] * g
                c += alpha[k, j]
            if c <= 0.0:
                return k
            for j in range(m):
                alpha[k, j] /= c
            scale[k] = c
            log_scale[k] = np.log(c) + top
    return -1


@njit(cache=True, nogil=True)
def _backward(Q, blocks, alpha, shifted, scale, phi, pair):
    n, m = alpha.shape
    beta = np.empty(m)
    nxt = np.empty(m)
    w = np.empty(m)
    for b in range(blocks.shape[0]):
        s, t = blocks[b, 0], blocks[b, 1]
        for j in range(m):
            beta[j] = 1.0
            phi[t - 1, j] = alpha[t - 1, j]
        for k in range(t - 2, s - 1, -1):
            for j in range(m):
                w[j] = shifted[k + 1, j] * beta[j] / scale[k + 1]
            for i in range(m):
                acc = 0.0
                for j in range(m):
                    x = alpha[k, i] * Q[i, j] * w[j]
                    pair[i, j] += x
                    acc += Q[i, j] * w[j]
                nxt[i] = acc
            for i in range(m):
                beta[i] = nxt[i]
                phi[k, i] = alpha[k, i] * beta[i]


@njit(cache=True, nogil=True)
def _viterbi(log_e, log_nu, log_Q, blocks, states):
    n, m = log_e.shape
    back = np.zeros((n, m), dtype=np.int64)
    delta = np.empty(m)
    nd = np.empty(m)
    total = 0.0
    for b in range(blocks.shape[0]):
        s, t = blocks[b, 0], blocks[b, 1]
        alive = False
        for j in range(m):
            delta[j] = log_nu[j] + log_e[s, j]
            if delta[j] > -np.inf:
                alive = True
        if not alive:
            return s, total
        for k in range(s + 1, t):
            alive = False
            for j in range(m):
                best = -np.inf
                arg = 0
                for i in range(m):
                    v = delta[i] + log_Q[i, j]
                    if v > best:
                        best = v
                        arg = i
                back[k, j] = arg
                nd[j] = best + log_e[k, j]
                if nd[j] > -np.inf:
                    alive = True
            if not alive:
                return k, total
            for j in range(m):
                delta[j] = nd[j]
        best = -np.inf
        arg = 0
        for j in range(m):
            if delta[j] > best:
                best = delta[j]
                arg = j
        total += best
        states[t - 1] = arg
        for k in range(t - 1, s, -1):
            states[k - 1] = back[k, states[k]]
    return -1, total


def _run_forward(model, emissions_log, blocks):
    e = _check(model, emissions_log)
    n, m = e.shape
    bl = as_blocks(blocks, n)
    alpha = np.empty((n, m))
    shifted = np.empty((n, m))
    scale = np.empty(n)
    log_scale = np.empty(n)
    bad = _forward(e, model.nu, model.Q, bl, alpha, shifted, scale, log_scale)
    if bad >= 0:
        raise ImpossibleObservationError(int(bad))
    return bl, alpha, shifted, scale, log_scale


def forward_backward(model, emissions_log, blocks=None):
    """Smoothing posteriors, summed pairwise posteriors, and log-likelihood."""
    bl, alpha, shifted, scale, log_scale = _run_forward(model, emissions_log, blocks)
    n, m = alpha.shape
    phi = np.empty((n, m))
    pair = np.zeros((m, m))
    _backward(model.Q, bl, alpha, shifted, scale, phi, pair)
    for arr in (phi, pair, log_scale):
        arr.setflags(write=False)
    return Smoothing(phi, pair, float(np.sum(log_scale)), log_scale)


def log_likelihood(model, emissions_log, blocks=None):
    """Total log-likelihood over all blocks, from the forward pass only."""
    return float(np.sum(_run_forward(model, emissions_log, blocks)[4]))


def transition_m_step(smoothing, previous=None):
    """Row-normalize the pairwise posterior mass.

    A row with no mass (a state never left) keeps its ``previous`` row, or
    becomes a self-loop when no previous matrix is given.
    """
    mass = np.asarray(smoothing.pair_phi, dtype=float)
    m = mass.shape[0]
    totals = mass.sum(axis=1)
    out = np.empty((m, m))
    for i in range(m):
        if totals[i] > 0:
            out[i] = mass[i] / totals[i]
            out[i] /= out[i].sum()
        elif previous is not None:
            out[i] = previous[i]
        else:
            out[i] = 0.0
            out[i, i] = 1.0
    return out


def viterbi(model, emissions_log, blocks=None):
    """Most probable state path; ties go to the lower state index."""
    e = _check(model, emissions_log)
    n = e.shape[0]
    bl = as_blocks(blocks, n)
    with np.errstate(divide="ignore"):
        log_nu = np.log(model.nu)
        log_Q = np.log(model.Q)
    states = np.zeros(n, dtype=np.int64)
    bad, total = _viterbi(e, log_nu, log_Q, bl, states)
    if bad >= 0:
        raise ImpossibleObservationError(int(bad))
    states.setflags(write=False)
    return StatePath(states, float(total))
