"""Negative multinomial mixture emissions for the discretization HMM.

Each state ``i`` emits a count vector ``z = (z_1, ..., z_r)`` from
``theta * NM(alpha, p_i) + (1 - theta) * NM(alpha, q_i)``.  Dimension 1 is
the negative control.  ``alpha`` and ``theta`` are shared by all states and
come from the control fit, as do the ratios ``C1 = p_{0,i} / p_{1,i}`` and
``C2 = q_{0,i} / q_{1,i}`` that pin the control marginal of every state to
the standalone control mixture.

Parameter arrays have shape ``(m, r + 1)``: column 0 is the Gamma weight,
column ``l`` is profile ``l``.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit, gammaln

from .errors import DomainError
from .special import digamma, trigamma

PROB_FLOOR = 1e-12
RATIO_TOL = 1e-9
INNER_TOL = 1e-8


def _freeze(a):
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NMEmissionParams:
    alpha: float
    theta: float
    c1: float
    c2: float
    p: np.ndarray
    q: np.ndarray
    stalled_states: tuple = ()

    def __post_init__(self):
        p, q = _freeze(self.p), _freeze(self.q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        if not self.alpha > 0:
            raise DomainError("alpha must be positive")
        if not 0 < self.theta <= 1:
            raise DomainError("theta must lie in (0, 1]")
        if not (self.c1 > 0 and self.c2 > 0):
            raise DomainError("constraint ratios must be positive")
        if p.ndim != 2 or p.shape != q.shape or p.shape[1] < 2:
            raise DomainError("p and q must both be (m, r + 1) arrays with r >= 1")
        for name, arr, c in (("p", p, self.c1), ("q", q, self.c2)):
            if np.any(~(arr > 0)):
                raise DomainError(f"{name} entries must be positive")
            if np.any(np.abs(arr.sum(axis=1) - 1) > 1e-12):
                raise DomainError(f"rows of {name} must sum to 1")
            if np.any(np.abs(arr[:, 0] / arr[:, 1] - c) > RATIO_TOL * max(1.0, c)):
                raise DomainError(f"{name}[:, 0] / {name}[:, 1] must equal {c}")

    @property
    def m(self):
        return self.p.shape[0]

    @property
    def r(self):
        return self.p.shape[1] - 1

    def enrichment(self):
        """Per-state ratio of expected non-control counts to control counts (p-component)."""
        return self.p[:, 2:].sum(axis=1) / self.p[:, 1]


def project(weights, ratio):
    """Map positive row vectors onto the simplex with ``w0 / w1 = ratio``.

    Column 0 is overwritten by ``ratio * w1`` before normalization.
    """
    w = np.array(weights, dtype=float, ndmin=2, copy=True)
    w[:, 0] = ratio * w[:, 1]
    return floor_simplex(w)


def floor_simplex(w):
    """Floor entries at ``PROB_FLOOR`` and renormalize rows."""
    out = np.maximum(np.asarray(w, dtype=float), PROB_FLOOR)
    return out / out.sum(axis=1, keepdims=True)


def _rows(z):
    zz = np.asarray(z)
    if np.any(zz < 0):
        raise DomainError("counts must be non-negative")
    return np.atleast_2d(zz).astype(float)


def _log_weights(params, z):
    """Per-state ``alpha * log w_0 + z . log w`` for both components, without the shared base."""
    if z.shape[1] != params.r:
        raise DomainError(f"expected {params.r} counts per window, got {z.shape[1]}")
    a = params.alpha
    logp, logq = np.log(params.p), np.log(params.q)
    first = a * logp[:, 0] + z @ logp[:, 1:].T
    second = a * logq[:, 0] + z @ logq[:, 1:].T
    return first, second


def _base(alpha, z):
    return gammaln(alpha + z.sum(axis=1)) - gammaln(alpha) - gammaln(z + 1).sum(axis=1)


def emission_log_density(params, z):
    """Log mixture density of every state.

    ``z`` is one window (length ``r``) or ``(n, r)``; the result has shape
    ``(m,)`` or ``(n, m)`` accordingly.
    """
    zz = _rows(z)
    first, second = _log_weights(params, zz)
    with np.errstate(divide="ignore"):
        lt, lu = np.log(params.theta), np.log1p(-params.theta)
    out = _base(params.alpha, zz)[:, None] + np.logaddexp(first + lt, second + lu)
    return out[0] if np.ndim(z) == 1 else out


def component_responsibilities(params, z):
    """Posterior weight of the p-component in each state, per window."""
    zz = _rows(z)
    if params.theta == 1.0:
        out = np.ones((zz.shape[0], params.m))
    else:
        first, second = _log_weights(params, zz)
        out = expit(first - second + np.log(params.theta) - np.log1p(-params.theta))
    return out[0] if np.ndim(z) == 1 else out


def expected_objective(params, z, phi):
    """Posterior-weighted emission log-likelihood ``sum_k sum_i phi_k(i) log g_i(z_k)``."""
    dens = emission_log_density(params, _rows(z))
    w = np.asarray(phi, dtype=float)
    # 0 * -inf must count as 0 for states with no posterior mass.
    return float(np.sum(np.where(w > 0, w * dens, 0.0)))


def _weighted_means(z, w):
    """Column means of ``z`` under each column of weights ``w`` -> ``(m, r)``, totals ``(m,)``."""
    totals = w.sum(axis=0)
    sums = w.T @ z
    with np.errstate(invalid="ignore", divide="ignore"):
        means = sums / totals[:, None]
    return means, totals


def constrained_update(zbar, alpha, ratio):
    """Closed-form maximizer under ``sum = 1`` and ``w0 / w1 = ratio``.

    ``zbar`` holds per-state weighted means ``(m, r)`` with column 0 the
    control.  Returns ``(m, r + 1)`` simplex rows.
    """
    zbar = np.atleast_2d(zbar)
    total = alpha + zbar.sum(axis=1)
    head = (alpha + zbar[:, 0]) / total
    out = np.empty((zbar.shape[0], zbar.shape[1] + 1))
    out[:, 0] = ratio / (ratio + 1.0) * head
    out[:, 1] = 1.0 / (ratio + 1.0) * head
    out[:, 2:] = zbar[:, 1:] / total[:, None]
    return floor_simplex(out)


def emission_m_step_mixture(z, phi, current, inner_iters=5, tol=INNER_TOL):
    """Constrained M-step for the mixture emissions with alpha, theta, C1, C2 fixed.

    Alternates component responsibilities and closed-form updates of p and
    q for ``inner_iters`` cycles (``None`` runs to convergence) or until the
    max-norm change drops below ``tol``.  States without posterior mass keep
    their parameters and are listed in ``stalled_states``.
    """
    zz = _rows(z)
    w = np.asarray(phi, dtype=float)
    params = current
    state_mass = w.sum(axis=0)
    stalled = tuple(int(i) for i in np.flatnonzero(~(state_mass > 0)))
    cycles = 0
    while inner_iters is None or cycles < inner_iters:
        cycles += 1
        resp = component_responsibilities(params, zz)
        p_new, q_new = params.p.copy(), params.q.copy()
        for comp_w, target, ratio in (
            (w * resp, p_new, params.c1),
            (w * (1.0 - resp), q_new, params.c2),
        ):
            means, totals = _weighted_means(zz, comp_w)
            ok = totals > 0
            if ok.any():
                target[ok] = constrained_update(means[ok], params.alpha, ratio)
        change = max(np.abs(p_new - params.p).max(), np.abs(q_new - params.q).max())
        params = replace(params, p=p_new, q=q_new, stalled_states=stalled)
        if change < tol:
            break
    return params


def emission_m_step_plain(z, phi, alpha, previous=None):
    """Unconstrained single-component NM M-step, one simplex row per state.

    ``p_0 = alpha / (alpha + sum_l zbar_l)`` and ``p_l = zbar_l / (...)``
    with ``zbar`` the posterior-weighted means.  States without mass take
    the matching row of ``previous``.
    """
    zz = _rows(z)
    w = np.asarray(phi, dtype=float)
    means, totals = _weighted_means(zz, w)
    out = np.empty((w.shape[1], zz.shape[1] + 1))
    empty = ~(totals > 0)
    if empty.any() and previous is None:
        raise DomainError(f"states {np.flatnonzero(empty).tolist()} have no posterior mass")
    full = ~empty
    total = alpha + means[full].sum(axis=1)
    out[full, 0] = alpha / total
    out[full, 1:] = means[full] / total[:, None]
    if empty.any():
        out[empty] = np.asarray(previous)[empty]
    return floor_simplex(out)


def alpha_profile_objective(alpha, z, phi):
    """Score in alpha of the single-component NM model and its derivative.

    The per-state weights are profiled out with ``emission_m_step_plain``;
    returns ``(f, fprime)``.
    """
    if not alpha > 0:
        raise DomainError("alpha must be positive")
    zz = _rows(z)
    w = np.asarray(phi, dtype=float)
    n = zz.shape[0]
    means, totals = _weighted_means(zz, w)
    keep = totals > 0
    denom = alpha + means[keep].sum(axis=1)
    rows = zz.sum(axis=1)
    f = (
        n * (np.log(alpha) - digamma(alpha))
        + digamma(alpha + rows).sum()
        - (np.log(denom) * totals[keep]).sum()
    )
    fp = (
        n * (1.0 / alpha - trigamma(alpha))
        + trigamma(alpha + rows).sum()
        - (totals[keep] / denom).sum()
    )
    return float(f), float(fp)


def profiled_log_likelihood(alpha, z, phi):
    """Expected complete log-likelihood of the single-component model at its M-step optimum."""
    zz = _rows(z)
    w = np.asarray(phi, dtype=float)
    weights = emission_m_step_plain(zz, w, alpha)
    logw = np.log(weights)
    per = alpha * logw[:, 0] + zz @ logw[:, 1:].T
    rows = zz.sum(axis=1)
    return float(
        -zz.shape[0] * gammaln(alpha)
        + gammaln(alpha + rows).sum()
        - gammaln(zz + 1).sum()
        + (w * per).sum()
    )
