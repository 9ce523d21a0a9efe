"""EM fit of a two-component negative binomial mixture with shared shape.

The control track of a ChIP-seq experiment is modelled as a mixture of
NB(alpha, p) with weight theta and NB(alpha, q) with weight 1 - theta.
Each EM cycle computes component responsibilities, the two
responsibility-weighted means, a Newton-Raphson root of the profiled score
in alpha, and closed-form updates of theta, p and q.

Count data is compressed to its histogram (distinct values and their
multiplicities) before the loop; every sum over windows becomes a short
weighted sum over distinct counts.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.special import gammaln

from .distributions import NBMixtureParams, nb_mixture_log_pmf
from .errors import DegenerateComponentError, DomainError, NumericFailureError
from .special import digamma, trigamma

logger = logging.getLogger(__name__)

ALPHA_BRACKET = (1e-4, 1e6)
ALPHA_INIT_CLAMP = (0.01, 100.0)
PROB_EDGE = 1e-12
DEGENERATE_THETA = 1e-6


@dataclass
class EmFitReport:
    params: NBMixtureParams
    log_likelihood_trace: list
    iterations: int
    converged: bool
    responsibilities: np.ndarray = None
    degenerate: bool = False
    notes: list = field(default_factory=list)

    @property
    def log_likelihood(self):
        return self.log_likelihood_trace[-1]


def _histogram(y):
    arr = np.asarray(y)
    if arr.ndim != 1:
        arr = arr.ravel()
    if np.any(arr < 0):
        raise DomainError("counts must be non-negative")
    vals, mult = np.unique(arr.astype(np.int64), return_counts=True)
    return vals.astype(float), mult.astype(float)


def _log_components(params, y):
    a = params.alpha
    with np.errstate(divide="ignore"):
        first = np.log(params.theta) + a * np.log(params.p) + y * np.log1p(-params.p)
        second = np.log1p(-params.theta) + a * np.log(params.q) + y * np.log1p(-params.q)
    return first, second


def e_step_responsibilities(params, y):
    """Posterior probability that each count came from the p-component."""
    yy = np.asarray(y, dtype=float)
    first, second = _log_components(params, yy)
    top = np.maximum(first, second)
    top = np.where(np.isfinite(top), top, 0.0)
    a = np.exp(first - top)
    b = np.exp(second - top)
    out = a / (a + b)
    return float(out) if np.ndim(y) == 0 else out


def weighted_means(y, resp):
    """Responsibility-weighted means ``(ybar1, ybar0)`` of the two components."""
    yy = np.asarray(y, dtype=float)
    th = np.asarray(resp, dtype=float)
    w1 = th.sum()
    w0 = (1.0 - th).sum()
    if not w1 > 0:
        raise DegenerateComponentError("first component has zero total responsibility")
    if not w0 > 0:
        raise DegenerateComponentError("second component has zero total responsibility")
    return float((th * yy).sum() / w1), float(((1.0 - th) * yy).sum() / w0)


def _score_terms(alpha, vals, mult, w1, w0, ybar1, ybar0):
    n = mult.sum()
    f = (
        n * (np.log(alpha) - digamma(alpha))
        + np.dot(mult, digamma(alpha + vals))
        - w1 * np.log(alpha + ybar1)
        - w0 * np.log(alpha + ybar0)
    )
    fp = (
        n * (1.0 / alpha - trigamma(alpha))
        + np.dot(mult, trigamma(alpha + vals))
        - w1 / (alpha + ybar1)
        - w0 / (alpha + ybar0)
    )
    return float(f), float(fp)


def alpha_score(alpha, y, resp, ybar1, ybar0):
    """Profiled score ``f(alpha)`` and its derivative ``f'(alpha)``.

    ``f`` is the derivative in alpha of the expected complete-data
    log-likelihood after substituting ``p = alpha / (alpha + ybar1)`` and
    ``q = alpha / (alpha + ybar0)``.
    """
    yy = np.asarray(y, dtype=float)
    th = np.asarray(resp, dtype=float)
    ones = np.ones_like(yy)
    return _score_terms(alpha, yy, ones, th.sum(), (1.0 - th).sum(), ybar1, ybar0)


def profile_objective(alpha, y, resp, ybar1, ybar0):
    """Expected complete log-likelihood with p, q profiled out (theta terms dropped)."""
    yy = np.asarray(y, dtype=float)
    th = np.asarray(resp, dtype=float)
    p = alpha / (alpha + ybar1)
    q = alpha / (alpha + ybar0)
    return float(
        -yy.size * gammaln(alpha)
        + gammaln(alpha + yy).sum()
        + (th * (alpha * np.log(p) + yy * np.log1p(-p))).sum()
        + ((1 - th) * (alpha * np.log(q) + yy * np.log1p(-q))).sum()
    )


def _solve_alpha(alpha0, vals, mult, w1, w0, ybar1, ybar0, eps, max_iter):
    lo, hi = ALPHA_BRACKET
    f_lo, _ = _score_terms(lo, vals, mult, w1, w0, ybar1, ybar0)
    f_hi, _ = _score_terms(hi, vals, mult, w1, w0, ybar1, ybar0)
    # No sign change: the profile likelihood is monotone on the bracket.
    if f_lo <= 0 and f_hi <= 0:
        return lo
    if f_lo >= 0 and f_hi >= 0:
        return hi
    x = min(max(alpha0, lo), hi)
    for _ in range(max_iter):
        f, fp = _score_terms(x, vals, mult, w1, w0, ybar1, ybar0)
        if f == 0.0:
            return x
        # The score decreases through the root; keep [lo, hi] bracketing it.
        if f > 0:
            lo = x
        else:
            hi = x
        step_ok = fp < 0
        if step_ok:
            nxt = x - f / fp
            step_ok = lo < nxt < hi
        if not step_ok:
            nxt = np.sqrt(lo * hi)
        if abs(nxt - x) < eps * max(1.0, x):
            return nxt
        x = nxt
    raise NumericFailureError(f"Newton-Raphson on alpha did not converge in {max_iter} steps", last=x)


def alpha_newton_update(alpha0, y, resp, ybar1, ybar0, eps=1e-10, max_iter=100):
    """Newton-Raphson root of ``alpha_score``, safeguarded by bisection.

    Iterates stay inside ``ALPHA_BRACKET``; a step that leaves the current
    bracket or meets a non-negative derivative is replaced by a geometric
    bisection.  Stops when successive iterates differ by less than
    ``eps * max(1, alpha)``.
    """
    if not alpha0 > 0:
        raise DomainError("alpha0 must be positive")
    yy = np.asarray(y, dtype=float)
    th = np.asarray(resp, dtype=float)
    return _solve_alpha(
        alpha0, yy, np.ones_like(yy), th.sum(), (1 - th).sum(), ybar1, ybar0, eps, max_iter
    )


def initial_params(y):
    """Method-of-moments start: split at the median, theta = 0.5."""
    yy = np.asarray(y, dtype=float)
    med = np.median(yy)
    low = yy <= med
    if low.all():
        low = yy < med
    mean, var = yy.mean(), yy.var()
    alpha = mean * mean / (var - mean) if var > mean else ALPHA_INIT_CLAMP[1]
    alpha = float(np.clip(alpha, *ALPHA_INIT_CLAMP))
    p = alpha / (alpha + yy[low].mean())
    q = alpha / (alpha + yy[~low].mean())
    p, q = (float(np.clip(v, PROB_EDGE, 1 - PROB_EDGE)) for v in (p, q))
    return NBMixtureParams(alpha, 0.5, p, q).canonical()


def _loglik(params, vals, mult):
    return float(np.dot(mult, nb_mixture_log_pmf(params, vals)))


def em_cycle(params, vals, mult):
    """One EM cycle on histogram data; returns the updated canonical params."""
    th = e_step_responsibilities(params, vals)
    w1 = float(np.dot(mult, th))
    w0 = float(np.dot(mult, 1.0 - th))
    n = mult.sum()
    a = params.alpha
    # A component that lost all mass keeps its previous mean.
    ybar1 = np.dot(mult, th * vals) / w1 if w1 > 0 else a * (1 - params.p) / params.p
    ybar0 = np.dot(mult, (1 - th) * vals) / w0 if w0 > 0 else a * (1 - params.q) / params.q
    alpha = _solve_alpha(a, vals, mult, w1, w0, ybar1, ybar0, 1e-10, 100)
    p = float(np.clip(alpha / (alpha + ybar1), PROB_EDGE, 1 - PROB_EDGE))
    q = float(np.clip(alpha / (alpha + ybar0), PROB_EDGE, 1 - PROB_EDGE))
    theta = float(np.clip(w1 / n, 0.0, 1.0))
    return NBMixtureParams(float(alpha), theta, p, q).canonical()


def fit_nb_mixture(y, init=None, tol=1e-6, max_iter=500):
    """Fit the NB mixture to a control track by EM.

    Iterates until the max-norm change of ``(alpha, theta, p, q)`` drops
    below ``tol`` or ``max_iter`` cycles have run.  The report flags a
    degenerate fit when theta ends within 1e-6 of 0 or 1.
    """
    yy = np.asarray(y)
    if yy.size < 10:
        raise DomainError(f"need at least 10 counts, got {yy.size}")
    vals, mult = _histogram(yy)
    if vals.size == 1:
        if vals[0] == 0:
            raise DomainError("control track is identically zero")
        raise DomainError("control track is constant")
    params = initial_params(yy) if init is None else init.canonical()
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        trace.append(_loglik(params, vals, mult))
        new = em_cycle(params, vals, mult)
        change = max(abs(a - b) for a, b in zip(new.as_tuple(), params.as_tuple()))
        params = new
        if change < tol:
            converged = True
            break
    trace.append(_loglik(params, vals, mult))
    degenerate = params.theta < DEGENERATE_THETA or params.theta > 1 - DEGENERATE_THETA
    if degenerate:
        logger.warning("NB mixture fit is degenerate (theta=%g)", params.theta)
    if not converged:
        logger.warning("NB mixture EM stopped after %d cycles without converging", max_iter)
    return EmFitReport(
        params=params,
        log_likelihood_trace=trace,
        iterations=it,
        converged=converged,
        responsibilities=e_step_responsibilities(params, yy.astype(float)),
        degenerate=degenerate,
    )
