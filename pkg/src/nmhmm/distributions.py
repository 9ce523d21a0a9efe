"""Negative binomial and negative multinomial laws, plus their mixtures.

Parametrization follows the Gamma-Poisson construction: a rate
``lambda ~ Gamma(alpha, beta)`` drives ``r`` Poisson counts with means
``gamma_l * lambda``.  The resulting negative multinomial is stored on the
simplex ``(p0, p1, ..., pr)`` where ``p0`` is the weight of the Gamma side.
A negative binomial ``(alpha, p)`` is the ``r = 1`` case with ``p = p0``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DomainError
from .special import log_sum_exp

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class NegBinomialParams:
    alpha: float
    p: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.p < 1:
            raise DomainError(f"p must lie in (0, 1), got {self.p}")

    @property
    def mean(self):
        return self.alpha * (1 - self.p) / self.p


@dataclass(frozen=True, eq=False)
class NegMultinomialParams:
    """``p`` holds ``(p0, p1, ..., pr)``; entry 0 is the Gamma weight."""

    alpha: float
    p: np.ndarray

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if p.ndim != 1 or p.size < 2:
            raise DomainError("p must be a vector (p0, p1, ..., pr) with r >= 1")
        if np.any(~(p > 0)):
            raise DomainError("every entry of p must be positive")
        if abs(p.sum() - 1.0) > SIMPLEX_TOL:
            raise DomainError(f"p must sum to 1, sums to {p.sum()!r}")

    @property
    def r(self):
        return self.p.size - 1

    def means(self):
        """Expected count of every dimension, ``alpha * p_l / p0``."""
        return self.alpha * self.p[1:] / self.p[0]

    def __eq__(self, other):
        if not isinstance(other, NegMultinomialParams):
            return NotImplemented
        return self.alpha == other.alpha and np.array_equal(self.p, other.p)

    def __repr__(self):
        return f"NegMultinomialParams(alpha={self.alpha!r}, p={self.p.tolist()!r})"


@dataclass(frozen=True)
class NBMixtureParams:
    """Two-component NB mixture sharing ``alpha``.

    With probability ``theta`` a count is drawn from NB(alpha, p), else from
    NB(alpha, q).  Canonical labelling keeps ``p > q`` so the first component
    is the low-mean one.
    """

    alpha: float
    theta: float
    p: float
    q: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if not 0 <= self.theta <= 1:
            raise DomainError(f"theta must lie in [0, 1], got {self.theta}")
        for name in ("p", "q"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise DomainError(f"{name} must lie in (0, 1), got {v}")

    def canonical(self):
        """Relabel so that ``p >= q``."""
        if self.p >= self.q:
            return self
        return NBMixtureParams(self.alpha, 1.0 - self.theta, self.q, self.p)

    def as_tuple(self):
        return (self.alpha, self.theta, self.p, self.q)


def _counts(y):
    arr = np.asarray(y)
    if np.any(arr < 0):
        raise DomainError("counts must be non-negative")
    return arr.astype(float)


def nb_log_pmf(params, y):
    """Log pmf of NB(alpha, p) at ``y`` (scalar or array)."""
    yy = _counts(y)
    a, p = params.alpha, params.p
    out = gammaln(a + yy) - gammaln(a) - gammaln(yy + 1) + a * np.log(p) + yy * np.log1p(-p)
    return float(out) if np.ndim(y) == 0 else out


def nm_log_pmf(params, z):
    """Log pmf of the negative multinomial.

    ``z`` is a length-``r`` vector or an ``(n, r)`` matrix of counts; a matrix
    yields one value per row.
    """
    zz = _counts(z)
    if zz.shape[-1] != params.r:
        raise DomainError(f"expected {params.r} counts per observation, got {zz.shape[-1]}")
    a = params.alpha
    logp = np.log(params.p)
    total = zz.sum(axis=-1)
    out = (
        gammaln(a + total)
        - gammaln(a)
        - gammaln(zz + 1).sum(axis=-1)
        + a * logp[0]
        + zz @ logp[1:]
    )
    return float(out) if zz.ndim == 1 else out


def nb_mixture_log_pmf(params, y):
    """Log pmf of the two-component NB mixture."""
    yy = _counts(y)
    a = params.alpha
    base = gammaln(a + yy) - gammaln(a) - gammaln(yy + 1)
    with np.errstate(divide="ignore"):
        lt, lu = np.log(params.theta), np.log1p(-params.theta)
    first = lt + a * np.log(params.p) + yy * np.log1p(-params.p)
    second = lu + a * np.log(params.q) + yy * np.log1p(-params.q)
    out = base + np.logaddexp(first, second)
    return float(out) if np.ndim(y) == 0 else out


def pmf(log_pmf, params, x):
    """Exponentiate any of the log pmfs above."""
    return np.exp(log_pmf(params, x))


def _dims(indices, r, what):
    idx = sorted({int(i) for i in indices})
    if not idx:
        raise DomainError(f"{what} index set is empty")
    if idx[0] < 1 or idx[-1] > r:
        raise DomainError(f"{what} indices must lie in 1..{r}")
    return idx


def nm_marginal(params, keep):
    """Negative multinomial law of the dimensions in ``keep`` (1-based).

    The Gamma weight and the kept weights are renormalized together, which
    preserves every ratio ``p0 / p_l``.
    """
    idx = _dims(keep, params.r, "keep")
    sub = np.concatenate(([params.p[0]], params.p[idx]))
    return NegMultinomialParams(params.alpha, sub / sub.sum())


def nm_conditional(params, given):
    """Law of the free dimensions given observed counts ``{dim: count}``.

    Returned dimensions keep their original order.  The shape grows by the
    total conditioned count and the free weights are unchanged.
    """
    fixed = _dims(given.keys(), params.r, "given")
    free = [l for l in range(1, params.r + 1) if l not in fixed]
    if not free:
        raise DomainError("cannot condition on every dimension")
    counts = [given[l] for l in fixed]
    if any(c < 0 for c in counts):
        raise DomainError("conditioning counts must be non-negative")
    pf = params.p[free]
    p0 = 1.0 - pf.sum()
    return NegMultinomialParams(params.alpha + float(sum(counts)), np.concatenate(([p0], pf)))


def _generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def gamma_poisson_scales(params):
    """Return ``(beta, gammas)`` for the Gamma-Poisson construction, with gamma_1 = 1."""
    p = params.p
    beta = p[1] / p[0]
    return beta, p[1:] / p[1]


def sample_gamma_poisson(params, n, seed):
    """Draw ``n`` negative multinomial vectors by the two-stage construction.

    Returns an ``(n, r)`` int64 array.  ``seed`` is an integer or a
    ``numpy.random.Generator``; integers seed a counter-based Philox stream.
    """
    if n < 1:
        raise DomainError("n must be at least 1")
    rng = _generator(seed)
    beta, gammas = gamma_poisson_scales(params)
    lam = rng.gamma(params.alpha, beta, size=n)
    return rng.poisson(lam[:, None] * gammas[None, :]).astype(np.int64)


def sample_nb_mixture(params, n, seed):
    """Draw ``n`` counts from a two-component NB mixture."""
    rng = _generator(seed)
    first = rng.random(n) < params.theta
    p = np.where(first, params.p, params.q)
    lam = rng.gamma(params.alpha, (1 - p) / p)
    return rng.poisson(lam).astype(np.int64)


__all__ = [
    "NegBinomialParams",
    "NegMultinomialParams",
    "NBMixtureParams",
    "nb_log_pmf",
    "nm_log_pmf",
    "nb_mixture_log_pmf",
    "nm_marginal",
    "nm_conditional",
    "sample_gamma_poisson",
    "sample_nb_mixture",
    "gamma_poisson_scales",
    "log_sum_exp",
    "pmf",
]
