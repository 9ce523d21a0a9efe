"""End-to-end discretization of ChIP-seq profiles against a negative control.

1. Fit the NB mixture ``(alpha, theta, p, q)`` on the control track.  This
   fixes the shared shape, the mixing weight and the ratio constraints
   ``C1 = p / (1 - p)``, ``C2 = q / (1 - q)``.
2. Run Baum-Welch from several annealed initializations and keep the one
   with the highest log-likelihood.
3. Pick the target state, decode with Viterbi, and score the calls.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging

import numpy as np

from .distributions import NBMixtureParams
from .emissions import NMEmissionParams, emission_log_density, emission_m_step_mixture, project
from .errors import DomainError, FitFailureError, ImpossibleObservationError, NumericFailureError
from .hmm import HmmModel, forward_backward, transition_m_step, viterbi
from .nbmix import EmFitReport, fit_nb_mixture
from .trackio import CountMatrix, binning_mismatch

logger = logging.getLogger(__name__)

THETA_FLOOR = 1e-12


@dataclass(frozen=True)
class FitConfig:
    m: int = 3
    tol: float = 1e-6
    max_iter: int = 200
    restarts: int = 8
    anneal_noise: float = 0.1
    qc_threshold: float = 0.09
    seed: int = 0
    threads: int = 1
    inner_iters: int = 5
    stay: float = 0.95
    control_tol: float = 1e-6
    control_max_iter: int = 500

    def __post_init__(self):
        if self.m < 2:
            raise DomainError("the HMM needs at least 2 states")
        if self.restarts < 1:
            raise DomainError("restarts must be at least 1")
        if not 0 < self.qc_threshold < 1:
            raise DomainError("qc_threshold must lie in (0, 1)")
        if self.threads < 1:
            raise DomainError("threads must be at least 1")


@dataclass(eq=False)
class RestartFit:
    model: HmmModel
    emission: NMEmissionParams
    smoothing: object
    emissions_log: np.ndarray
    trace: list
    converged: bool

    @property
    def log_likelihood(self):
        return self.trace[-1]


@dataclass(eq=False)
class DiscretizationResult:
    path: object
    target_state: int
    present_mask: np.ndarray
    target_posterior: np.ndarray
    qc_score: float
    accepted: bool
    model: HmmModel
    fit_trace: list
    control_fit: object = None
    best_restart: int = 0
    qc_threshold: float = 0.09
    converged: bool = True
    notes: list = field(default_factory=list)

    @property
    def emission(self):
        return self.model.emission

    @property
    def log_likelihood(self):
        return self.fit_trace[self.best_restart][-1]


def qc_score(smoothing, path, target):
    """Estimated false-positive fraction among present calls.

    One minus the mean target posterior over windows decoded as the target
    state; 1.0 when nothing is called present.
    """
    phi = smoothing.phi if hasattr(smoothing, "phi") else np.asarray(smoothing)
    states = path.states if hasattr(path, "states") else np.asarray(path)
    called = np.asarray(states) == target
    if not called.any():
        return 1.0
    return float(1.0 - np.mean(phi[called, target]))


def identify_target_state(model):
    """State with the largest non-control to control ratio in its p-component.

    Accepts an ``HmmModel`` carrying its emission parameters, or the
    ``NMEmissionParams`` directly.  Ties go to the lowest index.
    """
    params = getattr(model, "emission", model)
    if not isinstance(params, NMEmissionParams):
        raise DomainError("target identification needs NM emission parameters")
    return int(np.argmax(params.enrichment()))


def initial_emission(z, control_fit, m):
    """Start states from tertiles (m-quantiles) of total non-control counts.

    Each group's profile-to-control mean ratios fix the free weights; the
    Gamma weight is then set by the ratio constraint.
    """
    z = np.asarray(z, dtype=float)
    ctrl = z[:, 0]
    total = z[:, 1:].sum(axis=1) if z.shape[1] > 1 else ctrl
    groups = np.array_split(np.argsort(total, kind="stable"), m)
    ratios = np.ones((m, z.shape[1] + 1))
    for i, idx in enumerate(groups):
        if idx.size == 0:
            continue
        c = ctrl[idx].mean()
        ratios[i, 2:] = (z[idx, 1:].mean(axis=0) + 0.5) / (c + 0.5)
    a, theta, p, q = control_fit.as_tuple()
    c1, c2 = p / (1 - p), q / (1 - q)
    return NMEmissionParams(
        a, max(theta, THETA_FLOOR), c1, c2, project(ratios, c1), project(ratios, c2)
    )


def annealed_restarts(base_init, cfg):
    """Initializations for the restarts.

    The first is ``base_init`` itself.  Restart ``j >= 2`` (1-based) scales
    the free weights by log-normal noise of scale
    ``anneal_noise * 2 ** -((j - 2) // 2)`` and re-projects onto the ratio
    constraints.  Each restart draws from its own stream spawned from
    ``cfg.seed``.
    """
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    out = [base_init]
    for j in range(2, cfg.restarts + 1):
        rng = np.random.Generator(np.random.Philox(streams[j - 1]))
        scale = cfg.anneal_noise * 2.0 ** -((j - 2) // 2)
        p = base_init.p * np.exp(scale * rng.standard_normal(base_init.p.shape))
        q = base_init.q * np.exp(scale * rng.standard_normal(base_init.q.shape))
        out.append(replace(base_init, p=project(p, base_init.c1), q=project(q, base_init.c2)))
    return out


def baum_welch(z, blocks, init, cfg, model=None):
    """Generalized EM for transitions and mixture emissions from one start.

    Stops when the relative log-likelihood change drops to ``cfg.tol`` or
    after ``cfg.max_iter`` E-steps.  ``nu`` stays uniform.
    """
    model = model or HmmModel.sticky(init.m, cfg.stay)
    params = init
    trace = []
    converged = False
    for _ in range(cfg.max_iter):
        e = emission_log_density(params, z)
        sm = forward_backward(model, e, blocks)
        trace.append(sm.log_likelihood)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) <= cfg.tol * abs(trace[-2]):
            converged = True
            break
        Q = transition_m_step(sm, model.Q)
        params = emission_m_step_mixture(z, sm.phi, params, cfg.inner_iters)
        model = HmmModel(model.nu, Q)
    return RestartFit(HmmModel(model.nu, model.Q, params), params, sm, e, trace, converged)


def _control_params(control_fit):
    if isinstance(control_fit, EmFitReport):
        return control_fit.params
    if isinstance(control_fit, NBMixtureParams):
        return control_fit
    raise DomainError("control_fit must be an EmFitReport or NBMixtureParams")


def _as_matrix(control, profiles):
    if isinstance(profiles, CountMatrix):
        if isinstance(control, CountMatrix):
            msg = binning_mismatch(control, profiles)
            if msg:
                raise DomainError(msg)
            if control.r != 1:
                raise DomainError(f"control must have exactly one column, found {control.r}")
            control = control.counts[:, 0]
        blocks = profiles.blocks
        prof = profiles.counts
    else:
        prof = np.asarray(profiles)
        blocks = None
    ctrl = np.asarray(control).reshape(-1)
    prof = np.atleast_2d(prof.T).T if prof.ndim == 1 else prof
    if ctrl.size != prof.shape[0]:
        raise DomainError(f"control has {ctrl.size} windows, profiles have {prof.shape[0]}")
    if prof.shape[1] < 1:
        raise DomainError("need at least one profile")
    return np.column_stack([ctrl, prof]).astype(float), ctrl, blocks


def fit(control, profiles, cfg=None, control_fit=None, blocks=None):
    """Discretize ``profiles`` into present/absent calls.

    ``control`` is a one-column ``CountMatrix`` or a count vector;
    ``profiles`` a ``CountMatrix`` or an ``(n, r)`` array.  Blocks come from
    the profile windows unless given.  ``control_fit`` overrides step 1.
    """
    cfg = cfg or FitConfig()
    z, ctrl, auto_blocks = _as_matrix(control, profiles)
    blocks = blocks if blocks is not None else auto_blocks
    if control_fit is None:
        control_fit = fit_nb_mixture(ctrl, tol=cfg.control_tol, max_iter=cfg.control_max_iter)
    cparams = _control_params(control_fit)

    base = initial_emission(z, cparams, cfg.m)
    starts = annealed_restarts(base, cfg)

    def run(init):
        try:
            return baum_welch(z, blocks, init, cfg)
        except (ImpossibleObservationError, NumericFailureError, FloatingPointError) as exc:
            logger.warning("restart failed: %s", exc)
            return None

    if cfg.threads == 1 or len(starts) == 1:
        fits = [run(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            fits = list(pool.map(run, starts))

    traces = [f.trace if f is not None else [] for f in fits]
    ok = [i for i, f in enumerate(fits) if f is not None and np.isfinite(f.log_likelihood)]
    if not ok:
        raise FitFailureError("every Baum-Welch restart failed", traces)
    best = ok[0]
    for i in ok[1:]:
        if fits[i].log_likelihood > fits[best].log_likelihood:
            best = i
    chosen = fits[best]

    target = identify_target_state(chosen.emission)
    path = viterbi(chosen.model, chosen.emissions_log, blocks)
    present = np.asarray(path.states) == target
    score = qc_score(chosen.smoothing, path, target)
    return DiscretizationResult(
        path=path,
        target_state=target,
        present_mask=present,
        target_posterior=np.asarray(chosen.smoothing.phi[:, target]),
        qc_score=score,
        accepted=bool(score <= cfg.qc_threshold),
        model=chosen.model,
        fit_trace=traces,
        control_fit=control_fit,
        best_restart=best,
        qc_threshold=cfg.qc_threshold,
        converged=chosen.converged,
    )
