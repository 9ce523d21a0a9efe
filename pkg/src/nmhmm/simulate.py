"""Synthetic count tracks with planted HMM state paths.

A state path is drawn from ``(nu, Q)``, restarting at every chromosome.
Each window then picks a mixture component with probability ``theta`` and
draws its count vector by the Gamma-Poisson construction of that
component's negative multinomial.
"""

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .emissions import NMEmissionParams, emission_log_density
from .errors import DomainError, TrackFormatError
from .hmm import HmmModel, StatePath
from .trackio import CountMatrix


@dataclass(frozen=True, eq=False)
class SimScenario:
    model: HmmModel
    emission: NMEmissionParams
    n: int
    window_size: int = 300
    seed: int = 0
    chromosomes: tuple = ()
    target: int = None

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be at least 1")
        if self.model.m != self.emission.m:
            raise DomainError("model and emission disagree on the number of states")
        if self.chromosomes and sum(k for _, k in self.chromosomes) != self.n:
            raise DomainError("chromosome lengths must add up to n")

    @property
    def m(self):
        return self.model.m

    @property
    def r(self):
        return self.emission.r

    @property
    def planted_target(self):
        if self.target is not None:
            return self.target
        return int(np.argmax(self.emission.enrichment()))

    def layout(self):
        return self.chromosomes or (("chr1", self.n),)


def planted_scenario(
    n,
    profiles=3,
    enrichment=(0.5, 1.0, 4.0),
    alpha=2.0,
    theta=0.3,
    p=0.7,
    q=0.2,
    stay=0.95,
    window_size=300,
    seed=0,
    chromosomes=(),
):
    """Scenario whose state ``i`` scales every profile by ``enrichment[i]`` relative to control.

    The control dimension follows the NB mixture ``(alpha, theta, p, q)`` in
    every state, so the ratio constraints hold exactly.
    """
    c1, c2 = p / (1 - p), q / (1 - q)
    e = np.asarray(enrichment, dtype=float)
    m = e.size

    def rows(ratio):
        w = np.empty((m, profiles + 2))
        w[:, 0] = ratio
        w[:, 1] = 1.0
        w[:, 2:] = e[:, None]
        return w / w.sum(axis=1, keepdims=True)

    emission = NMEmissionParams(alpha, theta, c1, c2, rows(c1), rows(c2))
    return SimScenario(
        HmmModel.sticky(m, stay), emission, n, window_size, seed, tuple(chromosomes)
    )


@njit(cache=True)
def _walk(cum_nu, cum_Q, u, block_starts, out):
    m = cum_nu.size
    s = 0
    b = 0
    for k in range(u.size):
        if b < block_starts.size and k == block_starts[b]:
            row = cum_nu
            b += 1
        else:
            row = cum_Q[s]
        s = 0
        while s < m - 1 and u[k] >= row[s]:
            s += 1
        out[k] = s


def simulate_dataset(scenario):
    """Return ``(CountMatrix, planted StatePath)``.

    Columns are ``control, profile1, ..., profile{r-1}``.
    """
    root = np.random.SeedSequence(scenario.seed)
    path_rng, comp_rng, count_rng = (np.random.Generator(np.random.Philox(s)) for s in root.spawn(3))
    layout = scenario.layout()
    n = scenario.n
    starts_idx = np.cumsum([0] + [k for _, k in layout[:-1]]).astype(np.int64)

    states = np.empty(n, dtype=np.int64)
    cum_nu = np.cumsum(scenario.model.nu)
    cum_Q = np.cumsum(scenario.model.Q, axis=1)
    _walk(cum_nu, cum_Q, path_rng.random(n), starts_idx, states)

    em = scenario.emission
    first = comp_rng.random(n) < em.theta
    w = np.where(first[:, None], em.p[states], em.q[states])
    beta = w[:, 1] / w[:, 0]
    gammas = w[:, 1:] / w[:, 1:2]
    lam = count_rng.gamma(em.alpha, beta)
    counts = count_rng.poisson(lam[:, None] * gammas).astype(np.int64)

    chroms, starts = [], []
    for name, k in layout:
        chroms.extend([name] * k)
        starts.append(np.arange(k, dtype=np.int64) * scenario.window_size)
    starts = np.concatenate(starts)
    names = ["control"] + [f"profile{l}" for l in range(1, em.r)]
    cm = CountMatrix(chroms, starts, starts + scenario.window_size, counts, names, scenario.window_size)

    dens = emission_log_density(em, counts)
    with np.errstate(divide="ignore"):
        log_nu, log_Q = np.log(scenario.model.nu), np.log(scenario.model.Q)
    ll = dens[np.arange(n), states].sum()
    new_block = np.zeros(n, dtype=bool)
    new_block[starts_idx] = True
    ll += log_nu[states[new_block]].sum()
    ll += log_Q[states[:-1], states[1:]][~new_block[1:]].sum()
    states.setflags(write=False)
    return cm, StatePath(states, float(ll))


@dataclass(frozen=True)
class CallScores:
    precision: float
    recall: float
    accuracy: float
    zero_calls: bool = False
    counts: dict = field(default_factory=dict)


def score_calls(planted, result, target=None):
    """Precision, recall and accuracy of predicted present calls.

    ``planted`` is a boolean mask, or a ``StatePath`` together with the
    planted ``target`` state.  ``result`` is a ``DiscretizationResult`` or a
    boolean mask.  With no present call, precision is reported as 1.0 and
    ``zero_calls`` is set.
    """
    if isinstance(planted, StatePath):
        if target is None:
            raise DomainError("a planted StatePath needs its target state")
        truth = np.asarray(planted.states) == target
    else:
        truth = np.asarray(planted, dtype=bool)
    pred = np.asarray(getattr(result, "present_mask", result), dtype=bool)
    if truth.shape != pred.shape:
        raise DomainError(f"length mismatch: {truth.size} planted vs {pred.size} predicted")
    tp = int(np.sum(truth & pred))
    fp = int(np.sum(~truth & pred))
    fn = int(np.sum(truth & ~pred))
    tn = int(np.sum(~truth & ~pred))
    zero = tp + fp == 0
    precision = 1.0 if zero else tp / (tp + fp)
    recall = tp / (tp + fn) if tp + fn else 1.0
    return CallScores(
        precision, recall, (tp + tn) / truth.size, zero,
        {"tp": tp, "fp": fp, "fn": fn, "tn": tn},
    )


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


def parse_scenario(path, seed=None):
    """Read a key-value scenario file.

    Recognized keys: ``windows``, ``profiles``, ``enrichment``, ``alpha``,
    ``theta``, ``p``, ``q``, ``stay`` or ``transition`` (rows separated by
    ``;``), ``initial``, ``window_size``, ``chromosomes`` (``name:count``
    list), ``target`` (1-based), ``seed``.
    """
    kv = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise TrackFormatError("expected key = value", path, lineno)
            key, val = (s.strip() for s in line.split("=", 1))
            kv[key] = (val, lineno)

    known = {"windows", "profiles", "enrichment", "alpha", "theta", "p", "q", "stay",
             "transition", "initial", "window_size", "chromosomes", "target", "seed", "states"}
    for key, (_, lineno) in kv.items():
        if key not in known:
            raise TrackFormatError(f"unknown key {key!r}", path, lineno)

    def get(key, conv, default=None):
        if key not in kv:
            if default is None:
                raise TrackFormatError(f"missing required key {key!r}", path)
            return default
        val, lineno = kv[key]
        try:
            return conv(val)
        except ValueError as exc:
            raise TrackFormatError(f"bad value for {key}: {exc}", path, lineno) from None

    try:
        n = get("windows", int)
        chromosomes = ()
        if "chromosomes" in kv:
            chromosomes = tuple(
                (name.strip(), int(k)) for name, k in
                (item.split(":") for item in kv["chromosomes"][0].split(","))
            )
        enrichment = get("enrichment", _floats, [0.5, 1.0, 4.0])
        if "states" in kv and get("states", int) != len(enrichment):
            raise TrackFormatError("states disagrees with the enrichment list", path)
        sc = planted_scenario(
            n,
            profiles=get("profiles", int, 1),
            enrichment=enrichment,
            alpha=get("alpha", float, 2.0),
            theta=get("theta", float, 0.3),
            p=get("p", float, 0.7),
            q=get("q", float, 0.2),
            stay=get("stay", float, 0.95),
            window_size=get("window_size", int, 300),
            seed=seed if seed is not None else get("seed", int, 0),
            chromosomes=chromosomes,
        )
        model = sc.model
        if "transition" in kv:
            Q = np.array([_floats(row) for row in kv["transition"][0].split(";")])
            model = HmmModel(model.nu, Q)
        if "initial" in kv:
            model = HmmModel(get("initial", _floats), model.Q)
        target = get("target", int, 0) - 1 if "target" in kv else None
        return SimScenario(model, sc.emission, n, sc.window_size, sc.seed, sc.chromosomes, target)
    except DomainError as exc:
        raise TrackFormatError(str(exc), path) from None
    except ValueError as exc:
        raise TrackFormatError(f"malformed value: {exc}", path) from None
