from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from nmhmm.distributions import NBMixtureParams
from nmhmm.emissions import NMEmissionParams, project
from nmhmm.errors import DomainError
from nmhmm.hmm import StatePath
from nmhmm.pipeline import (
    FitConfig,
    annealed_restarts,
    baum_welch,
    fit,
    identify_target_state,
    initial_emission,
    qc_score,
)
from nmhmm.simulate import planted_scenario, score_calls, simulate_dataset


def emission_with(enrichment, c=2.0):
    e = np.asarray(enrichment, dtype=float)
    w = np.column_stack([np.ones_like(e), np.ones_like(e), e, e])
    return NMEmissionParams(2.0, 0.3, c, 0.25, project(w, c), project(w, 0.25))


def test_identify_target_state():
    assert identify_target_state(emission_with([1.0, 1.5, 3.0])) == 2
    assert identify_target_state(emission_with([1.0, 1.0, 1.0])) == 0
    with pytest.raises(DomainError):
        identify_target_state(SimpleNamespace(emission=None))


def _phi(post, target=0, m=2):
    phi = np.zeros((len(post), m))
    phi[:, target] = post
    phi[:, 1 - target] = 1 - np.asarray(post)
    return SimpleNamespace(phi=phi)


def test_qc_score_examples():
    assert qc_score(_phi([1.0, 1.0, 0.2]), StatePath(np.array([0, 0, 1]), 0.0), 0) == 0.0
    got = qc_score(_phi([0.9, 0.9, 0.6, 0.1]), StatePath(np.array([0, 0, 0, 1]), 0.0), 0)
    assert got == pytest.approx(0.2, abs=1e-15)
    assert qc_score(_phi([0.3, 0.2]), StatePath(np.array([1, 1]), 0.0), 0) == 1.0


@pytest.fixture(scope="module")
def small_data():
    sc = planted_scenario(4000, profiles=2, seed=5, chromosomes=(("chr1", 2500), ("chr2", 1500)))
    counts, path = simulate_dataset(sc)
    return sc, counts, path


def test_annealed_restarts(small_data):
    _, counts, _ = small_data
    base = initial_emission(counts.counts.astype(float), NBMixtureParams(2.0, 0.3, 0.7, 0.2), 3)
    assert annealed_restarts(base, FitConfig(restarts=1)) == [base]
    a = annealed_restarts(base, FitConfig(restarts=5, seed=3))
    b = annealed_restarts(base, FitConfig(restarts=5, seed=3))
    assert len(a) == 5 and a[0] is base
    for x, y in zip(a, b):
        assert np.array_equal(x.p, y.p) and np.array_equal(x.q, y.q)
    for init in a:
        np.testing.assert_allclose(init.p[:, 0] / init.p[:, 1], base.c1, rtol=1e-9)
    assert not np.array_equal(a[1].p, a[2].p)


def test_baum_welch_monotone(small_data):
    _, counts, _ = small_data
    z = counts.counts.astype(float)
    base = initial_emission(z, NBMixtureParams(2.0, 0.3, 0.7, 0.2), 3)
    cfg = FitConfig(max_iter=60, tol=0.0)
    for init in annealed_restarts(base, replace(cfg, restarts=3)):
        trace = np.array(baum_welch(z, counts.blocks, init, cfg).trace)
        assert np.all(np.diff(trace) >= -1e-6 * np.abs(trace[:-1]))


def test_fit_recovers_planted_target(small_data):
    sc, counts, path = small_data
    res = fit(counts.select([0]), counts.select([1, 2]), FitConfig(restarts=4, seed=1))
    assert res.target_state == identify_target_state(res.model)
    truth = path.states == sc.planted_target
    assert score_calls(truth, res).accuracy >= 0.95
    assert res.accepted and res.qc_score <= 0.09
    assert len(res.fit_trace) == 4
    assert res.log_likelihood == max(t[-1] for t in res.fit_trace)


def test_fit_accepts_plain_arrays(small_data):
    _, counts, _ = small_data
    a = fit(counts.counts[:, 0], counts.counts[:, 1:], FitConfig(restarts=2), blocks=counts.blocks)
    b = fit(counts.select([0]), counts.select([1, 2]), FitConfig(restarts=2))
    assert np.array_equal(a.path.states, b.path.states)
    assert a.qc_score == b.qc_score


def test_noise_is_rejected():
    sc = planted_scenario(5000, profiles=3, enrichment=(1.0, 1.0, 1.0), seed=8)
    counts, _ = simulate_dataset(sc)
    res = fit(counts.select([0]), counts.select([1, 2, 3]), FitConfig(restarts=4, seed=8))
    assert res.qc_score > 0.09 and not res.accepted


def test_single_profile_strong_signal_posteriors():
    sc = planted_scenario(5000, profiles=1, enrichment=(0.5, 1.0, 20.0), seed=0)
    counts, path = simulate_dataset(sc)
    res = fit(counts.select([0]), counts.select([1]), FitConfig(restarts=4))
    assert res.target_state == sc.planted_target
    planted = path.states == sc.planted_target
    interior = planted.copy()
    interior[1:] &= planted[:-1]
    interior[:-1] &= planted[1:]
    post = res.target_posterior[interior]
    assert np.median(post) > 0.99
    assert np.mean(post > 0.99) >= 0.95


def test_thread_count_does_not_change_result(small_data):
    _, counts, _ = small_data
    runs = [fit(counts.select([0]), counts.select([1, 2]), FitConfig(restarts=4, threads=t)) for t in (1, 3)]
    a, b = runs
    assert np.array_equal(a.path.states, b.path.states)
    assert np.array_equal(a.target_posterior, b.target_posterior)
    assert a.fit_trace == b.fit_trace
    assert a.qc_score == b.qc_score


def test_binning_mismatch_is_reported(small_data):
    _, counts, _ = small_data
    other = counts.subset(np.arange(counts.n) != 10)
    with pytest.raises(DomainError, match="#11: control has chr1:3300-3600, profiles have chr1:3000-3300"):
        fit(other.select([0]), counts.select([1, 2]))
    with pytest.raises(DomainError):
        fit(counts.counts[:100, 0], counts.counts[:99, 1:])


def test_config_validation():
    with pytest.raises(DomainError):
        FitConfig(m=1)
    with pytest.raises(DomainError):
        FitConfig(qc_threshold=1.5)
    with pytest.raises(DomainError):
        FitConfig(restarts=0)
