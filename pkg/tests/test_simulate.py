import math

import numpy as np
import pytest
from scipy.stats import chisquare

from nmhmm.distributions import NegMultinomialParams, nm_log_pmf, nm_marginal
from nmhmm.emissions import NMEmissionParams
from nmhmm.errors import DomainError, TrackFormatError
from nmhmm.hmm import HmmModel, StatePath
from nmhmm.simulate import SimScenario, parse_scenario, planted_scenario, score_calls, simulate_dataset

ROW = np.array([0.3, 0.2, 0.15, 0.35])


def iid_scenario(n, seed=0):
    c = ROW[0] / ROW[1]
    em = NMEmissionParams(2.5, 1.0, c, c, ROW[None, :], ROW[None, :])
    return SimScenario(HmmModel([1.0], [[1.0]]), em, n, seed=seed)


def test_iid_means_within_three_se():
    counts, path = simulate_dataset(iid_scenario(100_000, seed=4))
    z = counts.counts
    assert np.all(path.states == 0)
    expect = 2.5 * ROW[1:] / ROW[0]
    se = z.std(axis=0) / math.sqrt(z.shape[0])
    assert np.all(np.abs(z.mean(axis=0) - expect) < 3 * se)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_iid_marginal_law(seed):
    counts, _ = simulate_dataset(iid_scenario(100_000, seed=seed))
    law = nm_marginal(NegMultinomialParams(2.5, ROW), {1})
    y = counts.counts[:, 0]
    top = 25
    obs = np.bincount(np.minimum(y, top), minlength=top + 1)
    prob = np.exp(nm_log_pmf(law, np.arange(top)[:, None]))
    prob = np.append(prob, 1 - prob.sum())
    assert chisquare(obs, prob * y.size).pvalue > 1e-3


def test_identity_chain_stays_put():
    sc = planted_scenario(500, profiles=2)
    sc = SimScenario(HmmModel([1.0, 0.0, 0.0], np.eye(3)), sc.emission, 500)
    _, path = simulate_dataset(sc)
    assert np.all(path.states == 0)


def test_fixed_seed_is_reproducible():
    a, pa = simulate_dataset(planted_scenario(2000, seed=9))
    b, pb = simulate_dataset(planted_scenario(2000, seed=9))
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(pa.states, pb.states)
    assert pa.path_log_likelihood == pb.path_log_likelihood
    c, _ = simulate_dataset(planted_scenario(2000, seed=10))
    assert not np.array_equal(a.counts, c.counts)


def test_chromosome_layout_restarts_chain():
    sc = planted_scenario(300, chromosomes=(("chr1", 100), ("chr2", 200)))
    counts, _ = simulate_dataset(sc)
    assert counts.blocks == [(0, 100), (100, 300)]
    assert counts.names == ("control", "profile1", "profile2", "profile3")
    with pytest.raises(DomainError):
        planted_scenario(300, chromosomes=(("chr1", 100),))


def test_planted_target_is_most_enriched():
    assert planted_scenario(10, enrichment=(1.0, 5.0, 0.2)).planted_target == 1


def test_score_calls_perfect():
    truth = np.array([0, 1, 1, 0, 1], dtype=bool)
    s = score_calls(truth, truth)
    assert (s.precision, s.recall, s.accuracy) == (1.0, 1.0, 1.0)


def test_score_calls_zero_calls():
    truth = np.array([0, 1, 1, 0], dtype=bool)
    s = score_calls(truth, np.zeros(4, dtype=bool))
    assert s.precision == 1.0 and s.zero_calls and s.recall == 0.0


def test_score_calls_from_path():
    path = StatePath(np.array([2, 2, 0, 1]), 0.0)
    s = score_calls(path, np.array([1, 0, 0, 0], dtype=bool), target=2)
    assert (s.precision, s.recall, s.accuracy) == (1.0, 0.5, 0.75)
    with pytest.raises(DomainError):
        score_calls(path, np.zeros(4, dtype=bool))


def test_random_prediction_accuracy(rng):
    n = 20_000
    truth = np.zeros(n, dtype=bool)
    truth[: n // 2] = True
    s = score_calls(truth, rng.random(n) < 0.5)
    assert abs(s.accuracy - 0.5) < 3 * math.sqrt(0.25 / n)


def test_parse_scenario(tmp_path):
    f = tmp_path / "s.txt"
    f.write_text(
        "# planted test\nwindows = 400\nprofiles = 2\nenrichment = 0.5, 1, 6\n"
        "transition = 0.9 0.05 0.05; 0.05 0.9 0.05; 0.1 0.1 0.8\n"
        "chromosomes = chrA:150, chrB:250\nseed = 7\ntarget = 3\n"
    )
    sc = parse_scenario(f)
    assert (sc.n, sc.m, sc.r, sc.seed, sc.planted_target) == (400, 3, 3, 7, 2)
    np.testing.assert_allclose(sc.model.Q[2], [0.1, 0.1, 0.8])
    assert parse_scenario(f, seed=11).seed == 11


@pytest.mark.parametrize(
    "text",
    ["profiles = 2\n", "windows = ten\n", "windows = 10\ncolour = red\n", "windows = 10\nalpha = -1\n",
     "windows 10\n", "windows = 10\ntransition = 0.5 0.5; 1 0\n"],
)
def test_parse_scenario_errors(tmp_path, text):
    f = tmp_path / "s.txt"
    f.write_text(text)
    with pytest.raises(TrackFormatError):
        parse_scenario(f)
