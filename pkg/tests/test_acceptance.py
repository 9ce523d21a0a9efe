"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` or
``python tests/test_acceptance.py``.  Criterion 7 dominates the runtime.

Criterion 9 repeats criteria 5-8 with 4 and 8 worker threads (restart pool
and BLAS pool) and compares fingerprints of every output with the
single-threaded run bit for bit.
"""

import functools
import hashlib
import math
import sys
import tempfile
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from nmhmm.cli import main as cli_main
from nmhmm.distributions import (
    NBMixtureParams,
    NegBinomialParams,
    NegMultinomialParams,
    nb_log_pmf,
    nm_conditional,
    nm_log_pmf,
    nm_marginal,
    sample_nb_mixture,
)
from nmhmm.hmm import HmmModel, forward_backward, viterbi
from nmhmm.nbmix import fit_nb_mixture
from nmhmm.pipeline import FitConfig, fit
from nmhmm.report import read_histogram
from nmhmm.simulate import planted_scenario, score_calls, simulate_dataset
from nmhmm.special import digamma, log_gamma, trigamma
from nmhmm.trackio import CountMatrix, write_count_table
from oracles import enumerate_hmm, random_hmm

pytestmark = pytest.mark.slow

TRUTH = NBMixtureParams(2.0, 0.3, 0.7, 0.2)
RECOVERY_SEEDS = (101, 202, 303)
E2E_SEED = 6
CALIBRATION_RUNS = 100
HISTOGRAM_RUNS = 100
THREAD_COUNTS = (1, 4, 8)


def report(capsys, number, ok, detail, elapsed, budget=None):
    within = budget is None or elapsed <= budget
    verdict = "PASS" if ok and within else "FAIL"
    timing = f"{elapsed:.1f}s" + (f" of {budget:g}s" if budget else "")
    with capsys.disabled():
        print(f"\n[{verdict}] criterion {number}: {detail} ({timing})")
    assert ok, detail
    assert within, f"criterion {number} took {elapsed:.1f}s, budget {budget}s"


def _digest(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def _result_digest(res):
    traces = np.concatenate([np.asarray(t, dtype=float) for t in res.fit_trace])
    em = res.emission
    return _digest(
        np.asarray(res.path.states), res.target_posterior, traces, em.p, em.q,
        np.array([res.qc_score, res.target_state, res.best_restart], dtype=float),
    )


# Criterion 1 ------------------------------------------------------------------


def _stirling(x, terms=50, shift=40):
    with mpmath.workdps(60):
        x = mpmath.mpf(x)
        acc = mpmath.mpf(0)
        while x < shift:
            acc -= mpmath.log(x)
            x += 1
        s = (x - mpmath.mpf(1) / 2) * mpmath.log(x) - x + mpmath.log(2 * mpmath.pi) / 2
        for k in range(1, terms + 1):
            s += mpmath.bernoulli(2 * k) / (2 * k * (2 * k - 1) * x ** (2 * k - 1))
        return float(s + acc)


def test_criterion_1_special_functions(capsys):
    t0 = time.perf_counter()
    errors = {}
    grid = np.geomspace(1e-3, 1e6, 2000)
    errors["psi recurrence"] = float(
        np.max(np.abs(digamma(grid + 1) - digamma(grid) - 1 / grid) / np.maximum(1.0, 1 / grid))
    )
    errors["psi' recurrence"] = float(
        np.max(np.abs(trigamma(grid + 1) - trigamma(grid) + 1 / grid**2) / np.maximum(1.0, 1 / grid**2))
    )
    h = 1e-5
    errors["psi vs FD lnGamma"] = max(
        abs(digamma(x) - (log_gamma(x + h) - log_gamma(x - h)) / (2 * h)) for x in (0.5, 1, 2, 10, 100)
    )
    h = 1e-6
    errors["psi(7.7) FD"] = abs(digamma(7.7) - (log_gamma(7.7 + h) - log_gamma(7.7 - h)) / (2 * h))
    errors["psi'(3.14) FD"] = abs(trigamma(3.14) - (digamma(3.14 + h) - digamma(3.14 - h)) / (2 * h))
    errors["lnGamma(10.3) series"] = abs(log_gamma(10.3) - _stirling(10.3))
    rel = 0.0
    with mpmath.workdps(30):
        for x in np.geomspace(1e-6, 1e7, 40):
            ref = float(mpmath.loggamma(float(x)))
            rel = max(rel, abs(log_gamma(float(x)) - ref) / max(1.0, abs(ref)))
    errors["lnGamma relative"] = rel
    errors["known values"] = max(
        abs(log_gamma(1.0)),
        abs(log_gamma(0.5) - math.log(math.sqrt(math.pi))),
        abs(digamma(1.0) + 0.5772156649015329),
        abs(trigamma(1.0) - math.pi**2 / 6),
        abs(trigamma(2.0) - math.pi**2 / 6 + 1),
    )
    limits = {
        "psi recurrence": 1e-10, "psi' recurrence": 1e-10, "psi vs FD lnGamma": 1e-5,
        "psi(7.7) FD": 1e-6, "psi'(3.14) FD": 1e-6, "lnGamma(10.3) series": 1e-10,
        "lnGamma relative": 1e-12, "known values": 1e-12,
    }
    bad = [k for k in limits if not errors[k] <= limits[k]]
    worst = max(errors[k] / limits[k] for k in limits)
    detail = f"{len(limits) - len(bad)}/{len(limits)} suites within tolerance, worst error/tol {worst:.2g}"
    if bad:
        detail += f", failing: {', '.join(bad)}"
    report(capsys, 1, not bad, detail, time.perf_counter() - t0, 1.0)


# Criterion 2 ------------------------------------------------------------------


def test_criterion_2_distributions(capsys):
    t0 = time.perf_counter()
    checks = {}
    checks["NB sum"] = abs(np.exp(nb_log_pmf(NegBinomialParams(2.5, 0.4), np.arange(501))).sum() - 1)
    prm = NegMultinomialParams(2.0, [0.5, 0.3, 0.2])
    a, b = np.meshgrid(np.arange(401), np.arange(401), indexing="ij")
    grid = np.exp(nm_log_pmf(prm, np.stack([a.ravel(), b.ravel()], axis=1))).reshape(401, 401)
    checks["NM sum"] = abs(grid.sum() - 1)
    k = np.arange(60)[:, None]
    checks["marginal {1}"] = np.max(np.abs(np.exp(nm_log_pmf(nm_marginal(prm, {1}), k)) - grid.sum(axis=1)[:60]))
    checks["marginal {2}"] = np.max(np.abs(np.exp(nm_log_pmf(nm_marginal(prm, {2}), k)) - grid.sum(axis=0)[:60]))
    worst = 0.0
    for given in (0, 2, 7, 15):
        brute = grid[:, given] / grid[:, given].sum()
        cond = np.exp(nm_log_pmf(nm_conditional(prm, {2: given}), k))
        worst = max(worst, np.max(np.abs(cond - brute[:60])))
        brute = grid[given, :] / grid[given, :].sum()
        cond = np.exp(nm_log_pmf(nm_conditional(prm, {1: given}), k))
        worst = max(worst, np.max(np.abs(cond - brute[:60])))
    checks["conditional"] = worst
    bad = [name for name, err in checks.items() if not err <= 1e-8]
    detail = "pmfs normalize and marginal/conditional match summation: " + ", ".join(
        f"{name} {err:.1e}" for name, err in checks.items()
    )
    report(capsys, 2, not bad, detail, time.perf_counter() - t0, 10.0)


# Criterion 3 ------------------------------------------------------------------


def test_criterion_3_hmm_enumeration(capsys):
    t0 = time.perf_counter()
    worst = {"phi": 0.0, "pair": 0.0, "loglik": 0.0, "viterbi": 0.0}
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        m = 1 + seed % 3
        n = 1 + (seed // 3) % 8
        nu, Q, log_e = random_hmm(rng, m, n)
        split = int(rng.integers(1, n)) if n > 2 and seed % 2 else n
        blocks = [(0, split), (split, n)] if split < n else None
        ll, phi, pair, _, best_lp = enumerate_hmm(nu, Q, log_e, blocks)
        model = HmmModel(nu, Q)
        sm = forward_backward(model, log_e, blocks)
        vp = viterbi(model, log_e, blocks)
        worst["phi"] = max(worst["phi"], float(np.max(np.abs(sm.phi - phi))))
        worst["pair"] = max(worst["pair"], float(np.max(np.abs(sm.pair_phi - pair))))
        worst["loglik"] = max(worst["loglik"], abs(sm.log_likelihood - ll))
        worst["viterbi"] = max(worst["viterbi"], abs(vp.path_log_likelihood - best_lp))
    ok = all(v <= 1e-10 for v in worst.values())
    detail = "100 seeds, m<=3, n<=8, max abs error " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(capsys, 3, ok, detail, time.perf_counter() - t0, 30.0)


# Criterion 4 ------------------------------------------------------------------


def test_criterion_4_em_monotonicity(capsys):
    t0 = time.perf_counter()
    worst_nb, worst_bw, traces = 0.0, 0.0, 0
    for seed in range(20):
        rng = np.random.default_rng(40_000 + seed)
        p, q = sorted(rng.uniform(0.1, 0.9, 2), reverse=True)
        prm = NBMixtureParams(float(rng.uniform(0.5, 5)), float(rng.uniform(0.1, 0.9)), float(p), float(q))
        y = sample_nb_mixture(prm, 20_000, seed=seed)
        if np.unique(y).size > 1:
            trace = np.array(fit_nb_mixture(y).log_likelihood_trace)
            worst_nb = max(worst_nb, float(np.max(-np.diff(trace), initial=0.0)))
        sc = planted_scenario(
            3000, profiles=int(rng.integers(1, 4)),
            enrichment=tuple(np.sort(rng.uniform(0.3, 5.0, 3))), seed=seed,
        )
        counts, _ = simulate_dataset(sc)
        res = fit(counts.select([0]), counts.select(list(range(1, counts.r))),
                  FitConfig(restarts=2, seed=seed))
        for t in res.fit_trace:
            t = np.asarray(t)
            traces += 1
            worst_bw = max(worst_bw, float(np.max(-np.diff(t) / np.abs(t[:-1]), initial=0.0)))
    ok = worst_nb <= 1e-8 and worst_bw <= 1e-6
    detail = (
        f"20 datasets; largest NB-mixture decrease {worst_nb:.1e} (slack 1e-8), "
        f"largest relative Baum-Welch decrease over {traces} traces {worst_bw:.1e} (slack 1e-6)"
    )
    report(capsys, 4, ok, detail, time.perf_counter() - t0, 120.0)


# Criteria 5-8 as functions of the thread count --------------------------------


@functools.lru_cache(maxsize=None)
def run_recovery(threads):
    with threadpool_limits(threads):
        fits = [fit_nb_mixture(sample_nb_mixture(TRUTH, 200_000, seed=s)) for s in RECOVERY_SEEDS]
    rel = [max(abs(e - t) / t for e, t in zip(f.params.as_tuple(), TRUTH.as_tuple())) for f in fits]
    fp = _digest(*(np.array(f.params.as_tuple() + tuple(f.log_likelihood_trace)) for f in fits))
    return rel, fp


@functools.lru_cache(maxsize=None)
def run_end_to_end(threads):
    sc = planted_scenario(50_000, profiles=3, seed=E2E_SEED)
    counts, planted = simulate_dataset(sc)
    with threadpool_limits(threads):
        res = fit(counts.select([0]), counts.select([1, 2, 3]), FitConfig(seed=E2E_SEED, threads=threads))
    truth = planted.states == sc.planted_target
    return score_calls(truth, res).accuracy, res.accepted, res.qc_score, _result_digest(res)


def _calibration_fit(seed, enrichment, threads):
    sc = planted_scenario(5000, profiles=3, enrichment=enrichment, seed=seed)
    counts, _ = simulate_dataset(sc)
    res = fit(counts.select([0]), counts.select([1, 2, 3]), FitConfig(seed=seed, threads=threads))
    return res.qc_score, res.accepted, _result_digest(res)


@functools.lru_cache(maxsize=None)
def run_calibration(threads):
    with threadpool_limits(threads):
        noise = [_calibration_fit(70_000 + s, (1.0, 1.0, 1.0), threads) for s in range(CALIBRATION_RUNS)]
        signal = [_calibration_fit(71_000 + s, (0.5, 1.0, 4.0), threads) for s in range(CALIBRATION_RUNS)]
    return noise, signal


@functools.lru_cache(maxsize=None)
def run_histograms(threads):
    out = []
    with tempfile.TemporaryDirectory() as tmp, threadpool_limits(threads):
        for seed in range(HISTOGRAM_RUNS):
            y = sample_nb_mixture(TRUTH, 20_000, seed=80_000 + seed)
            s = np.arange(y.size) * 300
            ctrl = Path(tmp) / f"ctrl{seed}.tsv"
            write_count_table(CountMatrix(["chr1"] * y.size, s, s + 300, y[:, None], ["control"], 300), ctrl)
            hist = Path(tmp) / f"hist{seed}.tsv"
            code = cli_main(["histogram", "--control", str(ctrl), "--out", str(hist)])
            meta, _ = read_histogram(hist) if code == 0 else ({}, None)
            out.append((
                code,
                float(meta.get("chi2_mixture", "nan")),
                float(meta.get("chi2_poisson", "nan")),
                hashlib.sha256(hist.read_bytes()).hexdigest() if code == 0 else "",
            ))
    return out


# Criterion 5 ------------------------------------------------------------------


def test_criterion_5_parameter_recovery(capsys):
    t0 = time.perf_counter()
    rel, _ = run_recovery(1)
    ok = all(r <= 0.10 for r in rel)
    detail = (
        f"n=2e5, seeds {RECOVERY_SEEDS}: worst relative error per seed "
        + ", ".join(f"{r:.3f}" for r in rel) + " (limit 0.10)"
    )
    report(capsys, 5, ok, detail, time.perf_counter() - t0, 60.0)


# Criterion 6 ------------------------------------------------------------------


def test_criterion_6_end_to_end(capsys):
    t0 = time.perf_counter()
    acc, accepted, qc, _ = run_end_to_end(1)
    ok = acc >= 0.95 and accepted
    detail = f"n=5e4, r=3: accuracy {acc:.4f} (>= 0.95), qc_score {qc:.4f}, accepted={accepted}"
    report(capsys, 6, ok, detail, time.perf_counter() - t0, 300.0)


# Criterion 7 ------------------------------------------------------------------


def test_criterion_7_qc_calibration(capsys):
    t0 = time.perf_counter()
    noise, signal = run_calibration(1)
    rejected = sum(1 for qc, acc, _ in noise if qc > 0.09 and not acc)
    accepted = sum(1 for _, acc, _ in signal if acc)
    ok = rejected >= 90 and accepted >= 90
    qn = np.array([qc for qc, _, _ in noise])
    qs = np.array([qc for qc, _, _ in signal])
    detail = (
        f"noise rejected with qc>0.09 in {rejected}/{CALIBRATION_RUNS} (min qc {qn.min():.3f}), "
        f"signal accepted in {accepted}/{CALIBRATION_RUNS} (max qc {qs.max():.3f})"
    )
    report(capsys, 7, ok, detail, time.perf_counter() - t0, 1200.0)


# Criterion 8 ------------------------------------------------------------------


def test_criterion_8_overdispersion(capsys):
    t0 = time.perf_counter()
    runs = run_histograms(1)
    wins = sum(1 for code, mix, poi, _ in runs if code == 0 and mix < poi)
    ratios = [mix / poi for code, mix, poi, _ in runs if code == 0]
    ok = wins == HISTOGRAM_RUNS
    detail = (
        f"mixture chi-square below Poisson in {wins}/{HISTOGRAM_RUNS} seeds "
        f"(largest mixture/Poisson ratio {max(ratios):.2e})"
    )
    report(capsys, 8, ok, detail, time.perf_counter() - t0, 120.0)


# Criterion 9 ------------------------------------------------------------------


def test_criterion_9_determinism(capsys):
    t0 = time.perf_counter()
    fingerprints = {
        "5": lambda t: run_recovery(t)[1],
        "6": lambda t: run_end_to_end(t)[3],
        "7": lambda t: [d for arm in run_calibration(t) for _, _, d in arm],
        "8": lambda t: [d for *_, d in run_histograms(t)],
    }
    mismatched = []
    for name, fn in fingerprints.items():
        reference = fn(THREAD_COUNTS[0])
        for t in THREAD_COUNTS[1:]:
            if fn(t) != reference:
                mismatched.append(f"{name}@{t}")
    ok = not mismatched
    detail = (
        f"criteria 5-8 at threads {THREAD_COUNTS}: "
        + ("all outputs bitwise identical" if ok else "differences in " + ", ".join(mismatched))
    )
    report(capsys, 9, ok, detail, time.perf_counter() - t0)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
