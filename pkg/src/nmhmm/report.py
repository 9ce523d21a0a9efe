"""Read-count histograms of a control track against fitted models.

Builds the table behind the overdispersion figures: observed frequency of
each count next to a mean-matched Poisson pmf and the fitted NB mixture
pmf, plus Pearson chi-square statistics for both fits.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import poisson

from .distributions import nb_mixture_log_pmf
from .errors import DomainError


@dataclass(eq=False)
class HistogramTable:
    counts: np.ndarray
    observed: np.ndarray
    poisson: np.ndarray
    mixture: np.ndarray
    n: int
    mean: float
    variance: float
    chi2_poisson: float
    chi2_mixture: float


def chi_square(observed, expected_prob, n):
    """Pearson statistic ``sum (O - E)^2 / E`` with ``E = n * prob``.

    ``observed`` holds observed frequencies; bins whose expected count is
    zero are skipped when nothing was observed there and count as infinite
    otherwise.
    """
    obs = np.asarray(observed, dtype=float) * n
    exp = np.asarray(expected_prob, dtype=float) * n
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(exp > 0, (obs - exp) ** 2 / exp, np.where(obs > 0, np.inf, 0.0))
    return float(terms.sum())


def histogram_table(y, mixture, max_count=50):
    """Tabulate counts ``0..max_count``.

    Chi-square statistics add one tail bin pooling every count above
    ``max_count``.
    """
    yy = np.asarray(y, dtype=np.int64).ravel()
    if yy.size == 0:
        raise DomainError("empty control track")
    if max_count < 0:
        raise DomainError("max_count must be non-negative")
    n = yy.size
    ks = np.arange(max_count + 1)
    observed = np.bincount(np.minimum(yy, max_count + 1), minlength=max_count + 2) / n
    lam = float(yy.mean())
    pois = poisson.pmf(ks, lam)
    mix = np.exp(nb_mixture_log_pmf(mixture, ks))
    tail_obs = observed[-1]
    chi_p = chi_square(np.append(observed[:-1], tail_obs), np.append(pois, poisson.sf(max_count, lam)), n)
    chi_m = chi_square(np.append(observed[:-1], tail_obs), np.append(mix, max(0.0, 1 - mix.sum())), n)
    return HistogramTable(
        ks, observed[:-1], pois, mix, n, lam, float(yy.var()), chi_p, chi_m
    )


def write_histogram(table, path, header=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header is not None:
            fh.write("# " + header + "\n")
        fh.write("count\tobserved\tpoisson\tmixture\n")
        for k, o, p, m in zip(table.counts, table.observed, table.poisson, table.mixture):
            fh.write(f"{k}\t{o:.10g}\t{p:.10g}\t{m:.10g}\n")


def read_histogram(path):
    """Return ``(metadata, columns)`` from a histogram file."""
    meta = {}
    cols = {"count": [], "observed": [], "poisson": [], "mixture": []}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                for tok in line[1:].split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = v
                continue
            if line.startswith("count\t"):
                continue
            k, o, p, m = line.split("\t")
            cols["count"].append(int(k))
            cols["observed"].append(float(o))
            cols["poisson"].append(float(p))
            cols["mixture"].append(float(m))
    return meta, {k: np.array(v) for k, v in cols.items()}
