"""Convergence diagnostics, HPD intervals and replication metrics.

All functions are pure. Geweke's statistic uses a Bartlett lag-window
estimate of the spectral density at zero with window ``floor(sqrt(n))``;
Raftery-Lewis follows the usual binary-chain reduction at a quantile with a
BIC search for the thinning at which a first-order Markov chain suffices.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import DomainError, InsufficientDrawsError

GEWEKE_FIRST = 0.1
GEWEKE_LAST = 0.5
GEWEKE_MIN_SEGMENT = 10
HPD_MIN_SAMPLES = 20


@dataclass(frozen=True)
class HpdInterval:
    lower: float
    upper: float
    mass: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise DomainError("HPD interval with lower > upper")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper


@dataclass(frozen=True)
class ReplicationSummary:
    rmse: float
    rae: float
    coverage: float
    width: float
    efficiency: Optional[float] = None
    n: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# Geweke


def spectral_density_zero(x: np.ndarray) -> float:
    """Bartlett lag-window estimate of the spectral density at frequency zero.

    Returns the long-run variance ``gamma_0 + 2 sum_k w_k gamma_k`` with
    ``w_k = 1 - k / (b + 1)`` and ``b = floor(sqrt(n))``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    b = int(math.isqrt(n))
    xc = x - x.mean()
    # autocovariances by FFT, zero-padded to avoid wrap-around
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, m)
    acov = np.fft.irfft(f * np.conj(f), m)[: b + 1] / n
    k = np.arange(1, b + 1)
    return float(acov[0] + 2.0 * np.sum((1.0 - k / (b + 1)) * acov[1:]))


def geweke_z(series: Sequence[float], frac_first: float = GEWEKE_FIRST,
             frac_last: float = GEWEKE_LAST) -> float:
    """Geweke's z-score comparing the means of the first and last parts of a chain.

    Parameters
    ----------
    series : sequence of float
        Draws in iteration order.
    frac_first, frac_last : float
        Fractions of the chain forming the two segments; they must not overlap.

    Returns
    -------
    float
        Asymptotically standard normal under stationarity.
    """
    x = np.asarray(series, dtype=float)
    if not (0 < frac_first < 1 and 0 < frac_last < 1) or frac_first + frac_last > 1:
        raise DomainError("segment fractions must lie in (0, 1) and not overlap")
    n = len(x)
    n1 = int(math.floor(frac_first * n))
    n2 = int(math.floor(frac_last * n))
    if min(n1, n2) < GEWEKE_MIN_SEGMENT:
        raise InsufficientDrawsError(
            f"Geweke segments need at least {GEWEKE_MIN_SEGMENT} draws each; chain has {n}")
    a, b = x[:n1], x[n - n2:]
    s1, s2 = spectral_density_zero(a), spectral_density_zero(b)
    var = s1 / n1 + s2 / n2
    if not var > 0 or not np.isfinite(var):
        raise DomainError("degenerate (zero-variance) series")
    return float((a.mean() - b.mean()) / math.sqrt(var))


# --------------------------------------------------------------------------
# Raftery-Lewis


def raftery_lewis_nmin(q: float = 0.025, r: float = 0.005, s: float = 0.95) -> int:
    """Chain length needed for independent draws: ``q (1 - q) z^2 / r^2``."""
    z = stats.norm.ppf(0.5 * (1.0 + s))
    return int(math.ceil(q * (1.0 - q) * z * z / (r * r)))


def _second_order_bic(d: np.ndarray) -> float:
    """BIC of a second-order against a first-order binary Markov chain (G^2 - 2 log n)."""
    n = len(d)
    t = np.zeros((2, 2, 2))
    np.add.at(t, (d[:-2], d[1:-1], d[2:]), 1.0)
    g2 = 0.0
    for i1 in range(2):
        for i2 in range(2):
            for i3 in range(2):
                if t[i1, i2, i3] > 0:
                    fitted = t[i1, i2, :].sum() * t[:, i2, i3].sum() / t[:, i2, :].sum()
                    g2 += 2.0 * t[i1, i2, i3] * math.log(t[i1, i2, i3] / fitted)
    return g2 - 2.0 * math.log(n - 2)


def raftery_lewis(series: Sequence[float], q: float = 0.025, r: float = 0.005,
                  s: float = 0.95, converge_eps: float = 0.001) -> tuple:
    """Raftery-Lewis run-length diagnostic.

    Parameters
    ----------
    series : sequence of float
        Draws in iteration order.
    q, r, s : float
        Quantile, accuracy and probability.
    converge_eps : float
        Precision of the burn-in estimate.

    Returns
    -------
    (int, float)
        ``n_min`` and the dependence factor ``(burn-in + required) / n_min``.
    """
    if not (0 < q < 1 and r > 0 and 0 < s < 1):
        raise DomainError("need 0 < q < 1, r > 0 and 0 < s < 1")
    x = np.asarray(series, dtype=float)
    nmin = raftery_lewis_nmin(q, r, s)
    if len(x) < nmin:
        raise InsufficientDrawsError(
            f"insufficient draws: Raftery-Lewis needs at least {nmin} draws for "
            f"q={q}, r={r}, s={s}; chain has {len(x)}")
    dichot = (x <= np.quantile(x, q)).astype(np.intp)
    if dichot.min() == dichot.max():
        raise DomainError("degenerate series: indicator at the quantile is constant")
    k = 1
    while True:
        d = dichot[::k]
        if len(d) < 3:
            raise InsufficientDrawsError("insufficient draws for the thinning search")
        if _second_order_bic(d) < 0:
            break
        k += 1
    t = np.zeros((2, 2))
    np.add.at(t, (d[:-1], d[1:]), 1.0)
    if t[0].sum() == 0 or t[1].sum() == 0:
        raise DomainError("degenerate series: one indicator state never left")
    a = t[0, 1] / t[0].sum()
    b = t[1, 0] / t[1].sum()
    if a + b == 0:
        return nmin, math.inf
    z = stats.norm.ppf(0.5 * (1.0 + s))
    rho = abs(1.0 - a - b)
    burn = math.log(converge_eps * (a + b) / max(a, b)) / math.log(rho) if 0 < rho < 1 else 0.0
    nburn = math.ceil(burn) * k
    nkeep = math.ceil((2.0 - a - b) * a * b * z * z / ((a + b) ** 3 * r * r)) * k
    return nmin, (nburn + nkeep) / nmin


# --------------------------------------------------------------------------
# HPD


def hpd(samples: Sequence[float], mass: float = 0.95) -> HpdInterval:
    """Shortest window containing ``ceil(mass * n)`` of the sorted samples."""
    if not 0 < mass < 1:
        raise DomainError(f"mass must lie in (0, 1), got {mass}")
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n < HPD_MIN_SAMPLES:
        raise InsufficientDrawsError(f"HPD needs at least {HPD_MIN_SAMPLES} samples, got {n}")
    k = int(math.ceil(mass * n - 1e-9))
    widths = x[k - 1:] - x[: n - k + 1]
    i = int(np.argmin(widths))
    return HpdInterval(float(x[i]), float(x[i + k - 1]), mass)


# --------------------------------------------------------------------------
# replication metrics


def summarize_replications(truth: Sequence[float], estimate: Sequence[float],
                           intervals: Sequence[HpdInterval], relative_width: bool = True,
                           comparator: Optional[Sequence[float]] = None) -> ReplicationSummary:
    """Frequentist summary of repeated estimates.

    Parameters
    ----------
    truth, estimate : sequence of float
        True value and posterior mean for each replication (pooled entries for
        vector targets).
    intervals : sequence of HpdInterval
        Interval for each entry.
    relative_width : bool
        Report HPD width divided by the truth (used for ``T`` and rates).
    comparator : sequence of float, optional
        Estimates of a second estimator on the same replications; the
        efficiency is ``Var(estimate) / Var(comparator)`` (needs two or more).
    """
    t = np.asarray(truth, dtype=float)
    e = np.asarray(estimate, dtype=float)
    if len(t) != len(e) or len(t) != len(intervals):
        raise DomainError("truth, estimate and intervals must have equal length")
    if len(t) < 1:
        raise DomainError("need at least one replication")
    if np.any(t == 0):
        raise DomainError("relative errors need nonzero truths")
    rel = (e - t) / t
    lo = np.array([iv.lower for iv in intervals])
    hi = np.array([iv.upper for iv in intervals])
    width = (hi - lo) / np.abs(t) if relative_width else hi - lo
    eff = None
    if comparator is not None:
        c = np.asarray(comparator, dtype=float)
        if len(c) != len(e):
            raise DomainError("comparator must pair with the estimates")
        if len(c) >= 2:
            vc = float(np.var(c, ddof=1))
            eff = float(np.var(e, ddof=1)) / vc if vc > 0 else None
    return ReplicationSummary(
        rmse=float(np.mean(rel ** 2)),
        rae=float(np.mean(np.abs(rel))),
        coverage=float(100.0 * np.mean((lo <= t) & (t <= hi))),
        width=float(np.mean(width)),
        efficiency=eff,
        n=len(t),
    )


# --------------------------------------------------------------------------
# chain-level report


def chain_series(chain, include_unobserved: bool = False) -> dict:
    """Named scalar series of a chain: alpha, beta, nu, T and the observed rates.

    With ``include_unobserved`` the unobserved rates are added as
    ``lambda_unobs_k``, restricted to draws with the modal number of
    unobserved components (their labels are not defined otherwise).
    """
    out = {"alpha": chain.scalar("alpha"), "beta": chain.scalar("beta"),
           "nu": chain.scalar("nu"), "T": chain.scalar("T")}
    for j in range(chain.R_s):
        out[f"lambda_{j + 1}"] = np.asarray(chain.lambda_s[:, j], dtype=float)
    if include_unobserved and len(chain):
        r = np.asarray(chain.r_unobs)
        mode = int(np.bincount(r).argmax())
        keep = [u for u, ru in zip(chain.lambda_unobs, r) if ru == mode]
        for k in range(mode):
            out[f"lambda_unobs_{k + 1}"] = np.array([u[k] for u in keep], dtype=float)
    return out


def diagnose_chain(chain, q: float = 0.025, r: float = 0.005, s: float = 0.95,
                   frac_first: float = GEWEKE_FIRST, frac_last: float = GEWEKE_LAST,
                   include_unobserved: bool = False) -> dict:
    """Per-parameter ``{geweke_z, rl_nmin, rl_factor}``; raises on a too-short chain."""
    report = {}
    for name, x in chain_series(chain, include_unobserved).items():
        if np.ptp(x) == 0:
            # a parameter fixed by the data (e.g. alpha at a census) has nothing to diagnose
            report[name] = {"geweke_z": None, "rl_nmin": raftery_lewis_nmin(q, r, s), "rl_factor": None}
            continue
        nmin, factor = raftery_lewis(x, q, r, s)
        report[name] = {"geweke_z": geweke_z(x, frac_first, frac_last),
                        "rl_nmin": nmin, "rl_factor": factor}
    return report


def write_diagnostics(report: dict, path) -> None:
    Path(path).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")


SUMMARY_METRICS = ("rmse", "rae", "coverage", "width", "efficiency")


def summary_table_csv(summaries: dict) -> str:
    """CSV with one row per metric and one column per parameter."""
    names = list(summaries)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric"] + names)
    for m in SUMMARY_METRICS:
        row = []
        for nm in names:
            v = getattr(summaries[nm], m)
            row.append("" if v is None else repr(float(v)))
        if m == "efficiency" and all(v == "" for v in row):
            continue
        w.writerow([m] + row)
    return buf.getvalue()


def write_summary_csv(summaries: dict, path) -> None:
    Path(path).write_text(summary_table_csv(summaries))
