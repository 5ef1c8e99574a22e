"""Test statistics, the heavy/medium/light partition and closed-form moments.

All statistics accept either :class:`CountVector` objects or plain integer
arrays.  Arrays may be 2-d with one sample per row, in which case the
statistic is returned per row; this is what the Monte-Carlo checks use.
When plain arrays are passed, the nominal sizes ``m1`` and ``m2`` must be
given explicitly.
"""

import math
from dataclasses import dataclass

import numpy as np

from closeness._validation import (
    check_count_array,
    check_positive,
    check_same_length,
    index_mask,
)
from closeness.distributions import CountVector, sample_counts_batch
from closeness.exceptions import InvalidParameterError

HEAVY, MEDIUM, LIGHT = 0, 1, 2
LABEL_NAMES = ("Heavy", "Medium", "Light")

# Largest magnitude for which squared numerators stay exact in int64.
_INT64_SAFE = 2**31


def _counts_and_size(C, m, name):
    if isinstance(C, CountVector):
        return C.counts, (C.nominal_size if m is None else m)
    if m is None:
        raise InvalidParameterError(f"{name} must be given when passing raw count arrays")
    return check_count_array(C), m


def _unpack(X, Y, m1, m2):
    X, m1 = _counts_and_size(X, m1, "m1")
    Y, m2 = _counts_and_size(Y, m2, "m2")
    check_same_length(X, Y, "count vectors")
    check_positive(m1, "m1")
    check_positive(m2, "m2")
    return X, Y, m1, m2


def _reduce(terms, mask):
    out = np.where(mask, terms, 0).sum(axis=-1)
    if np.ndim(out) == 0:
        return float(out)
    return out.astype(float)


def _w_terms(X, Y, m1, m2):
    """Per-element ``(m2 X - m1 Y)^2 - (m2^2 X + m1^2 Y)`` without overflow.

    Integral sizes use exact integer arithmetic (int64 when provably safe,
    arbitrary-precision Python ints otherwise); fractional sizes fall back
    to extended-precision floats.
    """
    if float(m1).is_integer() and float(m2).is_integer():
        a, b = int(m1), int(m2)
        peak = max(b * int(X.max(initial=0)), a * int(Y.max(initial=0)))
        if peak < _INT64_SAFE:
            X64 = X.astype(np.int64)
            Y64 = Y.astype(np.int64)
            return (b * X64 - a * Y64) ** 2 - (b * b * X64 + a * a * Y64)
        Xo = X.astype(object)
        Yo = Y.astype(object)
        return (b * Xo - a * Yo) ** 2 - (b * b * Xo + a * a * Yo)
    a = np.longdouble(m1)
    b = np.longdouble(m2)
    Xl = X.astype(np.longdouble)
    Yl = Y.astype(np.longdouble)
    return (b * Xl - a * Yl) ** 2 - (b * b * Xl + a * a * Yl)


def stat_V(X, Y, A=None, *, m1=None, m2=None):
    """Sum over ``A`` of ``|X_i/m1 - Y_i/m2|``."""
    X, Y, m1, m2 = _unpack(X, Y, m1, m2)
    mask = index_mask(A, X.shape[-1])
    return _reduce(np.abs(X / m1 - Y / m2), mask)


def stat_W(X, Y, A=None, *, m1=None, m2=None):
    X, Y, m1, m2 = _unpack(X, Y, m1, m2)
    mask = index_mask(A, X.shape[-1])
    terms = _w_terms(X, Y, m1, m2)
    if terms.dtype == object:
        out = np.where(mask, terms, 0).sum(axis=-1)
        return float(out) if np.ndim(out) == 0 else np.array([float(v) for v in out])
    return _reduce(terms.astype(float) if terms.dtype == np.longdouble else terms, mask)


def z_terms(X, Y, m1, m2):
    """Per-element Z contributions; 0 wherever ``X_i + Y_i = 0``."""
    num = _w_terms(X, Y, m1, m2)
    den = X.astype(np.int64) + Y.astype(np.int64)
    nz = den > 0
    out = np.zeros(X.shape, dtype=float)
    if num.dtype == object:
        flat_num = num[nz]
        flat_den = den[nz]
        out[nz] = [int(a) / int(b) for a, b in zip(flat_num, flat_den)]
    else:
        out[nz] = (num[nz] / den[nz]).astype(float)
    return out


def stat_Z(X, Y, A=None, *, m1=None, m2=None):
    """Sum over ``A`` of the W numerator divided by ``X_i + Y_i``."""
    X, Y, m1, m2 = _unpack(X, Y, m1, m2)
    mask = index_mask(A, X.shape[-1])
    return _reduce(z_terms(X, Y, m1, m2), mask)


def stat_R(X, Y, A=None, *, m1=None, m2=None):
    """Sum over ``A`` of ``1{Y_i = 2} / (X_i + 1)``."""
    X, Y, m1, m2 = _unpack(X, Y, m1, m2)
    mask = index_mask(A, X.shape[-1])
    return _reduce(np.where(Y == 2, 1.0 / (X + 1.0), 0.0), mask)


def stat_Z_normalized(X, Y, *, m1=None, m2=None):
    """Full-domain Z divided by ``m1**1.5 * m2``."""
    X, Y, m1, m2 = _unpack(X, Y, m1, m2)
    return stat_Z(X, Y, m1=m1, m2=m2) / (m1 ** 1.5 * m2)


def empirical_tv(X, Y):
    """Total variation distance between two empirical distributions.

    Uses the realised totals, not nominal sizes.
    """
    X = check_count_array(X.counts if isinstance(X, CountVector) else X)
    Y = check_count_array(Y.counts if isinstance(Y, CountVector) else Y)
    check_same_length(X, Y, "count vectors")
    tx = X.sum(axis=-1, keepdims=True)
    ty = Y.sum(axis=-1, keepdims=True)
    if np.any(tx == 0) or np.any(ty == 0):
        raise InvalidParameterError("empirical_tv needs samples with positive totals")
    out = 0.5 * np.abs(X / tx - Y / ty).sum(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


# -- closed-form moments -----------------------------------------------------

def _pq(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    check_same_length(p, q, "distributions")
    return p, q


def expected_W(p, q, m1, m2, A=None):
    p, q = _pq(p, q)
    mask = index_mask(A, p.size)
    return float(m1**2 * m2**2 * ((p - q) ** 2)[mask].sum())


def variance_W(p, q, m1, m2, A=None):
    p, q = _pq(p, q)
    mask = index_mask(A, p.size)
    z = (m2 * p + m1 * q)[mask]
    d2 = ((p - q) ** 2)[mask]
    return float(2 * m1**2 * m2**2 * (z**2).sum() + 4 * m1**3 * m2**3 * (z * d2).sum())


def _one_minus_ratio(z):
    """``1 - (1 - exp(-z))/z`` accurate for small ``z`` (0 at ``z = 0``)."""
    z = np.asarray(z, dtype=float)
    out = np.zeros_like(z)
    small = z < 1e-4
    zs = z[small]
    out[small] = zs / 2 - zs**2 / 6 + zs**3 / 24
    zl = z[~small]
    out[~small] = 1.0 + np.expm1(-zl) / zl
    return out


def expected_Z(p, q, m1, m2, A=None):
    """``E[Z_A]`` with ``z_i = m1 p_i + m2 q_i``; zero-mass elements give 0."""
    p, q = _pq(p, q)
    mask = index_mask(A, p.size) & ((p + q) > 0)
    z = m1 * p[mask] + m2 * q[mask]
    terms = (q[mask] - p[mask]) ** 2 / z * _one_minus_ratio(z)
    return float(m1**2 * m2**2 * terms.sum())


def _expm1_ratio(x):
    """``(1 - exp(-x))/x`` with the limit 1 at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    pos = x > 0
    out[pos] = -np.expm1(-x[pos]) / x[pos]
    return out


def expected_R(p, q, m1, m2, A=None):
    p, q = _pq(p, q)
    mask = index_mask(A, p.size)
    pm, qm = p[mask], q[mask]
    terms = (m2 * qm) ** 2 / 2 * np.exp(-m2 * qm) * _expm1_ratio(m1 * pm)
    return float(terms.sum())


# -- partition and faithfulness -----------------------------------------------

@dataclass(frozen=True, eq=False)
class PartitionLabels:
    """Heavy/Medium/Light label per element plus the two thresholds."""

    labels: np.ndarray
    b: float
    b_prime: float

    @property
    def heavy(self):
        return self.labels == HEAVY

    @property
    def medium(self):
        return self.labels == MEDIUM

    @property
    def light(self):
        return self.labels == LIGHT

    def sizes(self):
        return {
            "B": int(self.heavy.sum()),
            "M": int(self.medium.sum()),
            "H": int(self.light.sum()),
        }


def thresholds(n, eps, m2, kappa=1.0):
    """Heavy and medium thresholds ``(b, b')`` (natural log)."""
    base = kappa * 256.0 * math.log(n) / m2
    return base / eps**2, base


def partition_domain(counts_S1, counts_T1, config):
    """Label elements from the first sample halves only.

    ``config`` supplies ``eps``, ``m1``, ``m2`` and ``kappa``.  Heavy wins
    ties between the two set definitions; medium is the closed interval
    ``[b', b]`` on the larger of the two empirical frequencies.
    """
    X1 = counts_S1.counts if isinstance(counts_S1, CountVector) else check_count_array(counts_S1)
    Y1 = counts_T1.counts if isinstance(counts_T1, CountVector) else check_count_array(counts_T1)
    check_same_length(X1, Y1, "first-half count vectors")
    b, b_prime = thresholds(X1.size, config.eps, config.m2, getattr(config, "kappa", 1.0))
    fx = X1 / config.m1
    fy = Y1 / config.m2
    top = np.maximum(fx, fy)
    labels = np.full(X1.size, LIGHT, dtype=np.int8)
    labels[top >= b_prime] = MEDIUM
    labels[(fx > b) | (fy > b)] = HEAVY
    return PartitionLabels(labels, b, b_prime)


@dataclass(frozen=True)
class FaithfulReport:
    heavy: bool
    medium: bool
    light: bool

    @property
    def all(self):
        return self.heavy and self.medium and self.light

    def __bool__(self):
        return self.all


def check_faithful(p, q, labels):
    p, q = _pq(p, q)
    b, bp = labels.b, labels.b_prime
    B, M, H = labels.heavy, labels.medium, labels.light
    top = np.maximum(p, q)
    heavy_ok = bool(np.all((p[B] > b / 2) | (q[B] > b / 2)))
    medium_ok = bool(np.all((top[M] >= bp / 2) & (top[M] <= 2 * b)))
    light_ok = bool(np.all((p[H] < 2 * bp) & (q[H] < 2 * bp)))
    return FaithfulReport(heavy_ok, medium_ok, light_ok)


# -- Monte-Carlo moment verification -------------------------------------------

_STATS = {"V": stat_V, "W": stat_W, "Z": stat_Z, "R": stat_R}
_CLOSED_MEAN = {"W": expected_W, "Z": expected_Z, "R": expected_R}
MOMENT_CSV_HEADER = "stat,closed_form_mean,mc_mean,mc_stderr,trials"


@dataclass(frozen=True)
class MomentReport:
    stat: str
    closed_form_mean: float
    closed_form_variance: float | None
    monte_carlo_mean: float
    monte_carlo_std_error: float
    trials: int
    monte_carlo_variance: float = float("nan")

    def __post_init__(self):
        if self.trials < 1:
            raise InvalidParameterError("trials must be >= 1")

    def z_score(self):
        if self.monte_carlo_std_error == 0:
            return 0.0 if self.monte_carlo_mean == self.closed_form_mean else math.inf
        return (self.monte_carlo_mean - self.closed_form_mean) / self.monte_carlo_std_error

    def csv_row(self):
        return (
            f"{self.stat},{self.closed_form_mean!r},{self.monte_carlo_mean!r},"
            f"{self.monte_carlo_std_error!r},{self.trials}"
        )


def monte_carlo_stat(stat, p, q, m1, m2, trials, rng, A=None, chunk=10_000):
    """Draw ``trials`` poissonized sample pairs and return the statistic values."""
    fn = _STATS[stat]
    out = np.empty(trials)
    done = 0
    while done < trials:
        k = min(chunk, trials - done)
        X = sample_counts_batch(p, m1, k, rng=rng)
        Y = sample_counts_batch(q, m2, k, rng=rng)
        out[done:done + k] = fn(X, Y, A, m1=m1, m2=m2)
        done += k
    return out


def moment_check(stat, p, q, m1, m2, trials, rng, A=None):
    """Compare the Monte-Carlo mean of a statistic with its closed form.

    ``V`` has no closed-form mean; its report carries ``sum |p_i - q_i|``
    (the lower bound on the mean) and the variance bound ``1/m1 + 1/m2``.
    """
    stat = stat.upper()
    if stat not in _STATS:
        raise InvalidParameterError(f"unknown statistic {stat!r}")
    trials = check_positive(trials, "trials", integer=True)
    values = monte_carlo_stat(stat, p, q, m1, m2, trials, rng, A)
    mean = float(values.mean())
    var = float(values.var(ddof=1)) if trials > 1 else 0.0
    se = math.sqrt(var / trials)
    if stat == "V":
        pv, qv = _pq(p, q)
        mask = index_mask(A, pv.size)
        closed = float(np.abs(pv - qv)[mask].sum())
        closed_var = 1.0 / m1 + 1.0 / m2
    else:
        closed = _CLOSED_MEAN[stat](p, q, m1, m2, A)
        closed_var = variance_W(p, q, m1, m2, A) if stat == "W" else None
    return MomentReport(stat, closed, closed_var, mean, se, trials, var)
