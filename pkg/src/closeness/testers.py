"""Closeness testers, the sample-size planner and constant calibration.

The testers follow the scikit-learn estimator conventions: constructor
arguments are hyper-parameters (``get_params``/``set_params`` work), ``fit``
learns the heavy/medium/light partition from the first sample halves and
``decide``/``predict`` apply the checks to the second halves.  The functional
entry points ``run_test_basic``/``run_test_nonextreme``/``run_test_extreme``
wrap the estimator for one-shot use.
"""

import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from closeness._validation import check_eps, check_positive, check_same_length
from closeness.distributions import CountVector, l1_distance, make_uniform, sample_counts
from closeness.exceptions import InvalidParameterError
from closeness.rng import as_generator, child_seed, substream
from closeness.statistics import (
    PartitionLabels,
    partition_domain,
    stat_R,
    stat_V,
    stat_W,
    stat_Z,
)

ACCEPT = "ACCEPT"
REJECT = "REJECT"
REGIMES = ("basic", "nonextreme", "extreme", "auto")
CHECK_ORDER = ("unbalanced", "V_B", "W_M", "Z_H", "R_H")


def theorem_floor(n, eps):
    """Smallest admissible ``m1``: ``n^(2/3) / eps^(4/3)``."""
    return n ** (2 / 3) / eps ** (4 / 3)


def extreme_floor(n, eps):
    """``(n/eps^2)^(8/9)``: the ``auto`` regime switches to extreme at this m1."""
    return (n / eps**2) ** (8 / 9)


def plan_sample_sizes(n, eps, m1, c=1.0, *, enforce_floor=True):
    """Number of samples needed from the second distribution.

    ``m2 = ceil(c * max(n / (sqrt(m1) eps^2), sqrt(n) / eps^2))``.
    """
    n = check_positive(n, "n", integer=True)
    eps = check_eps(eps)
    m1 = check_positive(m1, "m1")
    check_positive(c, "c")
    if enforce_floor and m1 < theorem_floor(n, eps) * (1 - 1e-12):
        raise InvalidParameterError(
            f"m1 = {m1} is below the floor n^(2/3)/eps^(4/3) = {theorem_floor(n, eps):.3f}"
        )
    raw = c * max(n / (math.sqrt(m1) * eps**2), math.sqrt(n) / eps**2)
    return max(1, math.ceil(raw - 1e-9))


@dataclass
class TestConfig:
    """Parameters of one closeness test."""

    __test__ = False  # not a pytest class

    n: int
    eps: float
    m1: float
    m2: float
    kappa: float = 1.0
    c_gamma: float = 1.0
    c_one: float = 1.0
    gamma: float = 0.0
    regime: str = "auto"
    seed: int = 0
    fidelity: bool = False
    warnings: list = field(default_factory=list, compare=False)

    def __post_init__(self):
        self.n = check_positive(self.n, "n", integer=True)
        self.eps = check_eps(self.eps)
        check_positive(self.m1, "m1")
        check_positive(self.m2, "m2")
        check_positive(self.kappa, "kappa")
        check_positive(self.c_gamma, "c_gamma", allow_zero=True)
        check_positive(self.c_one, "c_one", allow_zero=True)
        if self.regime not in REGIMES:
            raise InvalidParameterError(f"regime must be one of {REGIMES}, got {self.regime!r}")
        self.warnings = []
        if self.n > 1 and self.eps <= self.n ** (-1 / 12):
            self.warnings.append(f"eps <= n^(-1/12) = {self.n ** (-1 / 12):.4f}")
        if self.m1 < math.ceil(theorem_floor(self.n, self.eps) - 1e-9):
            self.warnings.append(
                f"m1 below n^(2/3)/eps^(4/3) = {theorem_floor(self.n, self.eps):.2f}"
            )
        if self.fidelity and self.warnings:
            raise InvalidParameterError("; ".join(self.warnings))

    @property
    def lam(self):
        """Unbalanced-sample cutoff ``m1 eps^(2/3) / (10 m2 n^(1/3))``."""
        return self.m1 * self.eps ** (2 / 3) / (10 * self.m2 * self.n ** (1 / 3))

    def resolved_regime(self):
        if self.regime != "auto":
            return self.regime
        return "extreme" if self.m1 >= extreme_floor(self.n, self.eps) else "nonextreme"

    def as_dict(self):
        return {
            "n": self.n, "eps": self.eps, "m1": self.m1, "m2": self.m2,
            "kappa": self.kappa, "c_gamma": self.c_gamma, "c_one": self.c_one,
            "gamma": self.gamma, "regime": self.regime, "seed": self.seed,
            "fidelity": self.fidelity,
        }


@dataclass(frozen=True)
class CheckResult:
    value: float
    threshold: float
    passed: bool


@dataclass
class Decision:
    verdict: str
    checks: dict
    partition: dict
    regime: str

    @property
    def accepted(self):
        return self.verdict == ACCEPT

    def to_record(self):
        rec = {"verdict": self.verdict, "regime": self.regime}
        rec.update({f"|{k}|": v for k, v in self.partition.items()})
        for name in CHECK_ORDER:
            if name in self.checks:
                c = self.checks[name]
                rec[f"{name}.value"] = c.value
                rec[f"{name}.threshold"] = c.threshold
                rec[f"{name}.pass"] = c.passed
        return rec

    def to_json(self):
        return json.dumps(self.to_record(), sort_keys=False)


def _counts(C):
    return C.counts if isinstance(C, CountVector) else np.asarray(C, dtype=np.int64)


class ClosenessTester(BaseEstimator):
    """Tests ``p = q`` against ``||p - q||_1 >= eps`` from unequal samples.

    Parameters
    ----------
    eps : float
        Distance parameter in (0, 1].
    m1, m2 : float
        Nominal sizes of every sample half drawn from ``p`` and ``q``.
    regime : {"basic", "nonextreme", "extreme", "auto"}
        Which tester to run.  ``auto`` picks ``extreme`` once
        ``m1 >= (n/eps^2)^(8/9)``.
    kappa : float
        Scale applied to both partition thresholds.
    c_gamma, c_one : float
        Threshold constants of the Z and R checks.

    Attributes
    ----------
    partition_ : PartitionLabels
        Labels learnt from the first sample halves.
    config_ : TestConfig
    """

    def __init__(self, eps=0.5, m1=1000, m2=1000, regime="auto", kappa=1.0,
                 c_gamma=1.0, c_one=1.0):
        self.eps = eps
        self.m1 = m1
        self.m2 = m2
        self.regime = regime
        self.kappa = kappa
        self.c_gamma = c_gamma
        self.c_one = c_one

    @classmethod
    def from_config(cls, config):
        return cls(eps=config.eps, m1=config.m1, m2=config.m2, regime=config.regime,
                   kappa=config.kappa, c_gamma=config.c_gamma, c_one=config.c_one)

    def _make_config(self, n):
        return TestConfig(n=n, eps=self.eps, m1=self.m1, m2=self.m2, kappa=self.kappa,
                          c_gamma=self.c_gamma, c_one=self.c_one, regime=self.regime)

    def fit(self, S1, T1):
        """Learn the partition from the first halves ``S1`` (from p) and ``T1`` (from q)."""
        X1, Y1 = _counts(S1), _counts(T1)
        check_same_length(X1, Y1, "first-half count vectors")
        self.config_ = self._make_config(X1.shape[-1])
        self.regime_ = self.config_.resolved_regime()
        self.partition_ = partition_domain(X1, Y1, self.config_)
        if self.regime_ == "basic":
            # basic tester: heavy set only, everything else treated as light
            labels = np.where(self.partition_.heavy, 0, 2).astype(np.int8)
            self.partition_ = PartitionLabels(labels, self.partition_.b, self.partition_.b_prime)
        self.n_features_in_ = X1.shape[-1]
        return self

    def decide(self, S2, T2):
        """Apply the checks to the second halves and return a :class:`Decision`."""
        check_is_fitted(self, "partition_")
        X, Y = _counts(S2), _counts(T2)
        if X.shape[-1] != self.n_features_in_ or Y.shape[-1] != self.n_features_in_:
            raise InvalidParameterError("second-half counts do not match the fitted domain size")
        cfg, part = self.config_, self.partition_
        if cfg.n == 1:
            # one-point domain: p = q always
            return Decision(ACCEPT, {}, part.sizes(), self.regime_)
        m1, m2 = cfg.m1, cfg.m2
        checks = {}
        if self.regime_ == "extreme":
            unbalanced = bool(np.any((Y >= 3) & (X <= cfg.lam)))
            checks["unbalanced"] = CheckResult(float(unbalanced), cfg.lam, not unbalanced)
        v = stat_V(X, Y, part.heavy, m1=m1, m2=m2)
        checks["V_B"] = CheckResult(v, cfg.eps / 6, v <= cfg.eps / 6)
        if self.regime_ != "basic":
            w = stat_W(X, Y, part.medium, m1=m1, m2=m2)
            w_thr = cfg.eps**2 * m1**2 * m2 * math.log(cfg.n) / 2
            checks["W_M"] = CheckResult(w, w_thr, w <= w_thr)
        z = stat_Z(X, Y, part.light, m1=m1, m2=m2)
        z_thr = cfg.c_gamma * m1**1.5 * m2
        checks["Z_H"] = CheckResult(z, z_thr, z <= z_thr)
        if self.regime_ == "extreme":
            r = stat_R(X, Y, part.light, m1=m1, m2=m2)
            r_thr = cfg.c_one * m2**2 / m1
            checks["R_H"] = CheckResult(r, r_thr, r <= r_thr)
        verdict = ACCEPT if all(c.passed for c in checks.values()) else REJECT
        return Decision(verdict, checks, part.sizes(), self.regime_)

    def predict(self, S2, T2):
        return self.decide(S2, T2).verdict

    def test(self, S1, S2, T1, T2):
        """Fit on the first halves and decide on the second halves."""
        return self.fit(S1, T1).decide(S2, T2)

    def sample_and_test(self, p, q, rng):
        """Draw the four poissonized sample halves from ``p``, ``q`` and test."""
        S1, S2, T1, T2 = draw_halves(p, q, self.m1, self.m2, rng)
        return self.test(S1, S2, T1, T2)


def draw_halves(p, q, m1, m2, rng, mode="poissonized"):
    S1 = sample_counts(p, m1, mode, rng)
    S2 = sample_counts(p, m1, mode, rng)
    T1 = sample_counts(q, m2, mode, rng)
    T2 = sample_counts(q, m2, mode, rng)
    return S1, S2, T1, T2


def _run(S1, S2, T1, T2, config, regime):
    tester = ClosenessTester.from_config(config).set_params(regime=regime)
    return tester.test(S1, S2, T1, T2)


def run_test_basic(S1, S2, T1, T2, config):
    return _run(S1, S2, T1, T2, config, "basic")


def run_test_nonextreme(S1, S2, T1, T2, config):
    return _run(S1, S2, T1, T2, config, "nonextreme")


def run_test_extreme(S1, S2, T1, T2, config):
    return _run(S1, S2, T1, T2, config, "extreme")


_RUNNERS = {
    "basic": run_test_basic,
    "nonextreme": run_test_nonextreme,
    "extreme": run_test_extreme,
}


def default_threads():
    return os.cpu_count() or 1


def map_ordered(fn, items, threads=None):
    """``list(map(fn, items))``, optionally on a thread pool; order preserved."""
    threads = default_threads() if threads is None else threads
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class Calibration:
    c_gamma: float
    c_one: float
    kappa_suggestion: float
    z_null: np.ndarray = field(repr=False, compare=False, default=None)
    r_null: np.ndarray = field(repr=False, compare=False, default=None)


def _upper_quantile(values, level):
    # smallest observed value v with empirical CDF(v) >= level
    return float(np.quantile(values, level, method="inverted_cdf"))


def calibrate_constants(n, eps, m1, m2, kappa=1.0, trials=600, alpha=1 / 6, rng=None,
                        null=None, regime="nonextreme", threads=None):
    """Pick ``c_gamma`` and ``c_one`` from null simulations.

    Runs ``trials`` simulations with ``p = q = null`` (uniform over ``n`` by
    default) and sets each constant to the empirical ``1 - alpha`` quantile
    of its normalised statistic, ``Z_H / (m1^1.5 m2)`` and
    ``R_H / (m2^2 / m1)``.  ``kappa_suggestion`` is the threshold scale that
    would place ``b'`` at the same quantile of the largest first-half
    empirical frequency, i.e. keep null elements light.

    With ``regime="extreme"`` both constants guard the same decision, so
    ``alpha`` is split evenly between them (each uses ``1 - alpha/2``).
    """
    n = check_positive(n, "n", integer=True)
    trials = check_positive(trials, "trials", integer=True)
    if trials < 100:
        raise InvalidParameterError(f"calibration needs at least 100 trials, got {trials}")
    if not 0 < alpha < 0.5 + 1e-12:
        raise InvalidParameterError(f"alpha must lie in (0, 0.5], got {alpha}")
    null = make_uniform(n) if null is None else null
    if len(null) != n:
        raise InvalidParameterError("null distribution does not have n elements")
    rng = as_generator(rng)
    root = child_seed(rng)
    config = TestConfig(n=n, eps=eps, m1=m1, m2=m2, kappa=kappa)

    def one(t):
        r = substream(root, "calibrate", t)
        S1, S2, T1, T2 = draw_halves(null, null, m1, m2, r)
        part = partition_domain(S1, T1, config)
        z = stat_Z(S2, T2, part.light) / (m1**1.5 * m2)
        rr = stat_R(S2, T2, part.light) / (m2**2 / m1)
        top = max(S1.counts.max() / m1, T1.counts.max() / m2)
        return z, rr, top

    rows = np.array(map_ordered(one, range(trials), threads))
    z_null, r_null, tops = rows[:, 0], rows[:, 1], rows[:, 2]
    level = 1 - (alpha / 2 if regime == "extreme" else alpha)
    c_gamma = max(0.0, _upper_quantile(z_null, level))
    c_one = max(0.0, _upper_quantile(r_null, level))
    base = 256 * math.log(n) / m2
    kappa_suggestion = _upper_quantile(tops, level) / base if base > 0 else 1.0
    return Calibration(c_gamma, c_one, kappa_suggestion, z_null, r_null)


@dataclass
class TrialsResult:
    success_rate: float
    expected: str
    log: list

    @property
    def trials(self):
        return len(self.log)


def run_trials(p, q, config, trials, which=None, tester=None, threads=None):
    """Measure how often a tester returns the correct verdict.

    The correct verdict is ACCEPT when ``p`` and ``q`` coincide and REJECT
    otherwise.  Trial ``t`` draws from stream ``(config.seed, "trial", t)``,
    so the outcome of each trial does not depend on execution order.
    ``tester`` may replace the built-in runner; it receives
    ``(S1, S2, T1, T2, config)`` and returns a Decision or a verdict string.
    """
    trials = check_positive(trials, "trials", integer=True)
    which = config.resolved_regime() if which in (None, "auto") else which
    runner = tester or _RUNNERS[which]
    expected = ACCEPT if l1_distance(p, q) == 0 else REJECT

    def one(t):
        r = substream(config.seed, "trial", t)
        out = runner(*draw_halves(p, q, config.m1, config.m2, r), config)
        return out if isinstance(out, str) else out.verdict

    log = map_ordered(one, range(trials), threads)
    rate = sum(v == expected for v in log) / trials
    return TrialsResult(rate, expected, log)


def fidelity_warn(config):
    for msg in config.warnings:
        warnings.warn(msg, stacklevel=2)


__all__ = [
    "ACCEPT",
    "REJECT",
    "Calibration",
    "CheckResult",
    "ClosenessTester",
    "Decision",
    "NotFittedError",
    "TestConfig",
    "calibrate_constants",
    "draw_halves",
    "plan_sample_sizes",
    "run_test_basic",
    "run_test_extreme",
    "run_test_nonextreme",
    "run_trials",
]
