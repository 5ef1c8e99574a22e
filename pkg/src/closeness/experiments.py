"""Desk-scale experiments: success-probability grid, word curves, lower-bound sweep.

Every driver returns plain rows and can write them as CSV with a ``#``
comment header echoing the configuration and seed.  Trials draw from their
own substreams, so results do not depend on thread count or order.
"""

import csv
import difflib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from closeness._validation import check_eps, check_positive
from closeness.distributions import make_lower_bound_pair, make_perturbed_uniform, make_uniform
from closeness.exceptions import InvalidParameterError, ParseError
from closeness.rng import as_generator, child_seed, substream
from closeness.statistics import empirical_tv, stat_Z_normalized
from closeness.testers import REJECT, TestConfig, calibrate_constants, map_ordered, plan_sample_sizes, run_trials

GRID_COLUMNS = ("m1", "m2", "statistic", "success_rate", "trials")
WORDS_COLUMNS = ("word_a", "word_b", "m1", "m2", "mean_z", "std_z", "mean_tv", "std_tv", "trials")
SWEEP_COLUMNS = ("m2", "planned_m2", "fraction", "reject_rate", "trials")
STATISTICS = ("Z_normalized", "empirical_TV")

DATA_DIR = Path(__file__).with_name("data")
FIXTURE_CORPUS = DATA_DIR / "bigrams.tsv"
FIXTURE_TOTALS = DATA_DIR / "bigram_totals.json"


def format_csv(columns, rows, meta=None):
    """CSV text; ``meta`` items become leading ``# key=value`` lines."""
    buf = io.StringIO()
    for key, value in (meta or {}).items():
        buf.write(f"# {key}={value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows, meta=None):
    text = format_csv(columns, rows, meta)
    Path(path).write_text(text, encoding="utf-8")
    return text


# -- bigram corpus -------------------------------------------------------------

class BigramTable(dict):
    """``head -> {follower -> count}`` with strictly positive counts."""

    def total(self, head):
        return sum(self[head].values())

    def totals(self):
        return {h: self.total(h) for h in self}

    def lookup(self, word):
        if word not in self:
            near = difflib.get_close_matches(word, list(self), n=5, cutoff=0.0)
            raise InvalidParameterError(
                f"unknown head word {word!r}; nearest known heads: {', '.join(near) or '(none)'}"
            )
        return self[word]


def parse_bigram_text(text):
    table = BigramTable()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\r\n").split("\t")
        if len(parts) != 3 or not parts[0] or not parts[1]:
            raise ParseError(f"expected head<TAB>follower<TAB>count, got {line!r}", lineno)
        try:
            count = int(parts[2])
        except ValueError:
            raise ParseError(f"count is not an integer: {parts[2]!r}", lineno) from None
        if count <= 0:
            raise ParseError(f"count must be positive, got {count}", lineno)
        row = table.setdefault(parts[0], {})
        row[parts[1]] = row.get(parts[1], 0) + count
    return table


def load_bigram_counts(path):
    return parse_bigram_text(Path(path).read_text(encoding="utf-8"))


def conditional_pair(table, word_a, word_b):
    """Follower distributions of two heads over their joint follower vocabulary."""
    ra, rb = table.lookup(word_a), table.lookup(word_b)
    vocab = sorted(set(ra) | set(rb))
    pa = np.array([ra.get(w, 0) for w in vocab], dtype=float)
    pb = np.array([rb.get(w, 0) for w in vocab], dtype=float)
    return pa / pa.sum(), pb / pb.sum()


def multinomial_sampler(probs, m, rng):
    return rng.multinomial(int(m), probs)


def word_similarity_curve(table, word_a, word_b, m1, m2_grid, trials, rng=None,
                          sampler=multinomial_sampler, threads=None):
    """Mean and standard deviation of normalised Z and empirical TV per ``m2``.

    Each trial draws ``m1`` followers of ``word_a`` and ``m2`` followers of
    ``word_b`` (fixed sizes).  ``sampler(probs, m, rng)`` returns counts and
    can be replaced for testing.  Rows: ``(m2, mean_z, std_z, mean_tv, std_tv)``;
    standard deviations use ``ddof=1``.
    """
    m1 = check_positive(m1, "m1", integer=True)
    trials = check_positive(trials, "trials", integer=True)
    if trials < 2:
        raise InvalidParameterError("trials must be at least 2")
    pa, pb = conditional_pair(table, word_a, word_b)
    root = child_seed(as_generator(rng))
    rows = []
    for m2 in m2_grid:
        m2 = check_positive(m2, "m2", integer=True)

        def one(t, m2=m2):
            r = substream(root, "words", m2, t)
            X = np.asarray(sampler(pa, m1, r))
            Y = np.asarray(sampler(pb, m2, r))
            return stat_Z_normalized(X, Y, m1=m1, m2=m2), empirical_tv(X, Y)

        vals = np.array(map_ordered(one, range(trials), threads))
        z, tv = vals[:, 0], vals[:, 1]
        rows.append((m2, float(z.mean()), float(z.std(ddof=1)), float(tv.mean()), float(tv.std(ddof=1))))
    return rows


def words_csv_rows(word_a, word_b, m1, curve, trials):
    return [(word_a, word_b, m1, m2, mz, sz, mt, st, trials) for m2, mz, sz, mt, st in curve]


# -- success-probability grid --------------------------------------------------

@dataclass
class GridResult:
    rows: list = field(default_factory=list)

    def rate(self, m1, m2, statistic):
        for r in self.rows:
            if (r[0], r[1], r[2]) == (m1, m2, statistic):
                return r[3]
        raise KeyError((m1, m2, statistic))

    def to_csv(self, meta=None):
        return format_csv(GRID_COLUMNS, self.rows, meta)


def default_grid(n, points=5):
    """Geometric grids ``n^(2/3)..n`` for m1 and ``sqrt(n)..n`` for m2."""
    m1 = np.unique(np.ceil(np.geomspace(n ** (2 / 3), n, points) - 1e-9).astype(int))
    m2 = np.unique(np.ceil(np.geomspace(math.sqrt(n), n, points) - 1e-9).astype(int))
    return m1.tolist(), m2.tolist()


def _paired_score(null_value, alt_value):
    if null_value < alt_value:
        return 1.0
    return 0.5 if null_value == alt_value else 0.0


def grid_cell(p, q, m1, m2, trials, root, threads=None):
    """Success rates of both statistics at one ``(m1, m2)`` cell.

    A trial draws ``X`` (``m1`` from ``p``), ``Y0`` (``m2`` from ``p``) and
    ``Y1`` (``m2`` from ``q``); it succeeds when the statistic on ``(X, Y0)``
    is below the statistic on ``(X, Y1)``.  Exact ties score one half.
    """
    def one(t):
        r = substream(root, "grid", m1, m2, t)
        X = r.multinomial(m1, p)
        Y0 = r.multinomial(m2, p)
        Y1 = r.multinomial(m2, q)
        z = _paired_score(stat_Z_normalized(X, Y0, m1=m1, m2=m2),
                          stat_Z_normalized(X, Y1, m1=m1, m2=m2))
        tv = _paired_score(empirical_tv(X, Y0), empirical_tv(X, Y1))
        return z, tv

    scores = np.array(map_ordered(one, range(trials), threads))
    return float(scores[:, 0].mean()), float(scores[:, 1].mean())


def grid_experiment(n, eps, m1_grid=None, m2_grid=None, trials=120, rng=None, threads=None):
    """Paired-comparison success rates for ``uniform(n)`` vs ``perturbed(n, eps)``."""
    n = check_positive(n, "n", integer=True)
    eps = check_eps(eps, allow_zero=True)
    trials = check_positive(trials, "trials", integer=True)
    if trials < 2:
        raise InvalidParameterError("trials must be at least 2")
    d1, d2 = default_grid(n)
    m1_grid = d1 if m1_grid is None else [check_positive(m, "m1", integer=True) for m in m1_grid]
    m2_grid = d2 if m2_grid is None else [check_positive(m, "m2", integer=True) for m in m2_grid]
    p = np.asarray(make_uniform(n))
    q = np.asarray(make_perturbed_uniform(n, eps))
    root = child_seed(as_generator(rng))
    result = GridResult()
    for m1 in m1_grid:
        for m2 in m2_grid:
            z, tv = grid_cell(p, q, m1, m2, trials, root, threads)
            result.rows.append((m1, m2, "Z_normalized", z, trials))
            result.rows.append((m1, m2, "empirical_TV", tv, trials))
    return result


# -- lower-bound sweep ---------------------------------------------------------

@dataclass
class SweepConfig:
    """Tester settings for :func:`lower_bound_sweep`.

    ``tester_eps`` defaults to the instance's actual separation
    ``delta * eps``.  Constants are recalibrated at every ``m2`` on the null
    pair ``(p, p)`` with ``calibration_trials`` simulations at level ``alpha``.
    """

    c: float = 1.0
    regime: str = "nonextreme"
    kappa: float = 1.0
    alpha: float = 1 / 6
    calibration_trials: int = 300
    tester_eps: float | None = None
    C: float = 4.0


def lower_bound_sweep(n, eps, m1, m2_fractions, trials=200, config=None, rng=None, threads=None):
    """Rejection rate on the hard pair as ``m2`` shrinks below the planned size.

    Rows: ``(m2, planned_m2, fraction, reject_rate, trials)``.
    """
    config = SweepConfig() if config is None else config
    inst = make_lower_bound_pair(n, m1, eps, C=config.C)
    tester_eps = config.tester_eps if config.tester_eps is not None else inst.delta * eps
    tester_eps = check_eps(tester_eps)
    planned = plan_sample_sizes(n, tester_eps, m1, config.c, enforce_floor=False)
    root = child_seed(as_generator(rng))
    rows = []
    for f in m2_fractions:
        check_positive(f, "fraction")
        m2 = max(1, math.ceil(f * planned - 1e-9))
        cal = calibrate_constants(
            n, tester_eps, m1, m2, kappa=config.kappa, trials=config.calibration_trials,
            alpha=config.alpha, rng=substream(root, "sweep-calibrate", m2), null=inst.p,
            regime=config.regime, threads=threads,
        )
        tcfg = TestConfig(n=n, eps=tester_eps, m1=m1, m2=m2, kappa=config.kappa,
                          c_gamma=cal.c_gamma, c_one=cal.c_one, regime=config.regime,
                          seed=child_seed(substream(root, "sweep-trials", m2)))
        res = run_trials(inst.p, inst.q, tcfg, trials, threads=threads)
        rate = sum(v == REJECT for v in res.log) / trials
        rows.append((m2, planned, float(f), rate, trials))
    return rows
