"""Markov chains behind a next-node oracle, mixing tests and mixing-time estimates.

A :class:`MarkovChain` only exposes sampling through :meth:`next_node` and the
vectorised :meth:`step`, both of which count oracle queries.  The exact
matrix-powering routines (:func:`exact_mixing_time`, :func:`t_step_matrix`)
read the transition matrix directly and exist to validate the sampled
procedures.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from sklearn.base import BaseEstimator

from closeness._validation import check_eps, check_positive
from closeness.distributions import CountVector
from closeness.exceptions import InvalidParameterError, NonConvergenceError, ParseError
from closeness.rng import as_generator, child_seed, substream
from closeness.testers import ACCEPT, REJECT, TestConfig, run_test_extreme

ROW_TOL = 1e-9


class MarkovChain:
    """Row-stochastic transition structure over states ``0..n-1``.

    Parameters
    ----------
    P : array-like or scipy sparse matrix
        ``n x n`` transition matrix; every row must sum to 1.
    """

    def __init__(self, P):
        P = sparse.csr_matrix(P, dtype=float)
        P.eliminate_zeros()
        P.sort_indices()
        n, k = P.shape
        if n != k or n == 0:
            raise InvalidParameterError(f"transition matrix must be square and non-empty, got {P.shape}")
        if P.nnz and P.data.min() < 0:
            raise InvalidParameterError("transition probabilities must be non-negative")
        sums = np.asarray(P.sum(axis=1)).ravel()
        bad = np.flatnonzero(np.abs(sums - 1) > ROW_TOL)
        if bad.size:
            raise InvalidParameterError(
                f"row {bad[0] + 1} sums to {sums[bad[0]]!r}, not 1"
            )
        self.P = P
        self.n = n
        self.query_counter = 0
        # Per-row alias tables (Walker/Vose) packed in CSR order: one uniform
        # picks a slot in the row, a second decides slot target vs alias.
        self._deg = np.diff(P.indptr).astype(np.int64)
        self._start = P.indptr[:-1].astype(np.int64)
        self._keep = np.ones(P.nnz)
        self._alias = P.indices.astype(np.int64).copy()
        for r in range(n):
            lo, hi = P.indptr[r], P.indptr[r + 1]
            self._build_alias(lo, hi)

    def _build_alias(self, lo, hi):
        deg = hi - lo
        scaled = self.P.data[lo:hi] * deg
        small = [j for j in range(deg) if scaled[j] < 1.0]
        large = [j for j in range(deg) if scaled[j] >= 1.0]
        while small and large:
            s, g = small.pop(), large[-1]
            self._keep[lo + s] = scaled[s]
            self._alias[lo + s] = self.P.indices[lo + g]
            scaled[g] -= 1.0 - scaled[s]
            if scaled[g] < 1.0:
                small.append(large.pop())
        # leftovers are 1 up to rounding
        for j in small + large:
            self._keep[lo + j] = 1.0

    @classmethod
    def from_rows(cls, n, rows):
        """Build from ``{src: [(dst, prob), ...]}`` with 0-based states."""
        src, dst, val = [], [], []
        for x, row in rows.items():
            for y, pr in row:
                src.append(x)
                dst.append(y)
                val.append(pr)
        for s in src + dst:
            if not 0 <= s < n:
                raise InvalidParameterError(f"state {s + 1} outside [1, {n}]")
        return cls(sparse.coo_matrix((val, (src, dst)), shape=(n, n)))

    def row(self, x):
        lo, hi = self.P.indptr[x], self.P.indptr[x + 1]
        return list(zip(self.P.indices[lo:hi].tolist(), self.P.data[lo:hi].tolist()))

    def dense(self):
        return self.P.toarray()

    def _check_state(self, x):
        if isinstance(x, bool) or int(x) != x or not 0 <= int(x) < self.n:
            raise InvalidParameterError(f"invalid state {x!r} for a chain on {self.n} states")
        return int(x)

    def step(self, states, rng):
        """Advance every walker in ``states`` by one transition (one query each)."""
        states = np.asarray(states, dtype=np.int64)
        if states.size == 0:
            return states.copy()
        u = rng.random(states.shape) * self._deg[states]
        k = u.astype(np.int64)
        slot = self._start[states] + k
        stay = (u - k) < self._keep[slot]
        self.query_counter += int(states.size)
        return np.where(stay, self.P.indices[slot], self._alias[slot])

    def next_node(self, x, rng):
        """Next-node oracle: one successor of ``x`` drawn from its row."""
        x = self._check_state(x)
        return int(self.step(np.array([x]), rng)[0])

    def walk(self, x, t, rng):
        x = self._check_state(x)
        t = check_positive(t, "t", integer=True, allow_zero=True)
        return int(walk_many(self, np.array([x]), t, rng)[0])


def walk_many(chain, starts, t, rng):
    """Walk every start ``t`` steps; costs ``len(starts) * t`` queries."""
    states = np.asarray(starts, dtype=np.int64).copy()
    for _ in range(int(t)):
        states = chain.step(states, rng)
    return states


def next_node(chain, x, rng):
    return chain.next_node(x, rng)


def walk(chain, x, t, rng):
    return chain.walk(x, t, rng)


def sample_avg_t_step(chain, t, m, rng):
    """Counts of ``Pois(m)`` walk endpoints, each from a uniform random start."""
    check_positive(m, "m")
    size = int(rng.poisson(m))
    starts = rng.integers(0, chain.n, size=size)
    ends = walk_many(chain, starts, t, rng)
    return CountVector(np.bincount(ends, minlength=chain.n), m)


def sample_t_step_from(chain, x, t, m, rng):
    """Counts of ``Pois(m)`` endpoints of ``t``-step walks started at ``x``."""
    check_positive(m, "m")
    x = chain._check_state(x)
    size = int(rng.poisson(m))
    ends = walk_many(chain, np.full(size, x), t, rng)
    return CountVector(np.bincount(ends, minlength=chain.n), m)


# -- exact oracle --------------------------------------------------------------

def t_step_matrix(chain, t):
    return np.linalg.matrix_power(chain.dense(), int(t))


def stationary_distribution(chain, tol=1e-12, max_squarings=64):
    """Common limit of the rows of ``P^(2^k)``.

    Fails when the rows never agree, which happens exactly when the chain
    is periodic or has more than one closed class.
    """
    M = chain.dense()
    for _ in range(max_squarings):
        pi = M.mean(axis=0)
        if np.max(np.abs(M - pi)) <= tol:
            return pi / pi.sum()
        M = M @ M
    raise NonConvergenceError("rows of P^t do not converge: chain is periodic or reducible")


def worst_tv(chain, t, pi=None):
    pi = stationary_distribution(chain) if pi is None else pi
    Pt = t_step_matrix(chain, t)
    return float(0.5 * np.abs(Pt - pi).sum(axis=1).max())


def exact_mixing_time(chain, delta, t_max=2**40):
    """Smallest ``t`` with worst-start total variation to stationarity ``<= delta``.

    Uses that the worst-start distance is non-increasing in ``t``: doubling
    brackets the answer, bisection pins it down.
    """
    check_positive(delta, "delta")
    pi = stationary_distribution(chain)
    P = chain.dense()
    tol = 1e-12

    def dist(M):
        return 0.5 * np.abs(M - pi).sum(axis=1).max()

    if dist(np.eye(chain.n)) <= delta + tol:
        return 0
    powers = [P]  # powers[k] = P^(2^k)
    while dist(powers[-1]) > delta + tol:
        if 2 ** len(powers) > t_max:
            raise NonConvergenceError(f"mixing time exceeds {t_max}")
        powers.append(powers[-1] @ powers[-1])
    # answer lies in (2^(k-1), 2^k]; build it bit by bit from below
    k = len(powers) - 1
    if k == 0:
        return 1
    t, M = 2 ** (k - 1), powers[k - 1]
    for j in range(k - 2, -1, -1):
        cand = M @ powers[j]
        if dist(cand) > delta + tol:
            t += 2**j
            M = cand
    return t + 1


# -- sampled mixing test -------------------------------------------------------

def default_repetitions(n):
    return math.ceil(3 * math.log(max(n, 3)))


@dataclass
class MixingConfig:
    """Constants of the mixing tester.

    ``reps`` is the number of reference samples and per-state runs (majority
    vote); ``ref_scale`` multiplies ``n`` for the reference sample size and
    ``state_scale`` multiplies ``sqrt(n)/eps^2`` for the per-state size.
    With ``ref_scale = 1`` the unbalanced-sample cutoff sits far below one
    count and exactly mixed chains are often rejected, hence the default 4.
    """

    reps: int | None = None
    ref_scale: float = 4.0
    state_scale: float = 1.0
    kappa: float = 1.0
    c_gamma: float = 1.0
    c_one: float = 1.0

    def sizes(self, n, eps):
        m1 = self.ref_scale * n
        m2 = self.state_scale * math.sqrt(n) / eps**2
        return m1, m2

    def repetitions(self, n):
        return self.reps if self.reps is not None else default_repetitions(n)


@dataclass
class MixDecision:
    verdict: str
    t0: int
    queries: int
    state_accepts: np.ndarray = field(repr=False)
    worst_state: int = 0

    @property
    def accepted(self):
        return self.verdict == ACCEPT


def _grouped_counts(ends, groups, n_groups, n):
    flat = np.bincount(groups * n + ends, minlength=n_groups * n)
    return flat.reshape(n_groups, n)


def test_mixing_at(chain, t0, eps, config=None, rng=None):
    """Test whether every ``t0``-step distribution is close to the average one.

    Draws ``reps`` reference samples (each two halves of ``Pois(ref_scale*n)``
    walks from uniform starts) once and shares them across all states.  For
    each state, ``reps`` runs of the extreme-case tester pair one reference
    sample with fresh ``Pois(state_scale*sqrt(n)/eps^2)`` walks from that
    state; a state is accepted by majority vote (ties accept).  The chain is
    accepted iff every state is.
    """
    t0 = check_positive(t0, "t0", integer=True)
    eps = check_eps(eps)
    config = MixingConfig() if config is None else config
    rng = as_generator(rng)
    n = chain.n
    reps = config.repetitions(n)
    m1, m2 = config.sizes(n, eps)
    start_queries = chain.query_counter

    # reference: reps samples x 2 halves
    ref_sizes = rng.poisson(m1, size=2 * reps)
    ref_groups = np.repeat(np.arange(2 * reps), ref_sizes)
    ref_starts = rng.integers(0, n, size=ref_groups.size)
    # per state: n states x reps runs x 2 halves
    st_sizes = rng.poisson(m2, size=n * reps * 2)
    st_groups = np.repeat(np.arange(n * reps * 2), st_sizes)
    st_starts = st_groups // (2 * reps)

    ends = walk_many(chain, np.concatenate([ref_starts, st_starts]), t0, rng)
    ref = _grouped_counts(ends[: ref_groups.size], ref_groups, 2 * reps, n)
    per_state = _grouped_counts(ends[ref_groups.size:], st_groups, n * reps * 2, n)
    per_state = per_state.reshape(n, reps, 2, n)

    tcfg = TestConfig(n=n, eps=eps, m1=m1, m2=m2, kappa=config.kappa,
                      c_gamma=config.c_gamma, c_one=config.c_one, regime="extreme")
    accepts = np.zeros(n, dtype=np.int64)
    for x in range(n):
        for i in range(reps):
            d = run_test_extreme(
                CountVector(ref[2 * i], m1), CountVector(ref[2 * i + 1], m1),
                CountVector(per_state[x, i, 0], m2), CountVector(per_state[x, i, 1], m2),
                tcfg,
            )
            accepts[x] += d.accepted
    state_ok = 2 * accepts >= reps
    verdict = ACCEPT if state_ok.all() else REJECT
    return MixDecision(verdict, t0, chain.query_counter - start_queries, accepts,
                       int(np.argmin(accepts)))


@dataclass
class MixingEstimate:
    t_estimate: int
    queries: int
    history: list


def estimate_mixing_time(chain, eps, config=None, rng=None, t_start=1, t_cap=2**20,
                         repeat_scale=1.0):
    """Smallest accepted ``t0`` on the doubling schedule ``t_start * 2^k``.

    Each ``t0`` is tested ``ceil(repeat_scale * (ln t0 + ln n))`` times (at
    least once) and accepted by majority vote; voting stops as soon as the
    majority is decided.
    """
    eps = check_eps(eps)
    t_start = check_positive(t_start, "t_start", integer=True)
    rng = as_generator(rng)
    root = child_seed(rng)
    start_queries = chain.query_counter
    history = []
    t0 = t_start
    while t0 <= t_cap:
        R = max(1, math.ceil(repeat_scale * (math.log(t0) + math.log(max(chain.n, 2)))))
        acc = rej = 0
        for j in range(R):
            d = test_mixing_at(chain, t0, eps, config, substream(root, "estimate", t0, j))
            acc += d.accepted
            rej += not d.accepted
            if 2 * acc > R or 2 * rej >= R:
                break
        accepted = 2 * acc > R
        history.append((t0, acc, rej))
        if accepted:
            return MixingEstimate(t0, chain.query_counter - start_queries, history)
        t0 *= 2
    raise NonConvergenceError(f"no t0 <= {t_cap} accepted")


class MixingTimeEstimator(BaseEstimator):
    """Estimator wrapper: ``fit(chain)`` sets ``t_mix_`` and ``queries_``."""

    def __init__(self, eps=0.5, reps=None, ref_scale=4.0, state_scale=1.0, kappa=1.0,
                 c_gamma=1.0, c_one=1.0, t_cap=2**20, repeat_scale=1.0, random_state=0):
        self.eps = eps
        self.reps = reps
        self.ref_scale = ref_scale
        self.state_scale = state_scale
        self.kappa = kappa
        self.c_gamma = c_gamma
        self.c_one = c_one
        self.t_cap = t_cap
        self.repeat_scale = repeat_scale
        self.random_state = random_state

    def mixing_config(self):
        return MixingConfig(self.reps, self.ref_scale, self.state_scale, self.kappa,
                            self.c_gamma, self.c_one)

    def fit(self, chain, y=None):
        est = estimate_mixing_time(chain, self.eps, self.mixing_config(),
                                   as_generator(self.random_state), t_cap=self.t_cap,
                                   repeat_scale=self.repeat_scale)
        self.t_mix_ = est.t_estimate
        self.queries_ = est.queries
        self.history_ = est.history
        return self


# -- generators and file format -----------------------------------------------

def lazy_cycle(n, laziness=0.5):
    """Stay with probability ``laziness``, else step to a uniform neighbour."""
    n = check_positive(n, "n", integer=True)
    if not 0 <= laziness <= 1:
        raise InvalidParameterError("laziness must lie in [0, 1]")
    rows = {}
    for x in range(n):
        row = {}
        row[x] = row.get(x, 0.0) + laziness
        for y in ((x + 1) % n, (x - 1) % n):
            row[y] = row.get(y, 0.0) + (1 - laziness) / 2
        rows[x] = list(row.items())
    return MarkovChain.from_rows(n, rows)


def two_cliques(k, bridge_prob):
    """Two ``k``-cliques (self-loops included) joined by one edge.

    Every state moves uniformly within its clique; the two bridge endpoints
    divert ``bridge_prob`` of their self-loop across the edge, so the matrix
    is symmetric and the stationary distribution uniform.
    """
    k = check_positive(k, "k", integer=True)
    if not 0 <= bridge_prob <= 1 / k:
        raise InvalidParameterError(f"bridge_prob must lie in [0, 1/k] = [0, {1 / k}]")
    n = 2 * k
    P = np.zeros((n, n))
    P[:k, :k] = 1 / k
    P[k:, k:] = 1 / k
    u, v = k - 1, k
    P[u, u] -= bridge_prob
    P[v, v] -= bridge_prob
    P[u, v] = bridge_prob
    P[v, u] = bridge_prob
    return MarkovChain(P)


def complete_graph(n):
    n = check_positive(n, "n", integer=True)
    return MarkovChain(np.full((n, n), 1.0 / n))


def parse_chain_text(text):
    """Parse ``src<TAB>dst<TAB>prob`` lines (1-based states, '#' comments)."""
    entries = []
    n = 0
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        parts = s.split("\t")
        if len(parts) != 3:
            raise ParseError(f"expected src<TAB>dst<TAB>prob, got {line!r}", lineno)
        try:
            x, y, pr = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"bad number in {line!r}", lineno) from None
        if x < 1 or y < 1:
            raise ParseError("states are 1-based", lineno)
        entries.append((x - 1, y - 1, pr))
        n = max(n, x, y)
    if not entries:
        raise ParseError("empty chain file")
    rows = {}
    for x, y, pr in entries:
        rows.setdefault(x, []).append((y, pr))
    return MarkovChain.from_rows(n, rows)


def load_chain(spec):
    """Resolve ``cycle:<n>:<laziness>``, ``cliques:<k>:<bridge>``, ``complete:<n>`` or a file."""
    spec = str(spec)
    kind, _, rest = spec.partition(":")
    args = rest.split(":") if rest else []
    try:
        if kind == "cycle" and len(args) == 2:
            return lazy_cycle(int(args[0]), float(args[1]))
        if kind == "cliques" and len(args) == 2:
            return two_cliques(int(args[0]), float(args[1]))
        if kind == "complete" and len(args) == 1:
            return complete_graph(int(args[0]))
    except ValueError as exc:
        if isinstance(exc, InvalidParameterError):
            raise
        raise InvalidParameterError(f"bad chain specifier {spec!r}") from None
    path = Path(spec)
    if not path.exists():
        raise InvalidParameterError(f"not a chain file or known specifier: {spec!r}")
    return parse_chain_text(path.read_text(encoding="utf-8"))


def format_chain(chain):
    lines = []
    for x in range(chain.n):
        for y, pr in chain.row(x):
            lines.append(f"{x + 1}\t{y + 1}\t{pr!r}")
    return "\n".join(lines) + "\n"
