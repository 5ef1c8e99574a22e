"""Discrete distributions over [n], sample counts and synthetic families."""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from closeness._validation import (
    check_count_array,
    check_eps,
    check_positive,
    check_probability_array,
    check_same_length,
)
from closeness.exceptions import InvalidParameterError, ParseError


@dataclass(frozen=True, eq=False)
class ProbabilityVector:
    """A distribution over ``n`` elements (0-based indices internally)."""

    probs: np.ndarray

    def __post_init__(self):
        arr = check_probability_array(self.probs)
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @property
    def n(self):
        return self.probs.size

    def __len__(self):
        return self.probs.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.probs, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, ProbabilityVector):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class CountVector:
    """Per-element occurrence counts from one sample.

    ``nominal_size`` is the size parameter ``m`` the sample was drawn with
    (the Poisson mean in poissonized mode); the statistics normalise by it,
    not by the realised total.
    """

    counts: np.ndarray
    nominal_size: float

    def __post_init__(self):
        arr = check_count_array(self.counts)
        if arr.ndim != 1:
            raise InvalidParameterError("a CountVector holds a single 1-d sample")
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)
        check_positive(self.nominal_size, "nominal_size")

    @property
    def n(self):
        return self.counts.size

    @property
    def actual_total(self):
        return int(self.counts.sum())

    def __len__(self):
        return self.counts.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.counts, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, CountVector):
            return NotImplemented
        return self.nominal_size == other.nominal_size and np.array_equal(
            self.counts, other.counts
        )

    __hash__ = None


@dataclass(frozen=True)
class LowerBoundInstance:
    p: ProbabilityVector
    q: ProbabilityVector
    delta: float
    heavy_mass_per_element: float
    light_mass_per_element: float
    support_split: tuple = field(default=(0, 0))


def make_uniform(n):
    n = check_positive(n, "n", integer=True)
    return ProbabilityVector(np.full(n, 1.0 / n))


def make_perturbed_uniform(n, eps):
    """Entries alternate ``(1 + eps)/n`` and ``(1 - eps)/n``."""
    n = check_positive(n, "n", integer=True)
    eps = check_eps(eps, allow_zero=True)
    if n % 2:
        raise InvalidParameterError(f"n must be even, got {n}")
    sign = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    return ProbabilityVector((1.0 + eps * sign) / n)


def make_lower_bound_pair(n, m1, eps, C=4.0, delta=0.25):
    """Hard instance pair: equal heavy block ``A``, perturbed light block ``B``.

    ``A`` has ``floor((1 - delta) * m1)`` elements sharing mass ``1 - delta``
    (so about ``1/m1`` each) and ``B`` has ``floor(n / C)`` elements, rounded
    down to even, sharing mass ``delta`` (about ``delta * C / n`` each).  On
    ``B``, ``q`` multiplies the light mass by ``1 + eps * z`` with ``z``
    alternating +1/-1, so both vectors normalise exactly and
    ``||p - q||_1 = delta * eps``.
    """
    n = check_positive(n, "n", integer=True)
    m1 = check_positive(m1, "m1", integer=True)
    eps = check_eps(eps, allow_zero=True)
    check_positive(C, "C")
    if not 0 < delta < 1:
        raise InvalidParameterError("delta must lie in (0, 1)")
    size_a = math.floor((1 - delta) * m1)
    size_b = math.floor(n / C)
    size_b -= size_b % 2
    if size_a < 1 or size_b < 2:
        raise InvalidParameterError("instance too small: need |A| >= 1 and |B| >= 2")
    if size_a + size_b > n:
        raise InvalidParameterError(
            f"support overflow: |A| + |B| = {size_a + size_b} exceeds n = {n}"
        )
    heavy = (1 - delta) / size_a
    light = delta / size_b
    z = np.where(np.arange(size_b) % 2 == 0, 1.0, -1.0)
    p = np.zeros(n)
    q = np.zeros(n)
    p[:size_a] = heavy
    q[:size_a] = heavy
    p[size_a:size_a + size_b] = light
    q[size_a:size_a + size_b] = light * (1 + eps * z)
    return LowerBoundInstance(
        p=ProbabilityVector(p),
        q=ProbabilityVector(q),
        delta=delta,
        heavy_mass_per_element=heavy,
        light_mass_per_element=light,
        support_split=(size_a, size_b),
    )


def _check_mode(mode):
    if mode not in ("poissonized", "fixed"):
        raise InvalidParameterError(f"mode must be 'poissonized' or 'fixed', got {mode!r}")


def sample_counts(dist, m, mode="poissonized", rng=None):
    """Draw one sample of nominal size ``m`` and return its counts.

    Poissonized mode draws every count independently from ``Pois(m * p_i)``;
    fixed mode draws exactly ``floor(m)`` multinomial samples.
    """
    m = check_positive(m, "m")
    _check_mode(mode)
    if rng is None:
        raise InvalidParameterError("an explicit random generator is required")
    probs = np.asarray(dist, dtype=float)
    if mode == "poissonized":
        counts = rng.poisson(m * probs)
    else:
        counts = rng.multinomial(int(math.floor(m)), probs)
    return CountVector(counts, m)


def sample_counts_batch(dist, m, size, mode="poissonized", rng=None):
    """Vectorised :func:`sample_counts`: a ``(size, n)`` array of counts."""
    m = check_positive(m, "m")
    _check_mode(mode)
    probs = np.asarray(dist, dtype=float)
    if mode == "poissonized":
        return rng.poisson(m * probs, size=(size, probs.size))
    return rng.multinomial(int(math.floor(m)), probs, size=size)


def l1_distance(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    check_same_length(p, q, "distributions")
    return float(np.abs(p - q).sum())


def _parse_number(text, what, cast=float):
    try:
        return cast(text)
    except ValueError:
        raise InvalidParameterError(f"bad {what} in specifier: {text!r}") from None


def parse_distribution_text(text):
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ParseError(f"not a decimal probability: {line!r}", lineno) from None
    return ProbabilityVector(np.array(values))


def load_distribution(spec):
    """Resolve a file path or shorthand specifier to a ProbabilityVector.

    Shorthands: ``uniform:<n>``, ``perturbed:<n>:<eps>``,
    ``lowerbound-p:<n>:<m1>:<eps>``, ``lowerbound-q:<n>:<m1>:<eps>``.
    """
    spec = str(spec)
    kind, _, rest = spec.partition(":")
    args = rest.split(":") if rest else []
    if kind == "uniform" and len(args) == 1:
        return make_uniform(_parse_number(args[0], "n", int))
    if kind == "perturbed" and len(args) == 2:
        return make_perturbed_uniform(_parse_number(args[0], "n", int), _parse_number(args[1], "eps"))
    if kind in ("lowerbound-p", "lowerbound-q") and len(args) == 3:
        inst = make_lower_bound_pair(
            _parse_number(args[0], "n", int),
            _parse_number(args[1], "m1", int),
            _parse_number(args[2], "eps"),
        )
        return inst.p if kind == "lowerbound-p" else inst.q
    path = Path(spec)
    if not path.exists():
        raise InvalidParameterError(f"not a distribution file or known specifier: {spec!r}")
    return parse_distribution_text(path.read_text(encoding="utf-8"))


def format_distribution(dist):
    """Plain-decimal text form, one probability per line (round-trips exactly)."""
    return "".join(f"{x!r}\n" for x in np.asarray(dist, dtype=float).tolist())
