import csv
import json
import math
from collections import Counter

import numpy as np
import pytest

from closeness.exceptions import InvalidParameterError, ParseError
from closeness.experiments import (
    FIXTURE_CORPUS,
    FIXTURE_TOTALS,
    GRID_COLUMNS,
    SWEEP_COLUMNS,
    WORDS_COLUMNS,
    SweepConfig,
    conditional_pair,
    default_grid,
    format_csv,
    grid_experiment,
    load_bigram_counts,
    lower_bound_sweep,
    parse_bigram_text,
    word_similarity_curve,
    words_csv_rows,
)

M2_GRID = [50, 100, 200, 400, 700, 1000]


@pytest.fixture(scope="module")
def table():
    return load_bigram_counts(FIXTURE_CORPUS)


def test_empty_and_duplicates():
    assert parse_bigram_text("") == {}
    t = parse_bigram_text("wolf\tpack\t3\nwolf\tpack\t2\n")
    assert t["wolf"]["pack"] == 5


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ParseError, match="line 2"):
        parse_bigram_text("a\tb\t1\na\tb\n")
    with pytest.raises(ParseError, match="line 1"):
        parse_bigram_text("a\tb\t0\n")
    with pytest.raises(ParseError, match="line 1"):
        parse_bigram_text("a\tb\tx\n")


def test_fixture_totals_recomputed_independently(table):
    # recount with the csv module instead of the package parser
    totals = Counter()
    with open(FIXTURE_CORPUS, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh, delimiter="\t"):
            if row and not row[0].startswith("#"):
                totals[row[0]] += int(row[2])
    documented = json.loads(FIXTURE_TOTALS.read_text())
    assert dict(totals) == documented
    assert table.totals() == documented
    assert len(documented) >= 20


def test_fixture_structure(table):
    fox, star = table["fox"], table["fox*"]
    assert len(star) == 100 and all(fox[w] == c for w, c in star.items())
    assert not set(table["north"]) & set(table["south"])
    assert set(table["gray"]) <= set(table["grey"]) | set(table["gray"])


def test_unknown_word_lists_neighbours(table):
    with pytest.raises(InvalidParameterError, match="grey"):
        conditional_pair(table, "gry", "gray")


def test_stubbed_sampler_gives_exact_value(table):
    # the stub returns the corpus counts themselves for both words, so the
    # value is fixed and can be summed by hand with Python integers
    raw = table["grey"]
    counts = np.array([raw[w] for w in sorted(raw)])
    m1, m2 = 1000, 400
    rows = word_similarity_curve(table, "grey", "grey", m1, [m2], 2,
                                 sampler=lambda probs, m, rng: counts)
    expected = sum((((m2 - m1) * c) ** 2 - (m2**2 + m1**2) * c) / (2 * c)
                   for c in counts.tolist()) / (m1**1.5 * m2)
    _, mean_z, std_z, mean_tv, _ = rows[0]
    assert mean_z == pytest.approx(expected, rel=1e-12)
    assert std_z == 0 and mean_tv == 0


def test_identical_pair_null_and_flat_error_bars(table):
    rows = word_similarity_curve(table, "grey", "grey", 1000, M2_GRID, 200, rng=3, threads=1)
    stds = [r[2] for r in rows]
    for _, mean_z, std_z, *_ in rows:
        assert abs(mean_z) <= 3 * std_z
    assert max(stds) / min(stds) <= 3


def test_disjoint_pair_separates(table):
    same = word_similarity_curve(table, "grey", "grey", 1000, M2_GRID, 200, rng=3, threads=1)
    far = word_similarity_curve(table, "north", "south", 1000, M2_GRID, 200, rng=4, threads=1)
    means = [r[1] for r in far]
    assert all(b > a for a, b in zip(means, means[1:]))
    for s, f in zip(same, far):
        if s[0] >= 200:
            assert f[1] - s[1] >= 3 * math.hypot(f[2], s[2])


def test_word_curve_validation(table):
    with pytest.raises(InvalidParameterError):
        word_similarity_curve(table, "grey", "gray", 1000, [50], 1)


def test_words_rows_shape(table):
    curve = word_similarity_curve(table, "fox", "fox*", 500, [60], 3, rng=1, threads=1)
    rows = words_csv_rows("fox", "fox*", 500, curve, 3)
    assert len(rows[0]) == len(WORDS_COLUMNS)


def test_grid_null_symmetric():
    res = grid_experiment(400, 0.0, [100, 400], [40, 400], 200, rng=5, threads=1)
    assert all(0.4 <= r[3] <= 0.6 for r in res.rows)
    assert all(r[4] == 200 for r in res.rows)


def test_grid_csv_reproducible_and_thread_free():
    a = grid_experiment(200, 0.5, [50], [20, 60], 10, rng=2, threads=1).to_csv({"seed": 2})
    b = grid_experiment(200, 0.5, [50], [20, 60], 10, rng=2, threads=4).to_csv({"seed": 2})
    assert a == b
    lines = a.splitlines()
    assert lines[0] == "# seed=2" and lines[1] == ",".join(GRID_COLUMNS)


def test_default_grid_bounds():
    m1, m2 = default_grid(5000)
    assert m1[0] == math.ceil(5000 ** (2 / 3)) and m1[-1] == 5000
    assert m2[0] == math.ceil(math.sqrt(5000)) and m2[-1] == 5000


def test_sweep_rows():
    rows = lower_bound_sweep(400, 1.0, 300, [0.5, 1.0], 20,
                             SweepConfig(calibration_trials=100), rng=1, threads=1)
    assert [r[2] for r in rows] == [0.5, 1.0]
    assert rows[1][0] == rows[1][1]
    assert all(0 <= r[3] <= 1 for r in rows)
    text = format_csv(SWEEP_COLUMNS, rows)
    assert text.splitlines()[0] == ",".join(SWEEP_COLUMNS)


def test_sweep_rejects_bad_fraction():
    with pytest.raises(InvalidParameterError):
        lower_bound_sweep(400, 1.0, 300, [0.0], 10, rng=1)
