import numpy as np
import pytest

from closeness.rng import as_generator, child_seed, substream


def test_same_key_same_stream():
    assert np.array_equal(substream(4, "trial", 3).random(5), substream(4, "trial", 3).random(5))


def test_different_keys_differ():
    a = substream(4, "trial", 3).random(5)
    assert not np.array_equal(a, substream(4, "trial", 4).random(5))
    assert not np.array_equal(a, substream(5, "trial", 3).random(5))


def test_negative_key_rejected():
    with pytest.raises(ValueError):
        substream(1, -1)


def test_as_generator():
    g = substream(2)
    assert as_generator(g) is g
    assert as_generator(7).random() == substream(7).random()
    assert 0 <= child_seed(substream(1)) < 2**63
