import numpy as np
import pytest

from lpustat._seeding import as_generator, derive_seed_sequence, spawn_generators, stream


def test_stream_depends_only_on_key():
    a = stream(7, "path", 3).random(5)
    stream(7, "path", 2).random(100)
    b = stream(7, "path", 3).random(5)
    np.testing.assert_array_equal(a, b)


def test_streams_differ_by_tag_index_and_master():
    base = stream(7, "path", 3).random(4)
    for other in (stream(7, "tuples", 3), stream(7, "path", 4), stream(8, "path", 3)):
        assert not np.array_equal(base, other.random(4))


def test_negative_master_rejected():
    with pytest.raises(ValueError):
        derive_seed_sequence(-1, "x")


def test_as_generator_passthrough_and_types():
    g = np.random.default_rng(0)
    assert as_generator(g) is g
    np.testing.assert_array_equal(as_generator(5).random(3), as_generator(5).random(3))
    with pytest.raises(TypeError):
        as_generator("seed")


def test_spawn_generators_deterministic():
    a = [g.random() for g in spawn_generators(11, 3)]
    b = [g.random() for g in spawn_generators(11, 3)]
    assert a == b and len(set(a)) == 3
