import pytest
from hypothesis import given, strategies as st

from oaelink.rng import MASK64, SplitMix64, fnv1a64

# published SplitMix64 outputs for seed 1234567
REFERENCE = [6457827717110365317, 3203168211198807973, 9817491932198370423,
             4593380528125082431, 16408922859458223821]


def test_reference_vector():
    r = SplitMix64(1234567)
    assert [r.next_u64() for _ in range(5)] == REFERENCE


def test_fnv1a64_known_values():
    # standard FNV-1a 64 test values
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_split_does_not_advance_parent_and_is_named():
    r = SplitMix64(9)
    a1 = r.split("A>B").next_u64()
    a2 = r.split("A>B").next_u64()
    b = r.split("B>A").next_u64()
    assert a1 == a2 != b
    assert r.next_u64() == SplitMix64(9).next_u64()


def test_chance_extremes():
    r = SplitMix64(3)
    assert not any(r.chance(0.0) for _ in range(200))
    assert all(r.chance(1.0) for _ in range(200))


@given(st.integers(0, MASK64), st.integers(1, 1000))
def test_below_in_range(seed, n):
    r = SplitMix64(seed)
    assert all(0 <= r.below(n) < n for _ in range(20))


@given(st.integers(0, MASK64))
def test_random_unit_interval(seed):
    r = SplitMix64(seed)
    assert all(0.0 <= r.random() < 1.0 for _ in range(20))


def test_below_rejects_nonpositive():
    with pytest.raises(ValueError):
        SplitMix64(1).below(0)
