import pytest
from hypothesis import given
from hypothesis import strategies as st

from hopsim.addressing import (
    Address,
    IPVersion,
    Prefix,
    PrefixPool,
    parse_reverse_pointer,
)
from hopsim.errors import InvalidPool


class TestAddress:
    def test_parse_v4_round_trip(self):
        a = Address.parse("184.164.243.0")
        assert a.version is IPVersion.V4
        assert str(a) == "184.164.243.0"

    def test_parse_v6_round_trip(self):
        a = Address.parse("2001:db8::1")
        assert a.version is IPVersion.V6
        assert a.width == 128
        assert str(a) == "2001:db8::1"

    def test_rejects_out_of_range_bits(self):
        with pytest.raises(ValueError):
            Address(IPVersion.V4, 1 << 32)

    def test_reverse_pointer_round_trip(self):
        for text in ("192.0.2.7", "2001:db8::42"):
            a = Address.parse(text)
            assert parse_reverse_pointer(a.reverse_pointer()) == a


class TestPrefix:
    def test_parse_and_contains(self):
        p = Prefix.parse("184.164.243.0/24")
        assert p.contains(Address.parse("184.164.243.200"))
        assert not p.contains(Address.parse("184.164.242.200"))
        assert p.num_addresses == 256

    def test_rejects_noncanonical_base(self):
        with pytest.raises(ValueError):
            Prefix(Address.parse("184.164.243.1"), 24)

    def test_v6_prefix(self):
        p = Prefix.parse("2001:db8::/32")
        assert p.contains(Address.parse("2001:db8:ffff::1"))
        assert not p.contains(Address.parse("2001:db9::1"))

    def test_contains_is_version_strict(self):
        p = Prefix.parse("0.0.0.0/0")
        assert not p.contains(Address.parse("::1"))

    @given(st.integers(min_value=0, max_value=(1 << 32) - 1), st.integers(0, 32))
    def test_contains_matches_top_bits_definition(self, bits, length):
        base = Address(IPVersion.V4, bits & ~((1 << (32 - length)) - 1) & 0xFFFFFFFF)
        p = Prefix(base, length)
        probe = Address(IPVersion.V4, bits)
        shift = 32 - length
        assert p.contains(probe) == (probe.bits >> shift == base.bits >> shift)


class TestPrefixPool:
    def test_rejects_empty(self):
        with pytest.raises(InvalidPool):
            PrefixPool(())

    def test_rejects_mixed_version(self):
        with pytest.raises(InvalidPool):
            PrefixPool((Prefix.parse("10.0.0.0/8"), Prefix.parse("2001:db8::/32")))

    def test_rejects_nested_prefixes(self):
        with pytest.raises(InvalidPool):
            PrefixPool((Prefix.parse("10.0.0.0/8"), Prefix.parse("10.1.0.0/16")))

    def test_total_addresses_sums_members(self):
        pool = PrefixPool.parse("184.164.243.0/24, 184.164.242.0/24")
        assert pool.total_addresses == 512

    def test_covering_prefix(self):
        pool = PrefixPool.parse("184.164.243.0/24, 184.164.242.0/24")
        a = Address.parse("184.164.242.9")
        assert pool.covering_prefix(a) == Prefix.parse("184.164.242.0/24")
