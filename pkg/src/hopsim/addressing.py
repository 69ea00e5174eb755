"""IP addresses, CIDR prefixes and prefix pools.

Addresses are plain unsigned integers tagged with an IP version, so the
same arithmetic drives v4 (32-bit) and v6 (128-bit) hopping. Text
parsing and formatting delegate to the stdlib ``ipaddress`` module.
"""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from enum import Enum

from .errors import InvalidPool


class IPVersion(Enum):
    V4 = 4
    V6 = 6

    @property
    def width(self) -> int:
        return 32 if self is IPVersion.V4 else 128


@dataclass(frozen=True)
class Address:
    version: IPVersion
    bits: int

    def __post_init__(self):
        if not 0 <= self.bits < (1 << self.version.width):
            raise ValueError(f"address value out of range for {self.version.name}")

    @property
    def width(self) -> int:
        return self.version.width

    @classmethod
    def parse(cls, text: str) -> "Address":
        addr = ipaddress.ip_address(text.strip())
        version = IPVersion.V4 if addr.version == 4 else IPVersion.V6
        return cls(version, int(addr))

    def reverse_pointer(self) -> str:
        """Reverse-DNS name (in-addr.arpa / ip6.arpa) for this address."""
        if self.version is IPVersion.V4:
            return ipaddress.IPv4Address(self.bits).reverse_pointer
        return ipaddress.IPv6Address(self.bits).reverse_pointer

    def __str__(self) -> str:
        if self.version is IPVersion.V4:
            return str(ipaddress.IPv4Address(self.bits))
        return str(ipaddress.IPv6Address(self.bits))


def parse_reverse_pointer(name: str) -> Address:
    """Inverse of :meth:`Address.reverse_pointer`."""
    name = name.strip().rstrip(".")
    if name.endswith(".in-addr.arpa"):
        octets = name[: -len(".in-addr.arpa")].split(".")
        if len(octets) != 4:
            raise ValueError(f"bad v4 reverse pointer: {name}")
        return Address.parse(".".join(reversed(octets)))
    if name.endswith(".ip6.arpa"):
        nibbles = name[: -len(".ip6.arpa")].split(".")
        if len(nibbles) != 32:
            raise ValueError(f"bad v6 reverse pointer: {name}")
        hexstr = "".join(reversed(nibbles))
        return Address(IPVersion.V6, int(hexstr, 16))
    raise ValueError(f"not a reverse pointer: {name}")


@dataclass(frozen=True)
class Prefix:
    """CIDR prefix in canonical form (all host bits of `base` zero)."""

    base: Address
    length: int

    def __post_init__(self):
        width = self.base.width
        if not 0 <= self.length <= width:
            raise ValueError(f"prefix length {self.length} out of range")
        if self.base.bits & self.host_mask:
            raise ValueError(f"prefix base {self.base} has nonzero host bits")

    @property
    def version(self) -> IPVersion:
        return self.base.version

    @property
    def host_bits(self) -> int:
        return self.base.width - self.length

    @property
    def host_mask(self) -> int:
        return (1 << self.host_bits) - 1

    @property
    def num_addresses(self) -> int:
        return 1 << self.host_bits

    def contains(self, address: Address) -> bool:
        if address.version is not self.version:
            return False
        return (address.bits & ~self.host_mask) == self.base.bits

    def covers(self, other: "Prefix") -> bool:
        """True if every address of `other` is inside this prefix."""
        return self.length <= other.length and self.contains(other.base)

    @classmethod
    def parse(cls, text: str) -> "Prefix":
        net = ipaddress.ip_network(text.strip(), strict=True)
        version = IPVersion.V4 if net.version == 4 else IPVersion.V6
        return cls(Address(version, int(net.network_address)), net.prefixlen)

    def __str__(self) -> str:
        return f"{self.base}/{self.length}"


@dataclass(frozen=True)
class PrefixPool:
    """Non-empty, same-version, pairwise disjoint set of prefixes."""

    prefixes: tuple[Prefix, ...]

    def __post_init__(self):
        if not self.prefixes:
            raise InvalidPool("pool must contain at least one prefix")
        version = self.prefixes[0].version
        for p in self.prefixes:
            if p.version is not version:
                raise InvalidPool("pool mixes IP versions")
        for i, a in enumerate(self.prefixes):
            for b in self.prefixes[i + 1 :]:
                if a.covers(b) or b.covers(a):
                    raise InvalidPool(f"overlapping prefixes {a} and {b}")

    @property
    def version(self) -> IPVersion:
        return self.prefixes[0].version

    @property
    def total_addresses(self) -> int:
        return sum(p.num_addresses for p in self.prefixes)

    def contains(self, address: Address) -> bool:
        return any(p.contains(address) for p in self.prefixes)

    def covering_prefix(self, address: Address) -> Prefix:
        for p in self.prefixes:
            if p.contains(address):
                return p
        raise InvalidPool(f"{address} not covered by pool")

    @classmethod
    def parse(cls, text: str) -> "PrefixPool":
        parts = [p for p in (s.strip() for s in text.split(",")) if p]
        return cls(tuple(Prefix.parse(p) for p in parts))

    def __str__(self) -> str:
        return ",".join(str(p) for p in self.prefixes)
