"""On-path observation, IP blocklists, and hop-timing analysis.

The observer sits on one inter-AS link and sees every packet crossing
it. Blocking is the baseline attack: a static list of known addresses,
or a reactive list that adds any sufficiently-used destination after a
detection delay. Timing analysis symbolizes the observed inter-hop
intervals and compares them against a background dwell model; the
statistic is the same L1 distance the dwell module uses, so both sides
of the arms race measure with one ruler.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .addressing import Address, Prefix
from .dwell import DhmmModel, IntervalAlphabet, distribution_distance, start_sampler
from .errors import HopsimError
from .flowtable import Packet, PacketKind


class EmptyInput(HopsimError):
    """Timing analysis invoked on an empty interval list."""


class Verdict(Enum):
    PASS = "pass"
    BLOCK = "block"


@dataclass
class ObserverTap:
    """Passive log of packets crossing one link, in time order."""

    link: tuple[int, int]
    log: list[tuple[float, Address, Address, PacketKind]] = field(default_factory=list)

    def watches(self, a: int, b: int) -> bool:
        return {a, b} == set(self.link)

    def observe(self, t: float, packet: Packet) -> None:
        if self.log and t < self.log[-1][0]:
            raise ValueError("tap log must stay time-ordered")
        self.log.append((t, packet.src, packet.dst, packet.kind))

    def dump_lines(self) -> list[str]:
        """Tap log in the event-trace line format."""
        return [
            f"{t:.3f},adversary,observe,src={src};dst={dst};kind={kind.value}"
            for t, src, dst, kind in self.log
        ]


class BlockMode(Enum):
    STATIC = "static"
    REACTIVE = "reactive"


@dataclass
class BlockPolicy:
    """Address filter; reactive mode learns destinations it has seen.

    In reactive mode a destination observed `trigger_count` times is
    added to the blocked set `detect_delay_ms` after its first
    qualifying observation — the knob that models how fast the filter
    operator reacts.
    """

    blocked: set[Address | Prefix] = field(default_factory=set)
    mode: BlockMode = BlockMode.STATIC
    detect_delay_ms: float = 0.0
    trigger_count: int = 1
    _dst_counts: dict[Address, int] = field(default_factory=dict)
    _pending: dict[Address, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode is BlockMode.REACTIVE and self.detect_delay_ms <= 0:
            raise ValueError("reactive mode requires a positive detect delay")

    def _listed(self, address: Address, at: float) -> bool:
        for entry in self.blocked:
            if isinstance(entry, Prefix):
                if entry.contains(address):
                    return True
            elif entry == address:
                return True
        activation = self._pending.get(address)
        return activation is not None and at >= activation

    def observe(self, packet: Packet, at: float) -> None:
        if self.mode is not BlockMode.REACTIVE:
            return
        count = self._dst_counts.get(packet.dst, 0) + 1
        self._dst_counts[packet.dst] = count
        if count == self.trigger_count and packet.dst not in self._pending:
            self._pending[packet.dst] = at + self.detect_delay_ms


def filter_packet(policy: BlockPolicy, packet: Packet, at: float | None = None) -> Verdict:
    """Verdict for one observed packet; advances reactive state.

    `at` is the observation time; it defaults to the packet's send time
    for standalone use.
    """
    t = packet.sent_at if at is None else at
    policy.observe(packet, t)
    if policy._listed(packet.src, t) or policy._listed(packet.dst, t):
        return Verdict.BLOCK
    return Verdict.PASS


def extract_hop_intervals(tap: ObserverTap, flow_src: Address | None = None) -> list[float]:
    """Inter-hop intervals of the hopping peer as seen from one flow.

    Observed packets are grouped by source; within the selected group,
    the peer (destination) address changing marks a hop. When no source
    is given, the group with the most distinct destinations is taken:
    that is the flow tracking a hopping peer, and unrelated background
    flows do not disturb it.
    """
    groups: dict[Address, list[tuple[float, Address]]] = {}
    for t, src, dst, _ in tap.log:
        groups.setdefault(src, []).append((t, dst))
    if flow_src is not None:
        sequence = groups.get(flow_src, [])
    elif groups:
        chosen = max(groups, key=lambda s: (len({d for _, d in groups[s]}), -s.bits))
        sequence = groups[chosen]
    else:
        sequence = []
    change_times: list[float] = []
    last_dst: Address | None = None
    for t, dst in sequence:
        if dst != last_dst:
            change_times.append(t)
            last_dst = dst
    return [b - a for a, b in zip(change_times, change_times[1:])]


def timing_detect(
    intervals: list[float],
    background: DhmmModel,
    alphabet: IntervalAlphabet,
    reference_seed: int = 0,
) -> float:
    """Distance between observed intervals and an equal-size background sample.

    The caller compares the statistic against its own threshold; this
    function only measures.
    """
    if not intervals:
        raise EmptyInput("no intervals to analyze")
    reference = start_sampler(background, reference_seed).take(len(intervals))
    return distribution_distance(intervals, reference, alphabet)
