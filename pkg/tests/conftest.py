import pytest
from hypothesis import HealthCheck, settings

from hopsim.addressing import Address, PrefixPool

settings.register_profile(
    "ci",
    derandomize=True,
    deadline=None,
    max_examples=100,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture
def pool24() -> PrefixPool:
    return PrefixPool.parse("184.164.243.0/24")


@pytest.fixture
def pool30() -> PrefixPool:
    return PrefixPool.parse("192.0.2.8/30")


@pytest.fixture
def internal() -> Address:
    return Address.parse("10.0.0.1")


@pytest.fixture
def line_topology(tmp_path):
    """Three-AS line 1-2-3 written to disk for scenario configs."""
    path = tmp_path / "topo.txt"
    path.write_text("1 2\n2 3\n")
    return path


def make_config(
    tmp_path,
    *,
    seed=42,
    n_hops=5,
    pool="184.164.243.0/24",
    dwell="fixed",
    fixed_ms=1000.0,
    low_ms=1000.0,
    high_ms=10000.0,
    packets=20,
    gap_ms="100",
    grace_ms=200.0,
    extra="",
    server_hopping=True,
    topo="1 2\n2 3\n",
    server_as=3,
    client_as=1,
    server_ip="10.0.0.1",
):
    """Write a scenario config (plus topology) into tmp_path; returns the path."""
    (tmp_path / "topo.txt").write_text(topo)
    text = f"""
[scenario]
seed = {seed}
n_hops = {n_hops}
grace_window_ms = {grace_ms}

[topology]
file = topo.txt

[server]
internal_ip = {server_ip}
attached_as = {server_as}
pool = {pool}
hopping = {"true" if server_hopping else "false"}

[client]
internal_ip = 184.164.242.77
attached_as = {client_as}

[dwell]
source = {dwell}
fixed_ms = {fixed_ms}
low_ms = {low_ms}
high_ms = {high_ms}

[traffic]
packets = {packets}
gap_ms = {gap_ms}
{extra}
"""
    path = tmp_path / "scenario.ini"
    path.write_text(text)
    return path
