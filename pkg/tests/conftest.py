import pytest

from dscot.crypto import Address, KeyPair
from dscot.ledger import Ledger
from dscot.registry import Registry
from dscot.sessions import DscotNetwork, Principal

# default accounts of the Remix VM, as they appear in the published call outputs
REMIX_OWNER = Address("0x5B38Da6a701c568545dCfcB03FcB875f56beddC4")
REMIX_USER = Address("0x4B20993Bc481177ec7E8f571ceCaE8A9e22C02db")
REMIX_FOG = Address("0x78731D3Ca6b7E34aC0F824c42a7cC18A495cabaB")
REMIX_DEVICE = Address("0x617F2E2fD72FD9D5503197092aC168c91465E7f2")


def addr(name: str) -> Address:
    return KeyPair.from_seed(99, name).address


@pytest.fixture
def addrs():
    return {n: addr(n) for n in ("A", "B", "C", "U", "U2", "F", "F2", "D", "D1", "D2")}


@pytest.fixture
def registry(addrs):
    return Registry(addrs["A"])


@pytest.fixture
def principals():
    return {
        "owner": Principal.from_seed(5, "owner", "owner"),
        "admin": Principal.from_seed(5, "admin", "admin"),
        "user": Principal.from_seed(5, "user", "user"),
        "user2": Principal.from_seed(5, "user2", "user"),
        "fog": Principal.from_seed(5, "fog", "fog"),
        "device": Principal.from_seed(5, "device", "device"),
    }


@pytest.fixture
def network(principals):
    net = DscotNetwork(Ledger(validators=4), seed=11)
    for p in principals.values():
        net.enroll(p)
    return net


@pytest.fixture
def mapped_network(network, principals):
    p = principals
    assert network.owner_init(p["owner"]).ok
    assert network.map_device_session(p["owner"], p["fog"], p["device"]).ok
    assert network.add_user_session(p["owner"], p["user"], p["device"], p["fog"]).ok
    return network


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS.values(), key=lambda s: int(s.split("criterion")[1].split()[0])):
            terminalreporter.write_line(line)
