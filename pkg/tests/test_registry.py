import itertools

import pytest

from dscot.crypto import encode_packed, keccak256
from dscot.gas import GasTrace
from dscot.registry import (
    EVENT_ABI,
    LAST_ADMIN,
    NOT_ADMIN,
    DevicePair,
    Event,
    Registry,
    RegistryState,
    Revert,
    mint_token_id,
    replay,
    token_metadata,
)

from .conftest import REMIX_DEVICE, REMIX_FOG, REMIX_OWNER, REMIX_USER
from .oracle import NaiveRegistry, registry_view


def names(events):
    return [e.name for e in events]


def test_construct(registry, addrs):
    assert registry.state.admins == [addrs["A"]]
    assert registry.no_of_admins(addrs["A"]) == 1
    assert registry.tokens_issued(addrs["A"]) == []
    assert registry.state.fog_devices == {} and registry.state.users_devices == {}


@pytest.mark.parametrize(
    "op, args",
    [
        ("approve", ("C",)),
        ("del_admin", ("A",)),
        ("device_fog_mapping", ("F", "D")),
        ("del_dev", ("F",)),
        ("user_device_mapping", ("U", "D", "F")),
        ("del_user", ("U",)),
    ],
)
def test_non_admin_reverts_without_state_change(registry, addrs, op, args):
    before = registry.state.dumps()
    with pytest.raises(Revert) as info:
        getattr(registry, op)(addrs["B"], *(addrs[a] for a in args))
    assert info.value.reason == NOT_ADMIN
    assert registry.state.dumps() == before


def test_approve(registry, addrs):
    A, B = addrs["A"], addrs["B"]
    assert registry.approve(A, B) == [Event.make("AdminAdded", newAdmin=B, addingAdmin=A)]
    assert registry.no_of_admins(A) == 2
    assert registry.approve(A, B) == [Event.make("AdminAlreadyExists", newAdmin=B, sender=A)]
    assert registry.state.admins == [A, B]
    # the ERC-721-shaped token id argument is accepted and ignored
    assert names(registry.approve(B, addrs["C"], 7)) == ["AdminAdded"]


def test_del_admin(registry, addrs):
    A, B = addrs["A"], addrs["B"]
    registry.approve(A, B)
    assert registry.del_admin(A, B) == [Event.make("AdminDeleted", newAdmin=B, deletingAdmin=A)]
    assert registry.no_of_admins(A) == 1
    with pytest.raises(Revert):
        registry.del_admin(B, A)


def test_del_admin_absent_is_silent_noop(registry, addrs):
    before = registry.state.dumps()
    assert registry.del_admin(addrs["A"], addrs["C"]) == []
    assert registry.state.dumps() == before


def test_del_last_admin_refused(registry, addrs):
    with pytest.raises(Revert) as info:
        registry.del_admin(addrs["A"], addrs["A"])
    assert info.value.reason == LAST_ADMIN
    assert registry.state.admins == [addrs["A"]]


def test_admin_can_remove_itself_when_others_remain(registry, addrs):
    A, B = addrs["A"], addrs["B"]
    registry.approve(A, B)
    registry.del_admin(A, A)
    assert registry.state.admins == [B]


def test_device_fog_mapping_appends_in_order(registry, addrs):
    A, F, D1, D2 = addrs["A"], addrs["F"], addrs["D1"], addrs["D2"]
    ev = registry.device_fog_mapping(A, F, D1)
    assert ev == [Event.make("FogDeviceMappingAdded", fog=F, device=D1, addingAdmin=A)]
    registry.device_fog_mapping(A, F, D2)
    registry.device_fog_mapping(A, F, D1)  # duplicates are kept
    assert registry.state.fog_devices[F] == [D1, D2, D1]


def test_del_dev(registry, addrs):
    A, F, D, U = addrs["A"], addrs["F"], addrs["D"], addrs["U"]
    registry.device_fog_mapping(A, F, D)
    assert registry.del_dev(A, F) == [Event.make("FogDeviceAllMappingDeleted", fog=F, deletingAdmin=A)]
    assert F not in registry.state.fog_devices
    # unmapped fog: still an event, still empty
    assert names(registry.del_dev(A, addrs["F2"])) == ["FogDeviceAllMappingDeleted"]
    assert names(registry.user_device_mapping(A, U, D, F)) == ["DeviceDoesNotExist"]


def test_user_device_mapping(registry, addrs):
    A, U, D, F = addrs["A"], addrs["U"], addrs["D"], addrs["F"]
    assert registry.user_device_mapping(A, U, D, F) == [
        Event.make("DeviceDoesNotExist", device=D, fog=F, sender=A)
    ]
    assert U not in registry.state.users_devices
    registry.device_fog_mapping(A, F, D)
    assert registry.user_device_mapping(A, U, D, F) == [
        Event.make("UserDeviceMappingAdded", user=U, device=D, addingAdmin=A, fog=F)
    ]
    assert registry.users_devices(A, U, 0) == DevicePair(F, D)


def test_published_call_outputs():
    reg = Registry(REMIX_OWNER)
    reg.approve(REMIX_OWNER, REMIX_USER)
    reg.device_fog_mapping(REMIX_OWNER, REMIX_FOG, REMIX_DEVICE)
    reg.user_device_mapping(REMIX_OWNER, REMIX_USER, REMIX_DEVICE, REMIX_FOG)
    assert REMIX_OWNER in reg.admin_add(REMIX_OWNER)
    assert reg.no_of_admins(REMIX_OWNER) == 2
    pair = reg.users_devices(REMIX_OWNER, REMIX_USER, 0)
    assert str(pair.device) == "0x617f2e2fd72fd9d5503197092ac168c91465e7f2"
    assert str(pair.fog) == "0x78731d3ca6b7e34ac0f824c42a7cc18a495cabab"
    reg.mint_nft(REMIX_USER, REMIX_DEVICE, REMIX_FOG, 1657188740)
    [token] = reg.tokens_issued(REMIX_OWNER)
    assert (str(token.token_id), token.timestamp) == (
        "0xf63fee14c773d0896382c7b8cd950adae380254bd7a346cb965818fab9143d82",
        1657188740,
    )


def test_del_user(registry, addrs):
    A, U, D, F = addrs["A"], addrs["U"], addrs["D"], addrs["F"]
    registry.device_fog_mapping(A, F, D)
    registry.user_device_mapping(A, U, D, F)
    assert registry.del_user(A, U) == [Event.make("UserDeviceAllMappingDeleted", user=U, deletingAdmin=A)]
    assert U not in registry.state.users_devices
    assert names(registry.mint_nft(U, D, F, 10)) == ["NotAuthenticated"]


def test_mint_branches(registry, addrs):
    A, U, D, F = addrs["A"], addrs["U"], addrs["D"], addrs["F"]
    assert registry.mint_nft(U, D, F, 5) == [Event.make("DeviceDoesNotExist", device=D, fog=F, sender=U)]
    registry.device_fog_mapping(A, F, D)
    assert registry.mint_nft(U, D, F, 5) == [Event.make("NotAuthenticated", user=U)]
    registry.user_device_mapping(A, U, D, F)
    events = registry.mint_nft(U, D, F, 5)
    token_id = keccak256(encode_packed([D, F, U], 5))
    assert events == [
        Event.make("Authenticated", user=U, device=D, fog=F),
        Event.make("TokenCreated", _tokenId=token_id, User=U, device=D, fog=F, timestamp=5),
    ]
    assert len(registry.state.tokens) == 1
    assert registry.owner_of(token_id) == U
    assert registry.balance_of(U) == 1
    assert registry.balance_of(A) == 0


def test_mint_requires_the_exact_pair(registry, addrs):
    A, U, D, F, F2 = addrs["A"], addrs["U"], addrs["D"], addrs["F"], addrs["F2"]
    registry.device_fog_mapping(A, F, D)
    registry.device_fog_mapping(A, F2, D)
    registry.user_device_mapping(A, U, D, F)
    assert names(registry.mint_nft(U, D, F2, 1)) == ["NotAuthenticated"]


def test_mint_ids_differ_by_timestamp(registry, addrs):
    A, U, D, F = addrs["A"], addrs["U"], addrs["D"], addrs["F"]
    registry.device_fog_mapping(A, F, D)
    registry.user_device_mapping(A, U, D, F)
    t1 = registry.mint_nft(U, D, F, 100)[1]["_tokenId"]
    t2 = registry.mint_nft(U, D, F, 101)[1]["_tokenId"]
    assert t1 != t2
    assert t1 == mint_token_id(D, F, U, 100)


def test_owner_of_unknown(registry, addrs):
    with pytest.raises(Revert):
        registry.owner_of(keccak256(b"nope"))


def test_calls_require_admin(registry, addrs):
    for call, args in [
        ("no_of_admins", ()),
        ("admin_add", ()),
        ("tokens_issued", ()),
        ("users_devices", (addrs["U"], 0)),
        ("fog_devices", (addrs["F"], 0)),
    ]:
        with pytest.raises(Revert):
            getattr(registry, call)(addrs["B"], *args)


def test_mint_scan_bound(registry, addrs):
    """Element visits in a mint never exceed |fog list| + |user list|."""
    A, U, F = addrs["A"], addrs["U"], addrs["F"]
    from dscot.crypto import KeyPair

    devices = [KeyPair.from_seed(8, f"d{i}").address for i in range(6)]
    for d in devices:
        registry.device_fog_mapping(A, F, d)
    for d in devices[::2]:
        registry.user_device_mapping(A, U, d, F)
    for target in devices:
        registry.gas = GasTrace()
        registry.mint_nft(U, target, F, 1)
        bound = len(registry.state.fog_devices[F]) + len(registry.state.users_devices[U])
        assert registry.gas.loop_iterations <= bound


def test_event_abi_arity():
    for name, params in EVENT_ABI.items():
        kwargs = {}
        for p, typ, _ in params:
            kwargs[p] = 1 if typ == "uint256" else (bytes(32) if typ == "bytes32" else bytes(20))
        assert len(Event.make(name, **kwargs).args) == len(params)
    with pytest.raises(TypeError):
        Event.make("AdminAdded", newAdmin=bytes(20))
    assert len(EVENT_ABI) == 12


def test_event_dict_round_trip(addrs):
    ev = Event.make("TokenCreated", _tokenId=bytes(32), User=addrs["U"], device=addrs["D"], fog=addrs["F"], timestamp=9)
    assert Event.from_dict(ev.to_dict()) == ev
    assert ev.log_shape() == (4, 64)


def test_snapshot_round_trip(registry, addrs):
    A, U, D, F = addrs["A"], addrs["U"], addrs["D"], addrs["F"]
    registry.approve(A, addrs["B"])
    registry.device_fog_mapping(A, F, D)
    registry.user_device_mapping(A, U, D, F)
    registry.mint_nft(U, D, F, 3)
    text = registry.state.dumps()
    assert RegistryState.loads(text) == registry.state
    assert RegistryState.loads(text).dumps() == text


def test_replay_reconstructs_state(registry, addrs):
    A, B, U, D, F = addrs["A"], addrs["B"], addrs["U"], addrs["D"], addrs["F"]
    log = []
    log += registry.approve(A, B)
    log += registry.device_fog_mapping(A, F, D)
    log += registry.device_fog_mapping(B, F, addrs["D2"])
    log += registry.user_device_mapping(A, U, D, F)
    log += registry.mint_nft(U, D, F, 4)
    log += registry.del_admin(B, A)
    log += registry.del_dev(B, F)
    log += registry.mint_nft(U, D, F, 5)
    assert replay(A, log).dumps() == registry.state.dumps()


def test_token_metadata_delta_t(registry, addrs):
    A, U, D, F = addrs["A"], addrs["U"], addrs["D"], addrs["F"]
    registry.device_fog_mapping(A, F, D)
    registry.user_device_mapping(A, U, D, F)
    log = registry.mint_nft(U, D, F, 100) + registry.mint_nft(U, D, F, 105) + registry.mint_nft(U, D, F, 112)
    meta = token_metadata(A, log)
    assert [m.delta_t for m in meta] == [0, 5, 7]
    assert all(m.owner == A and m.user_id == U and m.device_id == D and m.fog_id == F for m in meta)


def test_mapping_precedence_all_orderings():
    """UserDeviceMappingAdded iff the pair is in fog_devices at call time, for every ordering."""
    from dscot.crypto import KeyPair

    A = KeyPair.from_seed(1, "admin").address
    fogs = [KeyPair.from_seed(1, f"f{i}").address for i in range(2)]
    devs = [KeyPair.from_seed(1, f"d{i}").address for i in range(2)]
    users = [KeyPair.from_seed(1, f"u{i}").address for i in range(2)]
    ops = (
        [("device_fog_mapping", (f, d)) for f in fogs for d in devs]
        + [("user_device_mapping", (u, d, f)) for u in users for d in devs for f in fogs]
        + [("del_dev", (f,)) for f in fogs]
    )
    checked = 0
    for seq in itertools.permutations(range(len(ops)), 3):
        reg = Registry(A)
        for i in seq:
            op, args = ops[i]
            if op == "user_device_mapping":
                u, d, f = args
                present = d in reg.state.fog_devices.get(f, [])
                ev = reg.user_device_mapping(A, u, d, f)
                assert ev[0].name == ("UserDeviceMappingAdded" if present else "DeviceDoesNotExist")
                checked += 1
            else:
                getattr(reg, op)(A, *args)
    assert checked > 0


def test_differential_against_naive_model(addrs):
    """del_admin of a non-member and del_dev of an unmapped fog match the list model."""
    A, X, F = addrs["A"], addrs["C"], addrs["F"]
    reg, model = Registry(A), NaiveRegistry(bytes(A))
    assert reg.del_admin(A, X) == [] and model.apply("del_admin", bytes(A), bytes(X)) == []
    reg.del_dev(A, F)
    model.apply("del_dev", bytes(A), bytes(F))
    assert registry_view(reg.state) == model.view()
