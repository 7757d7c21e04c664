"""Line-oriented scenario scripts and the deterministic runner.

Script format: one directive per line, whitespace-separated tokens, ``#``
comments. Settings (``seed``, ``validators``, ``clock-step``) must precede the
first step. A trailing ``!`` on a step directive (``mint! u d f``) marks it
required: if it fails, the run stops there.

Steps::

    principal NAME ROLE [0xPRIVATE_KEY]
    owner-init OWNER
    approve ADMIN NEW_ADMIN
    del-admin ADMIN TARGET
    map-device OWNER FOG DEVICE
    add-user OWNER USER DEVICE FOG
    del-dev ADMIN FOG
    del-user ADMIN USER
    mint USER DEVICE FOG
    call CALLER METHOD [ARGS...]
    advance-clock SECONDS
    inject-fault [VALIDATOR ...]      # no ids heals all validators
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Any

from .crypto import Address, Digest32, KeyPair, from_hex, keccak256
from .gas import DEFAULT_SCHEDULE, GasSchedule
from .ledger import Ledger, LedgerError
from .registry import DevicePair, Revert, Token
from .sessions import ROLES, DscotNetwork, Principal, SessionOutcome

__all__ = [
    "CALL_METHODS",
    "RunTrace",
    "ScenarioError",
    "ScenarioScript",
    "Step",
    "StepRecord",
    "calls_script",
    "canonical_script",
    "linearity_script",
    "load_fixture",
    "parse",
    "run",
]


class ScenarioError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


# contract-facing call name -> (registry method, argument kinds)
CALL_METHODS: dict[str, tuple[str, tuple[str, ...]]] = {
    "adminAdd": ("admin_add", ()),
    "No_ofAdmins": ("no_of_admins", ()),
    "users_devices": ("users_devices", ("principal", "int")),
    "fog_devices": ("fog_devices", ("principal", "int")),
    "tokens_Issued": ("tokens_issued", ()),
    "balanceOf": ("balance_of", ("principal",)),
    "ownerOf": ("owner_of", ("digest",)),
}

# directive -> number of principal-name operands (all operands for these are names)
_PRINCIPAL_STEPS = {
    "owner-init": 1,
    "approve": 2,
    "del-admin": 2,
    "map-device": 3,
    "add-user": 4,
    "del-dev": 2,
    "del-user": 2,
    "mint": 3,
}
_SETTINGS = ("seed", "validators", "clock-step")
STEP_DIRECTIVES = ("principal", "call", "advance-clock", "inject-fault") + tuple(_PRINCIPAL_STEPS)


@dataclass(frozen=True)
class Step:
    lineno: int
    directive: str
    args: tuple[str, ...]
    required: bool = False

    @property
    def text(self) -> str:
        return " ".join((self.directive + ("!" if self.required else ""),) + self.args)


@dataclass(frozen=True)
class ScenarioScript:
    seed: int = 0
    validators: int = 4
    clock_step: int = 1
    steps: tuple[Step, ...] = ()


def _int(lineno: int, token: str, what: str, minimum: int = 0) -> int:
    try:
        value = int(token)
    except ValueError:
        raise ScenarioError(lineno, f"{what} must be an integer, got {token!r}") from None
    if value < minimum:
        raise ScenarioError(lineno, f"{what} must be >= {minimum}")
    return value


def parse(text: str) -> ScenarioScript:
    """Validate a script; raise :class:`ScenarioError` on the first problem."""
    settings = {"seed": 0, "validators": 4, "clock-step": 1}
    steps: list[Step] = []
    principals: set[str] = set()

    for lineno, raw in enumerate(text.splitlines(), 1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        head, args = tokens[0], tuple(tokens[1:])
        required = head.endswith("!")
        directive = head.rstrip("!")

        if directive in _SETTINGS:
            if steps:
                raise ScenarioError(lineno, f"setting {directive!r} after the first step")
            if required or len(args) != 1:
                raise ScenarioError(lineno, f"{directive} takes exactly one integer")
            settings[directive] = _int(lineno, args[0], directive, 1 if directive != "seed" else 0)
            continue
        if directive not in STEP_DIRECTIVES:
            raise ScenarioError(lineno, f"unknown directive {directive!r}")

        def need(name: str) -> None:
            if name not in principals:
                raise ScenarioError(lineno, f"undeclared principal {name!r}")

        if directive == "principal":
            if len(args) not in (2, 3):
                raise ScenarioError(lineno, "principal NAME ROLE [0xPRIVATE_KEY]")
            name, role = args[0], args[1]
            if role not in ROLES:
                raise ScenarioError(lineno, f"unknown role {role!r}")
            if name in principals:
                raise ScenarioError(lineno, f"principal {name!r} declared twice")
            if len(args) == 3:
                try:
                    KeyPair.from_private(from_hex(args[2]))
                except ValueError as exc:
                    raise ScenarioError(lineno, f"bad private key: {exc}") from None
            principals.add(name)
        elif directive in _PRINCIPAL_STEPS:
            if len(args) != _PRINCIPAL_STEPS[directive]:
                raise ScenarioError(lineno, f"{directive} takes {_PRINCIPAL_STEPS[directive]} principal names")
            for name in args:
                need(name)
        elif directive == "call":
            if len(args) < 2:
                raise ScenarioError(lineno, "call CALLER METHOD [ARGS...]")
            need(args[0])
            if args[1] not in CALL_METHODS:
                raise ScenarioError(lineno, f"unknown call method {args[1]!r}")
            kinds = CALL_METHODS[args[1]][1]
            if len(args) - 2 != len(kinds):
                raise ScenarioError(lineno, f"{args[1]} takes {len(kinds)} argument(s)")
            for kind, token in zip(kinds, args[2:]):
                if kind == "principal":
                    need(token)
                elif kind == "int":
                    _int(lineno, token, "index")
                else:
                    try:
                        Digest32(token)
                    except ValueError:
                        raise ScenarioError(lineno, f"malformed hex token id {token!r}") from None
        elif directive == "advance-clock":
            if len(args) != 1:
                raise ScenarioError(lineno, "advance-clock SECONDS")
            _int(lineno, args[0], "seconds")
        elif directive == "inject-fault":
            for token in args:
                v = _int(lineno, token, "validator index")
                if v >= settings["validators"]:
                    raise ScenarioError(lineno, f"no validator {v}")
            if args and settings["validators"] < 4:
                raise ScenarioError(lineno, "fault injection needs at least 4 validators")
        steps.append(Step(lineno, directive, args, required))

    return ScenarioScript(settings["seed"], settings["validators"], settings["clock-step"], tuple(steps))


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


@dataclass
class StepRecord:
    index: int
    line: int
    text: str
    directive: str
    ok: bool
    reason: str | None = None
    operation: str | None = None
    tx_hash: str | None = None
    gas_used: int = 0
    fee: int = 0
    execution_cost: int = 0
    failed_rounds: int = 0
    events: list[dict[str, Any]] = field(default_factory=list)
    result: Any = None


@dataclass
class RunTrace:
    seed: int
    validators: int
    clock_step: int
    schedule: dict[str, int]
    steps: list[StepRecord]
    chain: str
    final_state: str
    principals: dict[str, str]
    stopped_at: int | None = None

    def body(self) -> dict[str, Any]:
        return {
            "chain": self.chain.splitlines(),
            "clock_step": self.clock_step,
            "final_state": json.loads(self.final_state),
            "principals": self.principals,
            "schedule": self.schedule,
            "seed": self.seed,
            "steps": [asdict(s) for s in self.steps],
            "stopped_at": self.stopped_at,
            "validators": self.validators,
        }

    @property
    def digest(self) -> str:
        return str(keccak256(_canonical(self.body()).encode()))

    def dumps(self) -> str:
        record = self.body()
        record["digest"] = self.digest
        return json.dumps(record, sort_keys=True, indent=1) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "operation", "gas_used", "fee", "events"])
        for s in self.steps:
            if s.operation is None:
                continue
            gas = s.execution_cost if s.directive == "call" else s.gas_used
            names = ";".join(e["event"] for e in s.events)
            writer.writerow([s.index, s.operation, gas, s.fee, names])
        return buf.getvalue()

    def events(self) -> list[dict[str, Any]]:
        return [e for s in self.steps for e in s.events]


def _canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _render(value: Any) -> Any:
    if isinstance(value, (Address, Digest32)):
        return str(value)
    if isinstance(value, DevicePair):
        return {"device": str(value.device), "fog": str(value.fog)}
    if isinstance(value, Token):
        return [str(value.token_id), value.timestamp]
    if isinstance(value, list):
        return [_render(v) for v in value]
    return value


def _record_outcome(rec: StepRecord, outcome: SessionOutcome) -> None:
    rec.ok = outcome.ok
    rec.reason = outcome.reason
    rec.failed_rounds = outcome.failed_rounds
    rec.events = [e.to_dict() for e in outcome.events]
    if outcome.receipts:
        receipt = outcome.receipts[0]
        rec.operation = receipt.operation
        rec.tx_hash = str(receipt.tx_hash)
        rec.gas_used = receipt.gas_used
        rec.fee = receipt.fee
    if outcome.nft_pass is not None:
        rec.result = json.loads(outcome.nft_pass.dumps())


class _Runner:
    def __init__(self, script: ScenarioScript, schedule: GasSchedule):
        self.script = script
        self.network = DscotNetwork(Ledger(script.validators, schedule), seed=script.seed, clock_step=script.clock_step)
        self.principals: dict[str, Principal] = {}

    def p(self, name: str) -> Principal:
        return self.principals[name]

    def step(self, index: int, step: Step) -> StepRecord:
        rec = StepRecord(index, step.lineno, step.text, step.directive, ok=True)
        net, a = self.network, step.args
        d = step.directive
        if d == "principal":
            key = (
                KeyPair.from_private(from_hex(a[2])) if len(a) == 3 else KeyPair.from_seed(self.script.seed, a[0])
            )
            principal = Principal.create(a[1], key, a[0])
            self.principals[a[0]] = principal
            net.enroll(principal)
            rec.result = str(principal.address)
        elif d == "advance-clock":
            net.advance_clock(int(a[0]))
            rec.result = net.clock
        elif d == "inject-fault":
            net.ledger.set_faults(int(v) for v in a)
            rec.result = sorted(net.ledger.faults)
        elif d == "call":
            self._call(rec, a)
        else:
            try:
                outcome = self._session(d, [self.p(n) for n in a])
            except LedgerError as exc:
                outcome = SessionOutcome(False, str(exc))
            _record_outcome(rec, outcome)
        return rec

    def _session(self, d: str, ps: list[Principal]) -> SessionOutcome:
        net = self.network
        if d == "owner-init":
            return net.owner_init(ps[0])
        if d == "approve":
            return net.approve_session(ps[0], ps[1])
        if d == "map-device":
            return net.map_device_session(ps[0], ps[1], ps[2])
        if d == "add-user":
            return net.add_user_session(ps[0], ps[1], ps[2], ps[3])
        if d == "mint":
            return net.mint_auth_session(ps[0], ps[1], ps[2])
        operation = {"del-admin": "del_admin", "del-dev": "del_dev", "del-user": "del_user"}[d]
        return net.transact(ps[0], operation, ps[1].address)

    def _call(self, rec: StepRecord, a: tuple[str, ...]) -> None:
        method, kinds = CALL_METHODS[a[1]]
        args: list[Any] = []
        for kind, token in zip(kinds, a[2:]):
            if kind == "principal":
                args.append(self.p(token).address)
            elif kind == "int":
                args.append(int(token))
            else:
                args.append(Digest32(token))
        rec.operation = a[1]
        try:
            result = self.network.ledger.call(self.p(a[0]).address, method, *args)
        except Revert as exc:
            rec.ok, rec.reason = False, exc.reason
            return
        rec.result = _render(result.value)
        rec.execution_cost = result.execution_cost
        rec.fee = result.fee


def run(script: ScenarioScript, schedule: GasSchedule = DEFAULT_SCHEDULE) -> RunTrace:
    runner = _Runner(script, schedule)
    records: list[StepRecord] = []
    stopped_at = None
    for index, step in enumerate(script.steps):
        rec = runner.step(index, step)
        records.append(rec)
        if step.required and not rec.ok:
            stopped_at = index
            break
    ledger = runner.network.ledger
    return RunTrace(
        seed=script.seed,
        validators=script.validators,
        clock_step=script.clock_step,
        schedule=asdict(schedule),
        steps=records,
        chain=ledger.export_chain(),
        final_state=ledger.snapshot().dumps(),
        principals={name: str(p.address) for name, p in runner.principals.items()},
        stopped_at=stopped_at,
    )


# ---------------------------------------------------------------------------
# Shipped scenarios
# ---------------------------------------------------------------------------

_CANONICAL_HEADER = """\
# Owner deploys the registry, approves the user as a second admin, maps one
# device to one fog node, maps the user to that pair, and the user mints.
seed 2022
validators 4
clock-step 1
"""

_CANONICAL_BODY = """\
principal owner owner
principal user user
principal fog fog
principal device device
owner-init! owner
approve owner user
map-device owner fog device
add-user owner user device fog
mint user device fog
"""

_CALL_CYCLE = ("adminAdd", "No_ofAdmins", "users_devices user 0", "tokens_Issued")


def canonical_script() -> str:
    return _CANONICAL_HEADER + _CANONICAL_BODY


def calls_script(n_calls: int = 500) -> str:
    lines = [f"call owner {_CALL_CYCLE[i % len(_CALL_CYCLE)]}" for i in range(n_calls)]
    header = f"# Canonical flow followed by {n_calls} read-only calls cycling the four call methods.\n"
    return header + "\n".join(_CANONICAL_HEADER.splitlines()[2:]) + "\n" + _CANONICAL_BODY + "\n".join(lines) + "\n"


def linearity_script(sizes: tuple[int, ...] = (1, 2, 4, 8, 16)) -> str:
    """Fog lists of the given sizes; each size gets its own user who mints on the last device."""
    out = [
        "# Mint cost versus fog-list length. A warm-up mint first makes the token",
        "# array non-empty so every measured mint pays the same storage costs.",
        "seed 7",
        "validators 4",
        "clock-step 1",
        "principal owner owner",
        "principal wfog fog",
        "principal wdev device",
        "principal wuser user",
        "owner-init! owner",
        "map-device owner wfog wdev",
        "add-user owner wuser wdev wfog",
        "mint wuser wdev wfog",
    ]
    for k in sizes:
        out.append(f"principal fog{k} fog")
        out.append(f"principal user{k} user")
        for i in range(k):
            out.append(f"principal dev{k}_{i} device")
            out.append(f"map-device owner fog{k} dev{k}_{i}")
        out.append(f"add-user owner user{k} dev{k}_{k - 1} fog{k}")
        out.append(f"mint user{k} dev{k}_{k - 1} fog{k}")
    return "\n".join(out) + "\n"


def load_fixture(name: str) -> str:
    """Text of a scenario shipped in ``dscot/data`` (``canonical``, ``calls500``, ``linearity``)."""
    return resources.files("dscot").joinpath("data", f"{name}.dscot").read_text(encoding="utf-8")
