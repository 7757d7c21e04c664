"""Gas report and trace verification.

Metered values come from a run trace. Published totals, including the PUF-based
baseline, are constants in :data:`FIXTURES` and are never simulated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .crypto import keccak256

__all__ = [
    "FIXTURES",
    "Check",
    "GasReport",
    "PaperFixtures",
    "build_report",
    "efficiency",
    "load_trace",
    "verify_trace",
]


@dataclass(frozen=True)
class PaperFixtures:
    # gas bars for mintNFT/createToken, approve/startOwnerEngagement,
    # UserDeviceMapping/startUserEngagement
    dscot_mint: int = 122865
    dscot_approve: int = 61613
    dscot_user_device_mapping: int = 116821
    puf_create_token: int = 167263
    puf_start_owner_engagement: int = 69216
    puf_start_user_engagement: int = 69990
    # execution cost of the registry call methods
    call_costs: tuple[tuple[str, int], ...] = (
        ("adminAdd", 27856),
        ("No_ofAdmins", 26116),
        ("users_devices", 29157),
        ("tokens_Issued", 28760),
    )


FIXTURES = PaperFixtures()

# (label, trace operation, success event, fixture attr, baseline label, baseline attr)
_COMPARISONS = (
    ("mintNFT", "mint_nft", "TokenCreated", "dscot_mint", "createToken", "puf_create_token"),
    ("approve", "approve", "AdminAdded", "dscot_approve", "startOwnerEngagement", "puf_start_owner_engagement"),
    (
        "UserDeviceMapping",
        "user_device_mapping",
        "UserDeviceMappingAdded",
        "dscot_user_device_mapping",
        "startUserEngagement",
        "puf_start_user_engagement",
    ),
)

USER_MAPPING_NOTE = (
    "DSCoT maps the user together with the fog/device pair in one call, "
    "while startUserEngagement engages the user only"
)


def efficiency(dscot: int, baseline: int) -> float:
    """Saving of ``dscot`` relative to ``baseline`` as a percentage."""
    return 100.0 * (1.0 - dscot / baseline)


def load_trace(text: str) -> dict[str, Any]:
    data = json.loads(text)
    if not isinstance(data, dict) or not isinstance(data.get("steps"), list):
        raise ValueError("not a run trace: missing 'steps'")
    for step in data["steps"]:
        if not isinstance(step, dict) or "directive" not in step:
            raise ValueError("not a run trace: malformed step record")
    return data


def _first_success(trace: dict[str, Any], operation: str, event: str) -> int | None:
    for step in trace["steps"]:
        if step.get("operation") == operation and any(e["event"] == event for e in step["events"]):
            return step["gas_used"]
    return None


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class ReportRow:
    function: str
    metered: int | None
    fixture: int
    baseline_function: str
    baseline_fixture: int
    efficiency_pct: float
    note: str = ""

    @property
    def banner(self) -> str:
        return f"≈{round(self.efficiency_pct):d}%"


@dataclass
class GasReport:
    rows: list[ReportRow]
    call_rows: list[tuple[str, int | None, int]]
    ordering: dict[str, bool] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "comparisons": [
                {
                    "function": r.function,
                    "metered": r.metered,
                    "fixture": r.fixture,
                    "baseline_function": r.baseline_function,
                    "baseline_fixture": r.baseline_fixture,
                    "efficiency_pct": round(r.efficiency_pct, 1),
                    "banner": r.banner,
                    "note": r.note,
                }
                for r in self.rows
            ],
            "calls": [{"call": c, "metered_execution_cost": m, "fixture": f, "fee": 0} for c, m, f in self.call_rows],
            "ordering": self.ordering,
        }

    def render_text(self) -> str:
        lines = [
            "DSCoT vs PUF-based NFT gas (fixture = published total, metered = this simulator)",
            f"{'function':<18} {'metered':>9} {'fixture':>9}  {'baseline':<21} {'fixture':>9} {'saving':>8}",
        ]
        for r in self.rows:
            metered = "-" if r.metered is None else str(r.metered)
            lines.append(
                f"{r.function:<18} {metered:>9} {r.fixture:>9}  {r.baseline_function:<21} "
                f"{r.baseline_fixture:>9} {r.efficiency_pct:>7.1f}%  ({r.banner})"
            )
            if r.note:
                lines.append(f"  note: {r.note}")
        lines.append("")
        lines.append(f"{'call':<18} {'metered':>9} {'fixture':>9} {'fee':>5}")
        for call, metered, fixture in self.call_rows:
            lines.append(f"{call:<18} {'-' if metered is None else metered:>9} {fixture:>9} {0:>5}")
        if self.ordering:
            lines.append("")
            for name, ok in self.ordering.items():
                lines.append(f"ordering {name}: {'yes' if ok else 'no'}")
        return "\n".join(lines) + "\n"

    def render_csv(self) -> str:
        lines = ["function,metered,fixture,baseline_function,baseline_fixture,efficiency_pct"]
        for r in self.rows:
            metered = "" if r.metered is None else r.metered
            lines.append(
                f"{r.function},{metered},{r.fixture},{r.baseline_function},{r.baseline_fixture},{r.efficiency_pct:.1f}"
            )
        return "\n".join(lines) + "\n"


def build_report(trace: dict[str, Any] | None = None, fixtures: PaperFixtures = FIXTURES) -> GasReport:
    """Percentages always come from the fixtures; the trace only fills the metered column."""
    rows = []
    for label, op, event, attr, base_label, base_attr in _COMPARISONS:
        dscot, base = getattr(fixtures, attr), getattr(fixtures, base_attr)
        note = USER_MAPPING_NOTE if dscot > base else ""
        metered = _first_success(trace, op, event) if trace else None
        rows.append(ReportRow(label, metered, dscot, base_label, base, efficiency(dscot, base), note))

    call_rows = []
    for call, cost in fixtures.call_costs:
        metered = None
        if trace:
            metered = next(
                (s["execution_cost"] for s in trace["steps"] if s.get("operation") == call and s["ok"]), None
            )
        call_rows.append((call, metered, cost))

    ordering = {}
    mint, approve, udm = (r.metered for r in rows)
    if None not in (mint, udm, approve):
        ordering["mint > UserDeviceMapping"] = mint > udm
        ordering["UserDeviceMapping > approve"] = udm > approve
    return GasReport(rows, call_rows, ordering)


# ---------------------------------------------------------------------------
# Verify
# ---------------------------------------------------------------------------

ORDER_MARGIN = 0.05
LINEARITY_TOLERANCE = 0.01


@dataclass(frozen=True)
class Check:
    name: str
    verdict: str  # "pass" | "fail" | "skip"
    detail: str

    def line(self) -> str:
        return f"{self.verdict.upper():<4} {self.name}: {self.detail}"


def _check_ordering(trace: dict[str, Any]) -> Check:
    mint = _first_success(trace, "mint_nft", "TokenCreated")
    udm = _first_success(trace, "user_device_mapping", "UserDeviceMappingAdded")
    approve = _first_success(trace, "approve", "AdminAdded")
    if None in (mint, udm, approve):
        return Check("ordering", "skip", "trace lacks a successful mint, user mapping or approve")
    ok = mint > udm * (1 + ORDER_MARGIN) and udm > approve * (1 + ORDER_MARGIN)
    detail = f"mint {mint} > UserDeviceMapping {udm} > approve {approve} (each by >{ORDER_MARGIN:.0%})"
    return Check("ordering", "pass" if ok else "fail", detail)


def _check_zero_fee(trace: dict[str, Any]) -> Check:
    calls = [s for s in trace["steps"] if s["directive"] == "call" and s["ok"]]
    if not calls:
        return Check("zero-fee-calls", "skip", "no read-only calls in trace")
    total = sum(s["fee"] for s in calls)
    positive = all(s["execution_cost"] > 0 for s in calls)
    ok = total == 0 and positive
    return Check(
        "zero-fee-calls",
        "pass" if ok else "fail",
        f"{len(calls)} calls, total fee {total}, all execution costs positive: {positive}",
    )


def mint_scan_points(trace: dict[str, Any]) -> list[tuple[int, int]]:
    """(list elements scanned, gas) for each user's first mint, excluding the chain's first token.

    Mapping lists are rebuilt from the event stream, so this is a pure
    function of the trace.
    """
    fogs: dict[str, list[str]] = {}
    users: dict[str, list[tuple[str, str]]] = {}
    minted: set[str] = set()
    any_token = False
    points = []
    for step in trace["steps"]:
        for ev in step["events"]:
            name = ev["event"]
            if name == "FogDeviceMappingAdded":
                fogs.setdefault(ev["fog"], []).append(ev["device"])
            elif name == "FogDeviceAllMappingDeleted":
                fogs.pop(ev["fog"], None)
            elif name == "UserDeviceMappingAdded":
                users.setdefault(ev["user"], []).append((ev["fog"], ev["device"]))
            elif name == "UserDeviceAllMappingDeleted":
                users.pop(ev["user"], None)
            elif name == "TokenCreated":
                user = ev["User"]
                if any_token and user not in minted:
                    fog_pos = fogs[ev["fog"]].index(ev["device"]) + 1
                    pair_pos = users[user].index((ev["fog"], ev["device"])) + 1
                    points.append((fog_pos + pair_pos, step["gas_used"]))
                minted.add(user)
                any_token = True
    return points


def affine_fit(xs: list[float], ys: list[float]) -> tuple[float, float, float]:
    """Least-squares ``y = a + b x``; returns (a, b, max relative residual)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    design = np.column_stack([np.ones_like(x), x])
    (a, b), *_ = np.linalg.lstsq(design, y, rcond=None)
    rel = np.abs(y - (a + b * x)) / np.abs(y)
    return float(a), float(b), float(rel.max())


def _check_linearity(trace: dict[str, Any]) -> Check:
    points = mint_scan_points(trace)
    if len({x for x, _ in points}) < 3:
        return Check("linearity", "skip", "fewer than three distinct fog-list sizes minted")
    a, b, resid = affine_fit([x for x, _ in points], [y for _, y in points])
    ok = resid < LINEARITY_TOLERANCE
    return Check(
        "linearity",
        "pass" if ok else "fail",
        f"{len(points)} mints, gas ~ {a:.1f} + {b:.1f}*scanned, max relative residual {resid:.2e}",
    )


def _check_digest(trace: dict[str, Any]) -> Check:
    stored = trace.get("digest")
    if stored is None:
        return Check("determinism-digest", "skip", "trace carries no digest")
    body = {k: v for k, v in trace.items() if k != "digest"}
    recomputed = str(keccak256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()))
    ok = recomputed == stored
    return Check("determinism-digest", "pass" if ok else "fail", f"stored {stored[:18]}… recomputed {recomputed[:18]}…")


def _check_receipts(trace: dict[str, Any]) -> Check:
    chain_txs = {h for line in trace.get("chain", []) for h in json.loads(line)["tx_hashes"]}
    tx_steps = [s for s in trace["steps"] if s.get("tx_hash")]
    missing = [s["index"] for s in tx_steps if s["tx_hash"] not in chain_txs]
    ok = not missing
    detail = f"{len(tx_steps)} transactions, all in chain" if ok else f"steps not on chain: {missing}"
    return Check("receipts-on-chain", "pass" if ok else "fail", detail)


def verify_trace(trace: dict[str, Any]) -> list[Check]:
    return [
        _check_ordering(trace),
        _check_zero_fee(trace),
        _check_linearity(trace),
        _check_digest(trace),
        _check_receipts(trace),
    ]
