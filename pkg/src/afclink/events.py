"""Photon event records and the array-backed stream type used by the pipeline.

A photon occurrence anywhere in the link (source output, fiber, converter,
memory input, detector) is described by a time in seconds, a frequency
offset in Hz relative to the memory comb reference, which detection arm it
belongs to, and where it originated.  Small streams are convenient as lists
of ``PhotonEvent``; the simulation engine works on ``EventBatch``, a
struct-of-arrays view of the same data, so every stream transform is a pure
numpy operation.  All operations in this package leave their inputs
untouched and return new batches, so batches can be shared freely between
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

ARM_HERALD = 0
ARM_SIGNAL = 1

ORIGIN_PAIR = 0
ORIGIN_CONVERSION_NOISE = 1
ORIGIN_DARK_COUNT = 2

ARM_NAMES = {ARM_HERALD: "herald", ARM_SIGNAL: "signal"}
ORIGIN_NAMES = {
    ORIGIN_PAIR: "pair",
    ORIGIN_CONVERSION_NOISE: "conversion_noise",
    ORIGIN_DARK_COUNT: "dark_count",
}
_ARM_CODES = {v: k for k, v in ARM_NAMES.items()}
_ORIGIN_CODES = {v: k for k, v in ORIGIN_NAMES.items()}

NO_PAIR = -1


@dataclass(frozen=True)
class PhotonEvent:
    """One timestamped, frequency-tagged photon occurrence."""

    time: float
    mode_offset: float
    arm: str
    origin: str
    pair_id: Optional[int] = None

    def __post_init__(self):
        if self.time < 0 or not np.isfinite(self.time):
            raise ValueError(f"event time must be finite and >= 0, got {self.time}")
        if self.arm not in _ARM_CODES:
            raise ValueError(f"unknown arm {self.arm!r}")
        if self.origin not in _ORIGIN_CODES:
            raise ValueError(f"unknown origin {self.origin!r}")


@dataclass
class EventBatch:
    """Struct-of-arrays photon stream; the pipeline's working representation."""

    time: np.ndarray
    mode_offset: np.ndarray
    arm: np.ndarray
    origin: np.ndarray
    pair_id: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=np.float64)
        self.mode_offset = np.asarray(self.mode_offset, dtype=np.float64)
        self.arm = np.asarray(self.arm, dtype=np.uint8)
        self.origin = np.asarray(self.origin, dtype=np.uint8)
        if self.pair_id is None:
            self.pair_id = np.full(self.time.shape, NO_PAIR, dtype=np.int64)
        else:
            self.pair_id = np.asarray(self.pair_id, dtype=np.int64)
        n = len(self.time)
        for name in ("mode_offset", "arm", "origin", "pair_id"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"field {name} length mismatch")

    def __len__(self) -> int:
        return len(self.time)

    @staticmethod
    def empty() -> "EventBatch":
        z = np.empty(0)
        return EventBatch(z, z, z, z, z)

    def select(self, mask: np.ndarray) -> "EventBatch":
        return EventBatch(
            self.time[mask],
            self.mode_offset[mask],
            self.arm[mask],
            self.origin[mask],
            self.pair_id[mask],
        )

    def sorted_by_time(self) -> "EventBatch":
        order = np.argsort(self.time, kind="stable")
        return self.select(order)

    @staticmethod
    def concatenate(batches: list["EventBatch"]) -> "EventBatch":
        batches = [b for b in batches if len(b)]
        if not batches:
            return EventBatch.empty()
        return EventBatch(
            np.concatenate([b.time for b in batches]),
            np.concatenate([b.mode_offset for b in batches]),
            np.concatenate([b.arm for b in batches]),
            np.concatenate([b.origin for b in batches]),
            np.concatenate([b.pair_id for b in batches]),
        )

    def to_events(self) -> list[PhotonEvent]:
        return [
            PhotonEvent(
                time=float(self.time[i]),
                mode_offset=float(self.mode_offset[i]),
                arm=ARM_NAMES[int(self.arm[i])],
                origin=ORIGIN_NAMES[int(self.origin[i])],
                pair_id=None if self.pair_id[i] == NO_PAIR else int(self.pair_id[i]),
            )
            for i in range(len(self))
        ]

    @staticmethod
    def from_events(events: list[PhotonEvent]) -> "EventBatch":
        return EventBatch(
            np.array([e.time for e in events], dtype=np.float64),
            np.array([e.mode_offset for e in events], dtype=np.float64),
            np.array([_ARM_CODES[e.arm] for e in events], dtype=np.uint8),
            np.array([_ORIGIN_CODES[e.origin] for e in events], dtype=np.uint8),
            np.array(
                [NO_PAIR if e.pair_id is None else e.pair_id for e in events],
                dtype=np.int64,
            ),
        )

    def __iter__(self) -> Iterator[PhotonEvent]:
        return iter(self.to_events())
