"""Photon-pair source: Poissonian pair emission on a comb of frequency modes.

Pairs are created at Poisson times with a total rate across all active
modes; each pair lands on one mode (both members share the mode offset and a
pair id).  The temporal correlation between the two members follows a
two-sided exponential whose decay constant is set by the source linewidth:

    tau_c = 1 / (2 * pi * linewidth)

which is the coincidence profile of a Lorentzian line.  ``sample_pairs``
emits both members at the creation time; ``apply_pair_correlation`` then
shifts the signal member by a double-exponential draw, leaving the herald
untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .events import ARM_HERALD, ARM_SIGNAL, ORIGIN_PAIR, EventBatch
from .spectral import tpc_mode_offsets


@dataclass(frozen=True)
class SourceConfig:
    """Pair source settings.

    ``total_pair_rate`` is pairs/s summed over all active modes; the mode
    weights default to uniform.  Modes outside the conversion band never
    reach the memory and are not generated.
    """

    total_pair_rate: float
    n_modes: int = 25
    fsr: float = 117.2e6
    linewidth: float = 7.1e6
    mode_weights: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.total_pair_rate < 0:
            raise ValueError("total_pair_rate must be >= 0")
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.linewidth <= 0:
            raise ValueError("linewidth must be > 0")
        if self.mode_weights is not None:
            w = np.asarray(self.mode_weights, dtype=np.float64)
            if len(w) != self.n_modes:
                raise ValueError("mode_weights length must equal n_modes")
            if np.any(w < 0):
                raise ValueError("mode_weights must be nonnegative")
            if not math.isclose(float(w.sum()), 1.0, rel_tol=0, abs_tol=1e-9):
                raise ValueError("mode_weights must sum to 1")

    @property
    def coherence_time(self) -> float:
        """Pair correlation decay constant tau_c (s)."""
        return 1.0 / (2.0 * math.pi * self.linewidth)

    def weights(self) -> np.ndarray:
        if self.mode_weights is None:
            return np.full(self.n_modes, 1.0 / self.n_modes)
        return np.asarray(self.mode_weights, dtype=np.float64)

    def mode_offsets(self) -> np.ndarray:
        return tpc_mode_offsets(self.n_modes, self.fsr)


def sample_pairs(
    cfg: SourceConfig,
    window: tuple[float, float],
    rng: np.random.Generator,
    first_pair_id: int = 0,
) -> EventBatch:
    """Draw pair events on ``window``: a Poisson process in time, a weighted
    categorical draw over modes.  Both members carry the creation time (the
    correlation jitter is a separate step); the batch is time-sorted with
    herald before signal at equal times."""
    t0, t1 = window
    if not t1 > t0:
        raise ValueError("window must satisfy t1 > t0")
    n = rng.poisson(cfg.total_pair_rate * (t1 - t0))
    if n == 0:
        return EventBatch.empty()
    times = np.sort(rng.uniform(t0, t1, size=n))
    modes = cfg.mode_offsets()[rng.choice(cfg.n_modes, size=n, p=cfg.weights())]
    pair_ids = first_pair_id + np.arange(n, dtype=np.int64)

    both_times = np.repeat(times, 2)
    both_modes = np.repeat(modes, 2)
    both_ids = np.repeat(pair_ids, 2)
    arms = np.tile(np.array([ARM_HERALD, ARM_SIGNAL], dtype=np.uint8), n)
    origins = np.full(2 * n, ORIGIN_PAIR, dtype=np.uint8)
    return EventBatch(both_times, both_modes, arms, origins, both_ids)


def apply_pair_correlation(
    pairs: EventBatch,
    linewidth: float,
    rng: np.random.Generator,
) -> EventBatch:
    """Offset each signal member from its herald by a double-exponential draw
    with decay constant tau_c = 1/(2 pi linewidth); heralds are unchanged."""
    if linewidth <= 0:
        raise ValueError("linewidth must be > 0")
    tau_c = 1.0 / (2.0 * math.pi * linewidth)
    out = EventBatch(
        pairs.time.copy(), pairs.mode_offset, pairs.arm, pairs.origin, pairs.pair_id
    )
    signal = pairs.arm == ARM_SIGNAL
    n_sig = int(signal.sum())
    if n_sig:
        out.time[signal] = out.time[signal] + rng.laplace(0.0, tau_c, size=n_sig)
    return out.sorted_by_time()
