"""Frequency and spectrum primitives shared by every other module.

Conventions
-----------
- Frequencies are plain floats in Hz, measured as *offsets* from the comb
  reference frequency of the memory (the frequency at which the multiplexed
  comb pattern is centered).  Keeping offsets rather than absolute optical
  frequencies (~490 THz) keeps all arithmetic in the MHz-GHz range, where
  double precision is exact to well below 1 Hz.
- Line profiles are intensity densities normalized to unit area; no field
  amplitudes or phases are modeled here.
- Two offsets are considered the same frequency when they differ by less
  than ``MERGE_TOL_HZ`` (all plan frequencies are specified to 0.1 MHz, so
  1 Hz is far below any physical distinction in the model).

All types are immutable values and all functions are pure; everything here
is safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

#: Absolute tolerance (Hz) for treating two frequency offsets as equal.
MERGE_TOL_HZ = 1.0


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform frequency grid: points f_min, f_min+step, ... up to f_max."""

    f_min: float
    f_max: float
    step: float

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("grid step must be > 0")
        if not self.f_min < self.f_max:
            raise ValueError("grid requires f_min < f_max")

    @property
    def n_points(self) -> int:
        return int(math.floor((self.f_max - self.f_min) / self.step)) + 1

    def frequencies(self) -> np.ndarray:
        return self.f_min + self.step * np.arange(self.n_points)


@dataclass(frozen=True)
class LineProfile:
    """Normalized spectral line: 'lorentzian' or 'gaussian', given center and FWHM."""

    kind: Literal["lorentzian", "gaussian"]
    center: float
    fwhm: float

    def __post_init__(self):
        if self.kind not in ("lorentzian", "gaussian"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.fwhm <= 0:
            raise ValueError("profile fwhm must be > 0")


def profile_density(p: LineProfile, f):
    """Unit-area spectral density of ``p`` evaluated at offset(s) ``f`` (1/Hz).

    Symmetric about ``p.center``; accepts scalars or numpy arrays.
    """
    x = np.asarray(f, dtype=np.float64) - p.center
    if p.kind == "lorentzian":
        hw = 0.5 * p.fwhm
        out = (hw / math.pi) / (x * x + hw * hw)
    else:
        sigma = p.fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
        out = np.exp(-0.5 * (x / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
    if np.ndim(f) == 0:
        return float(out)
    return out


def tpc_mode_offsets(n_modes: int, fsr: float) -> np.ndarray:
    """Offsets of the active source comb modes: k*fsr, k symmetric around 0.

    ``n_modes`` must be odd so the modes sit symmetrically around the
    reference mode; returned sorted ascending.
    """
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    if n_modes % 2 == 0:
        raise ValueError("n_modes must be odd: modes are placed symmetrically around mode 0")
    if fsr <= 0:
        raise ValueError("fsr must be > 0")
    half = (n_modes - 1) // 2
    return fsr * np.arange(-half, half + 1, dtype=np.float64)


def merge_offsets(values, tol: float = MERGE_TOL_HZ) -> np.ndarray:
    """Sort ``values`` and collapse groups closer than ``tol`` to one representative."""
    arr = np.sort(np.asarray(values, dtype=np.float64))
    if arr.size == 0:
        return arr
    keep = np.empty(arr.size, dtype=bool)
    keep[0] = True
    keep[1:] = np.diff(arr) >= tol
    return arr[keep]


def eom_sideband_offsets(f1: float, f2: float, max_order: int) -> np.ndarray:
    """All frequencies reachable with two phase modulators driven at f1 and f2.

    Returns the merged set {i*f1 + j*f2 : |i|,|j| <= max_order}, sorted
    ascending.  With f1 equal to the source free spectral range, f2 = 5*f1
    and max_order 2, the 25 combinations cover k*f1 for k = -12..12 exactly
    once, which is how the 25 memory comb copies are laid out.
    """
    if f1 <= 0 or f2 <= 0:
        raise ValueError("modulation frequencies must be > 0")
    if max_order < 0:
        raise ValueError("max_order must be >= 0")
    orders = np.arange(-max_order, max_order + 1, dtype=np.float64)
    values = (orders[:, None] * f1 + orders[None, :] * f2).ravel()
    return merge_offsets(values)
