"""Resolve quantizer settings from bitrate targets.

The solver treats the encoder as a black box ``(image, qp) -> bits`` and
looks for the qp whose achieved bits-per-pixel is closest to the target,
breaking ties toward the lower qp (higher rate, lower distortion).  For a
rate-monotone encoder the result is guaranteed to match an exhaustive scan
of every qp while spending at most 12 encoder invocations; plateaus (runs
of qp with identical bits) are resolved to their lowest qp.

bpp is always measured against the original, pre-padding pixel count.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

from .pixelcore import PlanarImage

PROBE_BUDGET = 12


class SolveStatus(enum.Enum):
    MATCHED = "matched"
    BEST_EFFORT_AT_BOUND = "best_effort_at_bound"


@dataclass(frozen=True)
class RateSolveResult:
    """Outcome of one rate solve.

    ``status`` is MATCHED when the achieved bpp sits within the relative
    tolerance of the target; everything else (target below the encoder's
    floor, above its ceiling, or falling in a gap between adjacent qp rates)
    reports BEST_EFFORT_AT_BOUND with the closest achievable point.
    """

    qp: int
    achieved_bpp: float
    target_bpp: float
    tolerance: float
    probes: int
    status: SolveStatus

    @property
    def within_tolerance(self) -> bool:
        return abs(self.achieved_bpp - self.target_bpp) <= self.tolerance * self.target_bpp


def measured_bpp_feedback(bits: int, width: int, height: int) -> float:
    """Turn a measured bit count into bits per pixel of a WxH image."""
    if width <= 0 or height <= 0:
        raise ValueError("dimensions must be positive")
    if bits < 0:
        raise ValueError("bit count must be non-negative")
    return bits / (width * height)


class _Prober:
    """Memoized encoder front end that counts real invocations."""

    def __init__(self, img: PlanarImage, encoder: Callable[[PlanarImage, int], int]):
        self._img = img
        self._encoder = encoder
        self._area = img.luma_area
        self._cache: dict[int, float] = {}
        self.probes = 0

    def bpp(self, qp: int) -> float:
        if qp not in self._cache:
            self.probes += 1
            bits = self._encoder(self._img, qp)
            if bits < 0:
                raise ValueError(f"encoder returned negative bit count at qp {qp}")
            self._cache[qp] = bits / self._area
        return self._cache[qp]

    def probed(self) -> dict[int, float]:
        return dict(self._cache)


def solve_qp(
    img: PlanarImage,
    encoder: Callable[[PlanarImage, int], int],
    target_bpp: float,
    tolerance: float = 0.05,
    *,
    qp_range: tuple[int, int] = (0, 51),
    monotone: bool = True,
) -> RateSolveResult:
    """Find the qp whose achieved bpp is closest to ``target_bpp``.

    ``encoder`` maps (image, qp) to a bit count.  With ``monotone=True``
    (rate non-increasing in qp) the solver binary-searches and equals a full
    scan; with ``monotone=False`` it falls back to a golden-ratio bracket
    plus a local sweep, which finds the best point of any quasi-monotone
    rate curve.  At most 12 encoder calls are made either way.
    """
    lo, hi = qp_range
    if not (isinstance(lo, int) and isinstance(hi, int)) or lo > hi:
        raise ValueError(f"invalid qp range {qp_range}")
    if target_bpp <= 0:
        raise ValueError("target bpp must be positive")
    if tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    prober = _Prober(img, encoder)
    if monotone:
        qp = _solve_monotone(prober, target_bpp, lo, hi)
    else:
        qp = _solve_bracketed(prober, target_bpp, lo, hi)
    achieved = prober.bpp(qp)
    within = abs(achieved - target_bpp) <= tolerance * target_bpp
    status = SolveStatus.MATCHED if within else SolveStatus.BEST_EFFORT_AT_BOUND
    return RateSolveResult(qp, achieved, target_bpp, tolerance, prober.probes, status)


def _solve_monotone(prober: _Prober, target: float, lo: int, hi: int) -> int:
    bpp = prober.bpp
    if bpp(hi) > target:
        # below the rate floor: nothing achieves the target, report the bound
        return hi
    # First qp whose bpp <= target.  lo - 1 acts as a sentinel with bpp
    # above any target, so bpp(lo) is only probed if the search needs it.
    a, b = lo - 1, hi
    while b - a > 1:
        m = (a + b) // 2
        if bpp(m) <= target:
            b = m
        else:
            a = m
    first = b
    if first == lo:
        return lo
    # bpp(first - 1) > target >= bpp(first); pick the closer, ties downward
    below, above = bpp(first), bpp(first - 1)
    if target - below < above - target:
        # bpp(first - 1) > bpp(first), so first starts its own plateau
        return first
    # walk the winning plateau to its lowest qp
    return _plateau_left_edge(prober, first - 1, lo)


def _plateau_left_edge(prober: _Prober, qp: int, lo: int) -> int:
    """Lowest q with bpp(q) == bpp(qp), reusing already-probed points."""
    value = prober.bpp(qp)
    a, b = lo - 1, qp
    for q, v in prober.probed().items():
        if q >= b:
            continue
        if v > value:
            a = max(a, q)
        else:
            b = q
    while b - a > 1:
        m = (a + b) // 2
        if prober.bpp(m) <= value:
            b = m
        else:
            a = m
    return b


def _solve_bracketed(prober: _Prober, target: float, lo: int, hi: int) -> int:
    def dist(q: int) -> float:
        return abs(prober.bpp(q) - target)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    while b - a > 2 and prober.probes < PROBE_BUDGET - 3:
        off = max(1, round((b - a) * (1.0 - invphi)))
        c, d = a + off, b - off
        if c >= d:
            c, d = a + 1, b - 1
        if dist(c) <= dist(d):
            b = d
        else:
            a = c
    probed = prober.probed()
    center = (lo + hi) // 2
    if probed:
        center = min(probed, key=lambda q: (abs(probed[q] - target), q))
    for q in (center - 1, center, center + 1):
        if lo <= q <= hi and prober.probes < PROBE_BUDGET:
            prober.bpp(q)
    probed = prober.probed()
    return min(probed, key=lambda q: (abs(probed[q] - target), q))
