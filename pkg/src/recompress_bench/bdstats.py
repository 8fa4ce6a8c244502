"""Bjontegaard rate-distortion comparison and paired significance tests.

bd_rate integrates the horizontal gap between two fitted rate-quality
curves in log-rate space and reports the average bitrate change of the test
codec against the anchor, in percent (negative: the test codec needs fewer
bits for the same quality).  bd_quality integrates the vertical gap at
matched rate.  The default fit is a cubic polynomial per curve; a monotone
piecewise-cubic (PCHIP) variant is selectable for curves where the cubic
oscillates.

Metrics where lower is better (LPIPS-style) are handled by orientation
flags on the curves: fitting happens on negated quality so "better" always
points the same way, and bd_quality is reported in those oriented units
(positive means the test codec wins).

The paired two-sided t-test matches the textbook definition.  The Student-t
tail probability is evaluated through a regularized incomplete beta
function implemented here with Lentz's continued fraction, so the package
does not lean on scipy for its own p-values.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

FIT_METHODS = ("cubic", "pchip")


@dataclass(frozen=True)
class RdCurve:
    """A rate-distortion curve: (bpp, quality) points at increasing rate.

    Needs at least four points for a stable cubic fit.  bpp must be strictly
    increasing; quality that fails to improve monotonically with rate is
    suspicious but legal, and only triggers a warning.
    """

    points: tuple[tuple[float, float], ...]
    higher_is_better: bool = True
    metric: str = ""

    def __post_init__(self) -> None:
        pts = tuple((float(b), float(q)) for b, q in self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 4:
            raise ValueError(f"rate-distortion curve needs at least 4 points, got {len(pts)}")
        bpps = [b for b, _ in pts]
        if any(b <= 0 for b in bpps):
            raise ValueError("bpp values must be positive")
        if any(b1 >= b2 for b1, b2 in zip(bpps, bpps[1:])):
            raise ValueError("bpp values must be strictly increasing")
        oriented = self.oriented_quality()
        if any(q1 > q2 for q1, q2 in zip(oriented, oriented[1:])):
            warnings.warn(
                "quality does not improve monotonically with rate", stacklevel=3
            )

    def bpp(self) -> np.ndarray:
        return np.array([b for b, _ in self.points])

    def quality(self) -> np.ndarray:
        return np.array([q for _, q in self.points])

    def oriented_quality(self) -> np.ndarray:
        q = self.quality()
        return q if self.higher_is_better else -q


def _check_comparable(anchor: RdCurve, test: RdCurve) -> None:
    if anchor.higher_is_better != test.higher_is_better:
        raise ValueError("curves disagree on metric orientation")


def _fit(x: np.ndarray, y: np.ndarray, method: str):
    """Return (integrand antiderivative evaluated at a point) callable."""
    if method not in FIT_METHODS:
        raise ValueError(f"unknown fit method {method!r}, expected one of {FIT_METHODS}")
    order = np.argsort(x)
    xs, ys = x[order], y[order]
    if np.any(np.diff(xs) == 0):
        raise ValueError("curve has duplicate quality values, fit is ill-posed")
    if method == "cubic":
        poly = np.polyint(np.polyfit(xs, ys, 3))
        return lambda t: np.polyval(poly, t)
    anti = PchipInterpolator(xs, ys).antiderivative()
    return lambda t: float(anti(t))


def _avg_gap(
    x_anchor: np.ndarray, y_anchor: np.ndarray,
    x_test: np.ndarray, y_test: np.ndarray, method: str,
) -> float:
    lo = max(x_anchor.min(), x_test.min())
    hi = min(x_anchor.max(), x_test.max())
    if hi <= lo:
        raise ValueError("curves do not overlap, nothing to integrate")
    f_anchor = _fit(x_anchor, y_anchor, method)
    f_test = _fit(x_test, y_test, method)
    int_anchor = f_anchor(hi) - f_anchor(lo)
    int_test = f_test(hi) - f_test(lo)
    return (int_test - int_anchor) / (hi - lo)


def bd_rate(anchor: RdCurve, test: RdCurve, method: str = "cubic") -> float:
    """Average bitrate difference of ``test`` against ``anchor``, percent."""
    _check_comparable(anchor, test)
    avg = _avg_gap(
        anchor.oriented_quality(), np.log10(anchor.bpp()),
        test.oriented_quality(), np.log10(test.bpp()), method,
    )
    return (10.0 ** avg - 1.0) * 100.0


def bd_quality(anchor: RdCurve, test: RdCurve, method: str = "cubic") -> float:
    """Average quality difference at matched rate, in oriented metric units
    (positive: test better), the axes-swapped dual of :func:`bd_rate`."""
    _check_comparable(anchor, test)
    return _avg_gap(
        np.log10(anchor.bpp()), anchor.oriented_quality(),
        np.log10(test.bpp()), test.oriented_quality(), method,
    )


# ---------------------------------------------------------------------------
# paired statistics


@dataclass(frozen=True)
class PairedSample:
    """Aligned per-item scores for two systems under comparison."""

    ids: tuple[str, ...]
    a: tuple[float, ...]
    b: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        if not (len(self.ids) == len(self.a) == len(self.b)):
            raise ValueError("ids and value arrays must have equal length")
        if len(self.a) < 2:
            raise ValueError("paired test needs at least 2 observations")


class TTestResult(NamedTuple):
    t: float
    p: float


def _lentz_betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta, modified Lentz iteration."""
    max_iter = 300
    eps = 3e-16
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise ArithmeticError("incomplete beta continued fraction failed to converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _lentz_betacf(a, b, x) / a
    return 1.0 - front * _lentz_betacf(b, a, 1.0 - x) / b


def paired_t_test(sample: PairedSample) -> TTestResult:
    """Two-sided paired Student t-test on ``a - b``.

    Degenerate samples follow the limiting behaviour: all-zero differences
    give (t=0, p=1); zero spread around a nonzero mean gives (t=+-inf, p=0).
    """
    d = np.asarray(sample.a) - np.asarray(sample.b)
    n = d.size
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0)
        return TTestResult(math.copysign(math.inf, mean), 0.0)
    t = mean / (sd / math.sqrt(n))
    dof = n - 1
    p = regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t))
    return TTestResult(t, min(max(p, 0.0), 1.0))


@dataclass(frozen=True)
class Summary:
    """Mean with sample standard deviation; degenerate marks n == 1."""

    mean: float
    sd: float
    n: int
    degenerate: bool = False

    def __str__(self) -> str:
        return f"{self.mean:.4f} ± {self.sd:.4f} (n={self.n})"


def summarize(values: Sequence[float]) -> Summary:
    vals = np.asarray(list(values), dtype=np.float64)
    if vals.size == 0:
        raise ValueError("cannot summarize an empty sequence")
    if vals.size == 1:
        return Summary(float(vals[0]), 0.0, 1, degenerate=True)
    return Summary(float(vals.mean()), float(vals.std(ddof=1)), int(vals.size))
