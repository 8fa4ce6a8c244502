"""Differentiable stand-in for the hard reference codec.

The hard codec's only non-differentiable stage is coefficient rounding.
The proxy swaps it for the smooth periodic surrogate

    s(x) = x - sin(2*pi*x) / (2*pi)

which agrees with round-half-away-from-zero exactly at integers and has
derivative d(x) = 1 - cos(2*pi*x), zero on the integer grid.  Everything
else (block split, DCT, scaling) is linear, so a backward pass is one
transform round trip with an elementwise d factor in the middle; the tape
records coefficients, step, and d factors to make that replayable.

Rate targets are resolved against the hard codec, never against the proxy:
a TargetBpp condition runs rate control on real encodes, then freezes its
resolved qp for the differentiable path.  The proxy forward output is left
unclamped so its Jacobian is exact everywhere; straight-through composition
swaps in the clamped hard decode for the forward value while keeping the
proxy tape for gradients.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import ratecontrol, refcodec
from .pixelcore import Colorspace, PlanarImage
from .refcodec import blockify, dct2, deblockify, idct2, qp_step

TWO_PI = 2.0 * np.pi


class CodecId(enum.Enum):
    REFCODEC = "refcodec"
    X264 = "x264"
    X265 = "x265"
    VVENC = "vvenc"


class RateMode(enum.Enum):
    TARGET_BPP = "target_bpp"
    FIXED_QP = "fixed_qp"
    CRF = "crf"


@dataclass(frozen=True)
class CodecCondition:
    """Which codec to mimic and how its rate is pinned down.

    Exactly one of ``bpp``, ``qp``, ``crf`` is set, matching ``mode``.
    Instances are immutable; measured-rate feedback produces a new
    TargetBpp condition rather than mutating a CRF one.
    """

    codec_id: CodecId
    mode: RateMode
    bpp: float | None = None
    qp: int | None = None
    crf: int | None = None

    def __post_init__(self) -> None:
        active = {
            RateMode.TARGET_BPP: self.bpp,
            RateMode.FIXED_QP: self.qp,
            RateMode.CRF: self.crf,
        }[self.mode]
        others = [v for k, v in (
            (RateMode.TARGET_BPP, self.bpp),
            (RateMode.FIXED_QP, self.qp),
            (RateMode.CRF, self.crf),
        ) if k is not self.mode]
        if active is None or any(v is not None for v in others):
            raise ValueError(f"exactly the {self.mode.value} field must be set")
        if self.mode is RateMode.TARGET_BPP and self.bpp <= 0:
            raise ValueError("target bpp must be positive")
        if self.mode is RateMode.FIXED_QP and not (
            refcodec.QP_MIN <= self.qp <= refcodec.QP_MAX
        ):
            raise ValueError(f"qp must be in [{refcodec.QP_MIN}, {refcodec.QP_MAX}]")

    @classmethod
    def target_bpp(cls, codec_id: CodecId, bpp: float) -> "CodecCondition":
        return cls(codec_id, RateMode.TARGET_BPP, bpp=bpp)

    @classmethod
    def fixed_qp(cls, codec_id: CodecId, qp: int) -> "CodecCondition":
        return cls(codec_id, RateMode.FIXED_QP, qp=qp)

    @classmethod
    def crf_mode(cls, codec_id: CodecId, crf: int) -> "CodecCondition":
        return cls(codec_id, RateMode.CRF, crf=crf)

    def condition_string(self) -> str:
        """Canonical description with literal braces around each field."""
        name = self.codec_id.value
        if self.mode is RateMode.TARGET_BPP:
            return f"A {{{name}}} {{{self.bpp:g}}} bpp compressed image."
        if self.mode is RateMode.FIXED_QP:
            return f"A {{{name}}} {{qp {self.qp}}} compressed image."
        return f"A {{{name}}} {{crf {self.crf}}} compressed image."

    def with_measured_bpp(self, bpp: float) -> "CodecCondition":
        """Rewritten as a TargetBpp condition carrying a measured rate."""
        return CodecCondition.target_bpp(self.codec_id, bpp)


class ComposeMode(enum.Enum):
    NO_STE = "noste"
    STE = "ste"


@dataclass(frozen=True)
class GradientTape:
    """Everything needed to replay one proxy forward pass and its Jacobian.

    ``coefficients`` are the raw (unquantized) DCT coefficients per plane in
    block form, ``dfactors`` the matching 1 - cos(2*pi*c/step) terms.
    """

    step: float
    coefficients: tuple[np.ndarray, ...]
    dfactors: tuple[np.ndarray, ...]
    plane_shapes: tuple[tuple[int, int], ...]

    def replay(self) -> tuple[np.ndarray, ...]:
        """Recompute the forward output planes from the taped coefficients."""
        out = []
        for coeff, (h, w) in zip(self.coefficients, self.plane_shapes):
            soft = _soft_round(coeff / self.step) * self.step
            out.append(deblockify(idct2(soft), h, w) + 0.5)
        return tuple(out)


@dataclass(frozen=True)
class ProxyOutput:
    """Forward result plus the rate bookkeeping that came with it.

    ``achieved_bpp`` always reports the paired hard encode at
    ``resolved_qp``, not a proxy estimate.  ``image`` is unclamped in pure
    proxy mode and the exact hard decode under straight-through composition.
    """

    image: PlanarImage
    resolved_qp: int
    achieved_bpp: float
    tape: GradientTape


def _soft_round(x: np.ndarray) -> np.ndarray:
    return x - np.sin(TWO_PI * x) / TWO_PI


def _require_refcodec(cond: CodecCondition) -> None:
    if cond.codec_id is not CodecId.REFCODEC:
        raise ValueError(
            f"the differentiable proxy models the reference codec only, "
            f"got {cond.codec_id.value}"
        )
    if cond.mode is RateMode.CRF:
        raise ValueError("the reference codec has no crf mode")


def _resolve(img: PlanarImage, cond: CodecCondition, tolerance: float) -> tuple[int, float]:
    if cond.mode is RateMode.TARGET_BPP:
        res = ratecontrol.solve_qp(
            img, refcodec.encoded_bits, cond.bpp, tolerance
        )
        return res.qp, res.achieved_bpp
    bits = refcodec.encoded_bits(img, cond.qp)
    return cond.qp, bits / img.luma_area


def proxy_forward(
    img: PlanarImage, cond: CodecCondition, tolerance: float = 0.05
) -> ProxyOutput:
    """Differentiable encode-decode round trip at the condition's rate."""
    if img.colorspace is not Colorspace.YCBCR420:
        raise ValueError("proxy expects a YCbCr 4:2:0 image")
    _require_refcodec(cond)
    qp, achieved = _resolve(img, cond, tolerance)
    step = qp_step(qp)
    planes, coeffs, dfactors, shapes = [], [], [], []
    for plane in img.planes:
        c = dct2(blockify(plane - 0.5))
        t = c / step
        soft = _soft_round(t) * step
        h, w = plane.shape
        planes.append(deblockify(idct2(soft), h, w) + 0.5)
        coeffs.append(c)
        dfactors.append(1.0 - np.cos(TWO_PI * t))
        shapes.append((h, w))
    tape = GradientTape(step, tuple(coeffs), tuple(dfactors), tuple(shapes))
    return ProxyOutput(img.with_planes(planes), qp, achieved, tape)


def proxy_gradient(tape: GradientTape, upstream) -> list[np.ndarray]:
    """Pull a loss gradient at the proxy output back to the input planes.

    ``upstream`` is one array per plane, shaped like the image.  The
    Jacobian of each block is IDCT . diag(d) . DCT and symmetric, so the
    pullback is the same sandwich applied to the upstream gradient.
    """
    if len(upstream) != len(tape.plane_shapes):
        raise ValueError("upstream plane count does not match tape")
    out = []
    for u, d, (h, w) in zip(upstream, tape.dfactors, tape.plane_shapes):
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (h, w):
            raise ValueError(f"upstream shape {u.shape} does not match plane {(h, w)}")
        g = idct2(d * dct2(blockify(u)))
        out.append(deblockify(g, h, w))
    return out


def compose(
    mode: ComposeMode, img: PlanarImage, cond: CodecCondition,
    tolerance: float = 0.05,
) -> ProxyOutput:
    """Forward pass in the chosen composition mode.

    NO_STE returns the proxy output untouched.  STE substitutes the hard
    codec's decoded image (bit-exact, clamped) as the forward value while
    keeping the proxy tape, the straight-through estimator arrangement.
    """
    out = proxy_forward(img, cond, tolerance)
    if mode is ComposeMode.NO_STE:
        return out
    hard = refcodec.decode(refcodec.encode(img, out.resolved_qp))
    return ProxyOutput(hard, out.resolved_qp, out.achieved_bpp, out.tape)


def slightly_compressed_target(img: PlanarImage, qp: int) -> PlanarImage:
    """Supervision target: the proxy's reconstruction at a gentler qp.

    The target quantizer sits 10 below the working qp, clamped at 0, so the
    supervision keeps mild codec structure without the full distortion.
    """
    gentle = max(int(qp) - 10, refcodec.QP_MIN)
    cond = CodecCondition.fixed_qp(CodecId.REFCODEC, gentle)
    return proxy_forward(img, cond).image
