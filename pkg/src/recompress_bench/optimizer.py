"""Per-image preprocessing optimizer.

Descends on the input image so that what survives the codec looks like the
supervision target: either the clean image itself or a slightly-compressed
rendition of it (the proxy at a quantizer 10 below the working point),
which asks the optimizer to spend its effort on structure the codec can
actually carry.

The working qp is frozen while descending and re-resolved from the current
iterate on a fixed schedule, so the rate target keeps holding as the image
drifts.  Descent is plain projected gradient with backtracking: a step that
increases the loss is rejected and the step size halved.  The final report
always comes from the hard codec, never the proxy.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import metrics, ratecontrol, refcodec
from .diffproxy import (
    CodecCondition,
    CodecId,
    ComposeMode,
    RateMode,
    compose,
    proxy_gradient,
    slightly_compressed_target,
)
from .pixelcore import Colorspace, PlanarImage, rgb_to_ycbcr420, ycbcr420_to_rgb


class Supervision(enum.Enum):
    CLEAN = "clean"
    SLIGHTLY_COMPRESSED = "slightly_compressed"


class DivergenceError(Exception):
    """Loss became non-finite; carries the partial trace."""

    def __init__(self, message: str, trace: "OptimizeTrace"):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class OptimizeConfig:
    target: CodecCondition
    steps: int = 200
    step_size: float = 0.05
    mode: ComposeMode = ComposeMode.NO_STE
    supervision: Supervision = Supervision.SLIGHTLY_COMPRESSED
    re_solve_qp_every: int = 10
    tolerance: float = 0.05

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.step_size <= 0:
            raise ValueError("step size must be positive")
        if self.re_solve_qp_every < 1:
            raise ValueError("re_solve_qp_every must be >= 1")
        if self.target.codec_id is not CodecId.REFCODEC:
            raise ValueError("optimizer drives the reference codec proxy only")
        if self.target.mode is RateMode.CRF:
            raise ValueError("the reference codec has no crf mode")


@dataclass
class OptimizeTrace:
    """Everything one optimization run produced."""

    config: OptimizeConfig
    losses: list[float] = field(default_factory=list)
    qp_history: list[int] = field(default_factory=list)
    preprocessed: PlanarImage | None = None
    final_qp: int | None = None
    final_bits: int | None = None
    final_bpp: float | None = None
    final_psnr: float | None = None
    decoded: PlanarImage | None = None


@dataclass(frozen=True)
class BaselineResult:
    """Hard codec on the untouched input: the steps-free reference point."""

    qp: int
    bits: int
    bpp: float
    psnr: float
    decoded: PlanarImage


def _as_ycbcr(img: PlanarImage) -> PlanarImage:
    return img if img.colorspace is Colorspace.YCBCR420 else rgb_to_ycbcr420(img)


def _as_rgb(img: PlanarImage) -> PlanarImage:
    return img if img.colorspace is Colorspace.RGB else ycbcr420_to_rgb(img)


def _loss_and_upstream(forward: PlanarImage, target_planes):
    """Cropped MSE against the target and its per-sample gradient.

    The loss is reported as a mean, but the descent direction uses the
    per-sample gradient 2*(forward - target) so the step size acts in pixel
    units regardless of image size.  Padding samples carry zero gradient so
    the descent never chases content that metrics will crop away.
    """
    crops = [forward.plane_crop_dims(i) for i in range(3)]
    n = sum(h * w for h, w in crops)
    loss = 0.0
    upstream = []
    for f, t, (h, w) in zip(forward.planes, target_planes, crops):
        d = f[:h, :w] - t[:h, :w]
        loss += float((d * d).sum())
        u = np.zeros(f.shape)
        u[:h, :w] = 2.0 * d
        upstream.append(u)
    return loss / n, upstream


def _resolve_qp(img: PlanarImage, cond: CodecCondition, tolerance: float) -> int:
    if cond.mode is RateMode.FIXED_QP:
        return cond.qp
    res = ratecontrol.solve_qp(img, refcodec.encoded_bits, cond.bpp, tolerance)
    return res.qp


def _hard_eval(clean_rgb: PlanarImage, final: PlanarImage, qp: int):
    bs = refcodec.encode(final, qp)
    decoded = refcodec.decode(bs)
    decoded_rgb = _as_rgb(decoded)
    return bs.bit_count, bs.bit_count / final.luma_area, metrics.psnr(clean_rgb, decoded_rgb), decoded_rgb


def optimize_preprocess(
    clean: PlanarImage,
    cfg: OptimizeConfig,
    input_img: PlanarImage | None = None,
) -> OptimizeTrace:
    """Optimize a preprocessed version of ``input_img`` (default: the clean
    image itself) against the configured codec condition.

    Returns the trace with per-step losses, the qp schedule actually used,
    the preprocessed image, and a final hard-codec evaluation (bits, bpp,
    PSNR against the clean image in RGB).
    """
    clean_rgb = _as_rgb(clean)
    source = _as_ycbcr(input_img if input_img is not None else clean)
    clean_ycc = _as_ycbcr(clean)
    if (source.width, source.height) != (clean_ycc.width, clean_ycc.height):
        raise ValueError("input and clean image dimensions differ")

    trace = OptimizeTrace(config=cfg)
    x = source
    lr = cfg.step_size
    qp: int | None = None
    target_planes = None
    cur_loss: float | None = None

    for i in range(cfg.steps):
        if i % cfg.re_solve_qp_every == 0:
            new_qp = _resolve_qp(x, cfg.target, cfg.tolerance)
            if new_qp != qp:
                qp = new_qp
                if cfg.supervision is Supervision.SLIGHTLY_COMPRESSED:
                    target_planes = slightly_compressed_target(clean_ycc, qp).planes
                else:
                    target_planes = clean_ycc.planes
                cur_loss = None
        hold = CodecCondition.fixed_qp(CodecId.REFCODEC, qp)
        if cur_loss is None:
            out = compose(cfg.mode, x, hold)
            cur_loss, upstream = _loss_and_upstream(out.image, target_planes)
            if not math.isfinite(cur_loss):
                trace.losses.append(cur_loss)
                trace.qp_history.append(qp)
                raise DivergenceError(f"loss became non-finite at step {i}", trace)
        gradient = proxy_gradient(out.tape, upstream)
        candidate_planes = [
            np.clip(p - lr * g, 0.0, 1.0) for p, g in zip(x.planes, gradient)
        ]
        candidate = x.with_planes(candidate_planes)
        cand_out = compose(cfg.mode, candidate, hold)
        cand_loss, cand_upstream = _loss_and_upstream(cand_out.image, target_planes)
        if not math.isfinite(cand_loss):
            trace.losses.append(cand_loss)
            trace.qp_history.append(qp)
            raise DivergenceError(f"loss became non-finite at step {i}", trace)
        if cand_loss > cur_loss:
            lr *= 0.5
        else:
            x = candidate
            out = cand_out
            cur_loss, upstream = cand_loss, cand_upstream
        trace.losses.append(cur_loss)
        trace.qp_history.append(qp)

    trace.preprocessed = x
    trace.final_qp = qp
    bits, bpp, psnr, decoded = _hard_eval(clean_rgb, x, qp)
    trace.final_bits = bits
    trace.final_bpp = bpp
    trace.final_psnr = psnr
    trace.decoded = decoded
    return trace


def identity_baseline(
    clean: PlanarImage,
    cond: CodecCondition,
    tolerance: float = 0.05,
    input_img: PlanarImage | None = None,
) -> BaselineResult:
    """Hard-codec result with no preprocessing at all."""
    clean_rgb = _as_rgb(clean)
    source = _as_ycbcr(input_img if input_img is not None else clean)
    if cond.codec_id is not CodecId.REFCODEC:
        raise ValueError("baseline drives the reference codec only")
    if cond.mode is RateMode.CRF:
        raise ValueError("the reference codec has no crf mode")
    qp = _resolve_qp(source, cond, tolerance)
    bits, bpp, psnr, decoded = _hard_eval(clean_rgb, source, qp)
    return BaselineResult(qp, bits, bpp, psnr, decoded)


@dataclass(frozen=True)
class AblationRow:
    """Corpus-level aggregate for one configuration."""

    label: str
    n_images: int
    mean_psnr: float
    mean_bpp: float
    mean_final_loss: float


def ablation_run(corpus, configs) -> list[AblationRow]:
    """Run every config over every image and aggregate per config.

    ``corpus`` is a sequence of (image_id, clean PlanarImage) pairs,
    ``configs`` a sequence of (label, OptimizeConfig) pairs; at least two
    configurations are required for a comparison to mean anything.
    """
    corpus = list(corpus)
    configs = list(configs)
    if len(configs) < 2:
        raise ValueError(f"ablation grid needs >= 2 configurations, got {len(configs)}")
    if not corpus:
        raise ValueError("ablation corpus is empty")
    rows = []
    for label, cfg in configs:
        psnrs, bpps, losses = [], [], []
        for _, img in corpus:
            trace = optimize_preprocess(img, cfg)
            psnrs.append(trace.final_psnr)
            bpps.append(trace.final_bpp)
            losses.append(trace.losses[-1])
        rows.append(
            AblationRow(
                label, len(corpus),
                float(np.mean(psnrs)), float(np.mean(bpps)), float(np.mean(losses)),
            )
        )
    return rows
