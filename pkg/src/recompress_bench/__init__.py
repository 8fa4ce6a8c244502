"""Recompression-aware rate-distortion toolkit.

Core pieces: a self-contained intra-frame reference codec, a differentiable
proxy for it, rate control that resolves quantizer settings from bitrate
targets, external encoder drivers, quality metrics, Bjontegaard statistics,
and a per-image preprocessing optimizer, tied together by a CLI.
"""

__version__ = "0.1.0"

from .pixelcore import (  # noqa: F401
    Colorspace,
    ImageFormatError,
    PlanarImage,
    RateReport,
    load_image,
    rgb_to_ycbcr420,
    save_image,
    ycbcr420_to_rgb,
)
from .refcodec import Bitstream, QuantParam, codec_distortion_bound, decode, encode  # noqa: F401
from .ratecontrol import RateSolveResult, SolveStatus, measured_bpp_feedback, solve_qp  # noqa: F401
from .diffproxy import (  # noqa: F401
    CodecCondition,
    CodecId,
    ComposeMode,
    GradientTape,
    ProxyOutput,
    RateMode,
    compose,
    proxy_forward,
    proxy_gradient,
    slightly_compressed_target,
)
from .metrics import mse, psnr, ssim  # noqa: F401
from .bdstats import RdCurve, bd_quality, bd_rate, paired_t_test, summarize  # noqa: F401
from .optimizer import (  # noqa: F401
    OptimizeConfig,
    OptimizeTrace,
    Supervision,
    ablation_run,
    identity_baseline,
    optimize_preprocess,
)
