"""Planar image containers, colorspace conversion, and file I/O.

Images are stored as float64 planes with samples nominally in [0, 1].
Geometry is padded to multiples of 16 on ingest (edge replication) so that
every downstream block transform and 4:2:0 subsampling step divides evenly;
the pre-padding dimensions are kept so metrics can crop back to real content.

RGB <-> YCbCr uses the BT.601 full-range matrix.  Chroma is downsampled by
2x2 box averaging and upsampled by nearest neighbour.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

ALIGN = 16

# BT.601 full-range luma weights and chroma scale factors.
KR, KG, KB = 0.299, 0.587, 0.114
CB_SCALE = 0.564
CR_SCALE = 0.713


class ImageFormatError(Exception):
    """Raised for unreadable files, unsupported formats, or bad geometry."""


class Colorspace(enum.Enum):
    RGB = "rgb"
    YCBCR420 = "ycbcr420"


def _frozen_plane(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PlanarImage:
    """Immutable planar image.

    ``width``/``height`` are the padded (stored) luma dimensions and must be
    multiples of 16.  ``orig_width``/``orig_height`` are the pre-padding
    dimensions used when cropping for metrics.  RGB images carry three
    full-resolution planes; YCbCr 4:2:0 images carry a full-resolution luma
    plane and two half-resolution chroma planes.
    """

    width: int
    height: int
    colorspace: Colorspace
    planes: tuple[np.ndarray, ...]
    orig_width: int
    orig_height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ImageFormatError("image dimensions must be positive")
        if self.width % ALIGN or self.height % ALIGN:
            raise ImageFormatError(
                f"stored dimensions must be multiples of {ALIGN}, "
                f"got {self.width}x{self.height}"
            )
        if not (0 < self.orig_width <= self.width and 0 < self.orig_height <= self.height):
            raise ImageFormatError("original dimensions out of range")
        if len(self.planes) != 3:
            raise ImageFormatError("expected 3 planes")
        expect = self.plane_shapes(self.colorspace, self.width, self.height)
        got = tuple(p.shape for p in self.planes)
        if got != expect:
            raise ImageFormatError(f"plane shapes {got} do not match {expect}")
        object.__setattr__(self, "planes", tuple(_frozen_plane(p) for p in self.planes))

    @staticmethod
    def plane_shapes(
        colorspace: Colorspace, width: int, height: int
    ) -> tuple[tuple[int, int], ...]:
        if colorspace is Colorspace.RGB:
            return ((height, width),) * 3
        return ((height, width), (height // 2, width // 2), (height // 2, width // 2))

    @property
    def luma_area(self) -> int:
        """Pixel count of the original (unpadded) image, the bpp denominator."""
        return self.orig_width * self.orig_height

    def plane_crop_dims(self, index: int) -> tuple[int, int]:
        """(rows, cols) of real content in plane ``index``."""
        if self.colorspace is Colorspace.RGB or index == 0:
            return self.orig_height, self.orig_width
        return (self.orig_height + 1) // 2, (self.orig_width + 1) // 2

    def cropped_planes(self) -> tuple[np.ndarray, ...]:
        out = []
        for i, p in enumerate(self.planes):
            h, w = self.plane_crop_dims(i)
            out.append(p[:h, :w])
        return tuple(out)

    def clamp_unit(self) -> "PlanarImage":
        """Return a copy with every sample clamped to [0, 1]."""
        return PlanarImage(
            self.width,
            self.height,
            self.colorspace,
            tuple(np.clip(p, 0.0, 1.0) for p in self.planes),
            self.orig_width,
            self.orig_height,
        )

    def with_planes(self, planes) -> "PlanarImage":
        """Same geometry and colorspace, new sample data."""
        return PlanarImage(
            self.width, self.height, self.colorspace, tuple(planes),
            self.orig_width, self.orig_height,
        )


@dataclass(frozen=True)
class RateReport:
    """Exact bit count of one compressed representation plus derived bpp."""

    bits: int
    width: int
    height: int
    bpp: float = field(init=False)

    def __post_init__(self) -> None:
        if self.bits < 0 or self.width <= 0 or self.height <= 0:
            raise ValueError("rate report needs bits >= 0 and positive dimensions")
        object.__setattr__(self, "bpp", self.bits / (self.width * self.height))


def _pad_edge(plane: np.ndarray, height: int, width: int) -> np.ndarray:
    ph, pw = height - plane.shape[0], width - plane.shape[1]
    if ph == 0 and pw == 0:
        return plane
    return np.pad(plane, ((0, ph), (0, pw)), mode="edge")


def _aligned(n: int) -> int:
    return ((n + ALIGN - 1) // ALIGN) * ALIGN


def from_rgb_array(arr: np.ndarray) -> PlanarImage:
    """Build a padded RGB PlanarImage from an (H, W, 3) or (H, W) float array."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim == 2:
        a = np.stack([a, a, a], axis=-1)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ImageFormatError(f"expected (H, W, 3) array, got shape {a.shape}")
    h, w = a.shape[:2]
    if h == 0 or w == 0:
        raise ImageFormatError("image dimensions must be positive")
    ah, aw = _aligned(h), _aligned(w)
    planes = tuple(_pad_edge(a[:, :, c], ah, aw) for c in range(3))
    return PlanarImage(aw, ah, Colorspace.RGB, planes, w, h)


def to_rgb_array(img: PlanarImage, crop: bool = True) -> np.ndarray:
    """Stack an RGB image back into an (H, W, 3) array."""
    if img.colorspace is not Colorspace.RGB:
        raise ImageFormatError("expected an RGB image")
    planes = img.cropped_planes() if crop else img.planes
    return np.stack(planes, axis=-1)


def load_image(path) -> PlanarImage:
    """Load an 8-bit PNG or PPM (P6) file as a padded RGB image.

    Samples are mapped as v / 255.  Greyscale input is replicated across the
    three channels; palette and alpha variants are flattened to RGB.
    """
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise ImageFormatError(f"{path}: unsupported bit depth (mode {mode})")
            if mode not in ("RGB", "L", "P", "RGBA", "LA", "1"):
                raise ImageFormatError(f"{path}: unsupported image mode {mode}")
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageFormatError(f"{path}: unreadable image file: {exc}") from exc
    if rgb.size == 0:
        raise ImageFormatError(f"{path}: zero-sized image")
    return from_rgb_array(rgb)


def quantize_u8(plane: np.ndarray) -> np.ndarray:
    """[0, 1] float to 8-bit with round-half-away-from-zero."""
    v = np.clip(plane, 0.0, 1.0) * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


def save_image(img: PlanarImage, path, crop: bool = True) -> None:
    """Write an RGB image as PNG or PPM (chosen by file extension)."""
    arr = to_rgb_array(img, crop=crop)
    u8 = np.stack([quantize_u8(arr[:, :, c]) for c in range(3)], axis=-1)
    Image.fromarray(u8, mode="RGB").save(path)


def rgb_to_ycbcr420(img: PlanarImage) -> PlanarImage:
    """BT.601 full-range RGB to YCbCr with 2x2 box-averaged chroma."""
    if img.colorspace is not Colorspace.RGB:
        raise ImageFormatError("expected an RGB image")
    r, g, b = img.planes
    y = KR * r + KG * g + KB * b
    cb = 0.5 + (b - y) * CB_SCALE
    cr = 0.5 + (r - y) * CR_SCALE
    cb_sub = _box2(cb)
    cr_sub = _box2(cr)
    return PlanarImage(
        img.width, img.height, Colorspace.YCBCR420, (y, cb_sub, cr_sub),
        img.orig_width, img.orig_height,
    )


def ycbcr420_to_rgb(img: PlanarImage) -> PlanarImage:
    """Nearest-neighbour chroma upsample, inverse matrix, clamp to [0, 1]."""
    if img.colorspace is not Colorspace.YCBCR420:
        raise ImageFormatError("expected a YCbCr 4:2:0 image")
    y, cb_sub, cr_sub = img.planes
    cb = _nn2(cb_sub) - 0.5
    cr = _nn2(cr_sub) - 0.5
    b = y + cb / CB_SCALE
    r = y + cr / CR_SCALE
    g = (y - KR * r - KB * b) / KG
    planes = tuple(np.clip(p, 0.0, 1.0) for p in (r, g, b))
    return PlanarImage(
        img.width, img.height, Colorspace.RGB, planes, img.orig_width, img.orig_height
    )


def _box2(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def _nn2(plane: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(plane, 2, axis=0), 2, axis=1)


def yuv420_bytes(img: PlanarImage) -> bytes:
    """8-bit planar I420 serialization (Y then Cb then Cr, row-major)."""
    if img.colorspace is not Colorspace.YCBCR420:
        raise ImageFormatError("expected a YCbCr 4:2:0 image")
    return b"".join(quantize_u8(p).tobytes() for p in img.planes)


def write_yuv420(img: PlanarImage, path) -> None:
    with open(path, "wb") as fh:
        fh.write(yuv420_bytes(img))


def read_yuv420(
    data: bytes, width: int, height: int,
    orig_width: int | None = None, orig_height: int | None = None,
) -> PlanarImage:
    """Parse one 8-bit I420 frame of the given padded dimensions."""
    if width % ALIGN or height % ALIGN:
        raise ImageFormatError(f"frame dimensions must be multiples of {ALIGN}")
    need = width * height * 3 // 2
    if len(data) != need:
        raise ImageFormatError(
            f"expected {need} bytes for one {width}x{height} 4:2:0 frame, got {len(data)}"
        )
    raw = np.frombuffer(data, dtype=np.uint8).astype(np.float64) / 255.0
    ysz = width * height
    csz = ysz // 4
    y = raw[:ysz].reshape(height, width)
    cb = raw[ysz:ysz + csz].reshape(height // 2, width // 2)
    cr = raw[ysz + csz:].reshape(height // 2, width // 2)
    return PlanarImage(
        width, height, Colorspace.YCBCR420, (y, cb, cr),
        orig_width or width, orig_height or height,
    )
