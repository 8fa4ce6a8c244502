"""Self-contained intra-frame reference codec.

Pipeline: per-plane 8x8 block split, orthonormal DCT-II on samples centred at
0.5, uniform scalar quantization with round-half-away-from-zero (no dead
zone), zigzag scan, (zero-run, level) run-length pairs terminated by an
end-of-block marker, order-0 Exp-Golomb entropy codes (unsigned for runs,
signed for levels).

Quantizer semantics follow H.264 QP numbering on [0, 51]:

    step(qp) = 2 ** ((qp - 4) / 6) / 255

so qp 4 quantizes with one 8-bit LSB and the step doubles every 6 qp.

Bitstream layout: 4-byte magic ``RFC1``, u16 width, u16 height (big endian,
padded dimensions), u8 qp, then the entropy-coded payload for Y, Cb, Cr in
that order, zero-padded to a byte boundary.  ``bit_count`` counts the header
at 8 bits per byte plus the exact payload length, excluding padding.

Rate is monotone in qp by construction: raising qp can only shrink level
magnitudes, each code length is non-decreasing in magnitude, and merging two
runs when a level reaches zero never lengthens the stream (the run merge
inequality len_ue(r1 + r2 + 1) <= len_ue(r1) + len_ue(r2) + 3 covers the
removed level's minimum 3-bit cost).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .pixelcore import ALIGN, Colorspace, PlanarImage

QP_MIN = 0
QP_MAX = 51

MAGIC = b"RFC1"
HEADER_BYTES = 9
HEADER_BITS = HEADER_BYTES * 8

BLOCK = 8


class BitstreamError(Exception):
    """Raised when a bitstream cannot be parsed."""


def qp_step(qp: int) -> float:
    """Quantizer step size in sample units for a qp in [0, 51]."""
    if not QP_MIN <= qp <= QP_MAX:
        raise ValueError(f"qp must be in [{QP_MIN}, {QP_MAX}], got {qp}")
    return 2.0 ** ((qp - 4) / 6.0) / 255.0


@dataclass(frozen=True)
class QuantParam:
    """Validated quantization parameter."""

    qp: int

    def __post_init__(self) -> None:
        if not isinstance(self.qp, (int, np.integer)) or isinstance(self.qp, bool):
            raise ValueError(f"qp must be an integer, got {self.qp!r}")
        if not QP_MIN <= self.qp <= QP_MAX:
            raise ValueError(f"qp must be in [{QP_MIN}, {QP_MAX}], got {self.qp}")

    @property
    def step(self) -> float:
        return qp_step(self.qp)


def codec_distortion_bound(qp: int) -> float:
    """Worst-case per-pixel absolute reconstruction error at the given qp.

    Each coefficient is off by at most step / 2 and an 8x8 orthonormal basis
    row has L1 mass at most 8, so a pixel can move by at most 4 * step.
    Output clamping only shrinks the error further.
    """
    return qp_step(qp) / 2.0 * 8.0


# ---------------------------------------------------------------------------
# bit-level I/O and Exp-Golomb codes


class BitWriter:
    """MSB-first bit accumulator."""

    def __init__(self) -> None:
        self._chunks = bytearray()
        self._acc = 0
        self._nacc = 0
        self.bits_written = 0

    def write_bits(self, value: int, nbits: int) -> None:
        if nbits < 0 or value < 0 or value >> nbits:
            raise ValueError("value does not fit in nbits")
        self._acc = (self._acc << nbits) | value
        self._nacc += nbits
        self.bits_written += nbits
        while self._nacc >= 8:
            self._nacc -= 8
            self._chunks.append((self._acc >> self._nacc) & 0xFF)
        self._acc &= (1 << self._nacc) - 1

    def write_ue(self, value: int) -> None:
        """Order-0 unsigned Exp-Golomb: n zero bits, a one, n info bits."""
        if value < 0:
            raise ValueError("ue value must be non-negative")
        x = value + 1
        n = x.bit_length() - 1
        self.write_bits(0, n)
        self.write_bits(x, n + 1)

    def write_se(self, value: int) -> None:
        """Signed Exp-Golomb via the zigzag index mapping."""
        self.write_ue(2 * value - 1 if value > 0 else -2 * value)

    def getvalue(self) -> bytes:
        """Byte string with the final partial byte zero-padded."""
        if self._nacc:
            return bytes(self._chunks) + bytes(
                [(self._acc << (8 - self._nacc)) & 0xFF]
            )
        return bytes(self._chunks)


class BitReader:
    """MSB-first reader with strict bounds checking."""

    def __init__(self, data: bytes, nbits: int | None = None) -> None:
        self._data = data
        self._nbits = len(data) * 8 if nbits is None else nbits
        if self._nbits > len(data) * 8:
            raise BitstreamError("bit count exceeds available bytes")
        self.bits_read = 0

    def read_bits(self, nbits: int) -> int:
        if self.bits_read + nbits > self._nbits:
            raise BitstreamError("payload underrun: ran out of bits")
        out = 0
        pos = self.bits_read
        for _ in range(nbits):
            byte = self._data[pos >> 3]
            out = (out << 1) | ((byte >> (7 - (pos & 7))) & 1)
            pos += 1
        self.bits_read = pos
        return out

    def read_ue(self) -> int:
        n = 0
        while self.read_bits(1) == 0:
            n += 1
            if n > 64:
                raise BitstreamError("corrupt Exp-Golomb prefix")
        return ((1 << n) | self.read_bits(n)) - 1 if n else 0

    def read_se(self) -> int:
        u = self.read_ue()
        return (u + 1) // 2 if u & 1 else -(u // 2)

    @property
    def bits_left(self) -> int:
        return self._nbits - self.bits_read


def ue_len(value: int) -> int:
    return 2 * (value + 1).bit_length() - 1


def se_len(value: int) -> int:
    return ue_len(2 * value - 1 if value > 0 else -2 * value)


# ---------------------------------------------------------------------------
# transform


def _dct_matrix() -> np.ndarray:
    k = np.arange(BLOCK)[:, None]
    n = np.arange(BLOCK)[None, :]
    m = np.cos((2 * n + 1) * k * np.pi / (2 * BLOCK))
    m[0] *= np.sqrt(1.0 / BLOCK)
    m[1:] *= np.sqrt(2.0 / BLOCK)
    return m


DCT8 = _dct_matrix()


def _zigzag_order() -> np.ndarray:
    # odd anti-diagonals run top-right to bottom-left, even ones the reverse
    order = sorted(
        ((i, j) for i in range(BLOCK) for j in range(BLOCK)),
        key=lambda ij: (ij[0] + ij[1], ij[0] if (ij[0] + ij[1]) % 2 else -ij[0]),
    )
    return np.array([i * BLOCK + j for i, j in order])


ZIGZAG = _zigzag_order()
UNZIGZAG = np.argsort(ZIGZAG)


def blockify(plane: np.ndarray) -> np.ndarray:
    """(H, W) -> (H*W/64, 8, 8), blocks in raster order."""
    h, w = plane.shape
    return (
        plane.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK)
        .swapaxes(1, 2)
        .reshape(-1, BLOCK, BLOCK)
    )


def deblockify(blocks: np.ndarray, height: int, width: int) -> np.ndarray:
    return (
        blocks.reshape(height // BLOCK, width // BLOCK, BLOCK, BLOCK)
        .swapaxes(1, 2)
        .reshape(height, width)
    )


def dct2(blocks: np.ndarray) -> np.ndarray:
    return DCT8 @ blocks @ DCT8.T


def idct2(blocks: np.ndarray) -> np.ndarray:
    return DCT8.T @ blocks @ DCT8


def quantize_levels(coeffs: np.ndarray, step: float) -> np.ndarray:
    """Uniform quantizer, round half away from zero, no dead zone."""
    return (np.sign(coeffs) * np.floor(np.abs(coeffs) / step + 0.5)).astype(np.int64)


# ---------------------------------------------------------------------------
# bitstream


@dataclass(frozen=True)
class Bitstream:
    """One encoded frame.

    ``bit_count`` is exact (header * 8 + payload bits, padding excluded) when
    produced by :func:`encode`; a stream re-parsed from bytes has lost the
    exact payload length to padding, in which case it is None and the decoder
    instead insists the padding slack stays under one byte of zero bits.
    """

    width: int
    height: int
    qp: int
    payload: bytes
    bit_count: int | None = None
    orig_width: int | None = None
    orig_height: int | None = None

    def to_bytes(self) -> bytes:
        header = MAGIC + struct.pack(">HHB", self.width, self.height, self.qp)
        return header + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        if len(data) < HEADER_BYTES:
            raise BitstreamError("truncated header")
        if data[:4] != MAGIC:
            raise BitstreamError(f"corrupt header: bad magic {data[:4]!r}")
        width, height, qp = struct.unpack(">HHB", data[4:HEADER_BYTES])
        if width == 0 or height == 0 or width % ALIGN or height % ALIGN:
            raise BitstreamError(f"corrupt header: bad dimensions {width}x{height}")
        if qp > QP_MAX:
            raise BitstreamError(f"corrupt header: qp {qp} out of range")
        return cls(width, height, qp, data[HEADER_BYTES:])


def _encode_plane(levels: np.ndarray, writer: BitWriter) -> None:
    zz = levels.reshape(-1, BLOCK * BLOCK)[:, ZIGZAG]
    for row in zz.tolist():
        run = 0
        for lvl in row:
            if lvl == 0:
                run += 1
            else:
                writer.write_ue(run)
                writer.write_se(lvl)
                run = 0
        # end of block: run 0, level 0
        writer.write_ue(0)
        writer.write_se(0)


def _decode_plane(
    reader: BitReader, height: int, width: int, step: float
) -> np.ndarray:
    nblocks = (height // BLOCK) * (width // BLOCK)
    zz = np.zeros((nblocks, BLOCK * BLOCK), dtype=np.float64)
    for b in range(nblocks):
        pos = 0
        while True:
            run = reader.read_ue()
            lvl = reader.read_se()
            if lvl == 0:
                if run != 0:
                    raise BitstreamError("corrupt payload: run before end-of-block")
                break
            pos += run
            if pos >= BLOCK * BLOCK:
                raise BitstreamError("payload overrun: coefficient index past block end")
            zz[b, pos] = lvl * step
            pos += 1
    coeffs = zz[:, UNZIGZAG].reshape(nblocks, BLOCK, BLOCK)
    recon = deblockify(idct2(coeffs), height, width) + 0.5
    return np.clip(recon, 0.0, 1.0)


def encode(img: PlanarImage, qp: int | QuantParam) -> Bitstream:
    """Encode a YCbCr 4:2:0 image at the given qp."""
    if img.colorspace is not Colorspace.YCBCR420:
        raise ValueError("reference codec expects a YCbCr 4:2:0 image")
    q = qp if isinstance(qp, QuantParam) else QuantParam(int(qp))
    writer = BitWriter()
    for plane in img.planes:
        coeffs = dct2(blockify(plane - 0.5))
        _encode_plane(quantize_levels(coeffs, q.step), writer)
    payload = writer.getvalue()
    return Bitstream(
        img.width, img.height, q.qp, payload,
        bit_count=HEADER_BITS + writer.bits_written,
        orig_width=img.orig_width, orig_height=img.orig_height,
    )


def decode(bs: Bitstream) -> PlanarImage:
    """Decode to a clamped YCbCr 4:2:0 image.

    Raises ``BitstreamError`` if the payload ends early, a block overruns, or
    the stream carries bits beyond the expected end.
    """
    step = qp_step(bs.qp)
    nbits = None if bs.bit_count is None else bs.bit_count - HEADER_BITS
    if nbits is not None and (nbits < 0 or nbits > len(bs.payload) * 8):
        raise BitstreamError("bit count inconsistent with payload size")
    reader = BitReader(bs.payload, nbits)
    planes = []
    for shape in PlanarImage.plane_shapes(Colorspace.YCBCR420, bs.width, bs.height):
        planes.append(_decode_plane(reader, shape[0], shape[1], step))
    if bs.bit_count is not None:
        if reader.bits_left != 0:
            raise BitstreamError(
                f"payload overrun: {reader.bits_left} unread bits after last block"
            )
    else:
        if reader.bits_left >= 8:
            raise BitstreamError(
                f"payload overrun: {reader.bits_left} unread bits after last block"
            )
        if reader.bits_left and reader.read_bits(reader.bits_left) != 0:
            raise BitstreamError("payload overrun: nonzero padding bits")
    return PlanarImage(
        bs.width, bs.height, Colorspace.YCBCR420, tuple(planes),
        bs.orig_width or bs.width, bs.orig_height or bs.height,
    )


def encoded_bits(img: PlanarImage, qp: int) -> int:
    """Bit count of ``encode(img, qp)`` (header included)."""
    return encode(img, qp).bit_count
