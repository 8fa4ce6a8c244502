"""Subprocess drivers for external encoders and metrics.

Encoders are described by command templates with named placeholders, so any
binary with a CQP or CRF knob can be plugged in without code changes.  Each
invocation gets a private temporary directory (under RECOMPRESS_BENCH_TMP
when set): the image goes in as one raw 4:2:0 frame, the encoder runs in
single-picture mode (no B frames, as the default templates pin down), the
bitstream size on disk is the measured rate, and a decoder command brings
the frame back for metrics.  The directory is removed on success and kept
for inspection on failure, with its path in the raised error.

A process-slot semaphore bounds how many encoder subprocesses run at once,
one per CPU by default, independent of how many threads call in.
"""

from __future__ import annotations

import logging
import os
import shlex
import shutil
import subprocess
import tempfile
import threading
from dataclasses import dataclass

from .pixelcore import Colorspace, PlanarImage, read_yuv420, save_image, write_yuv420

log = logging.getLogger(__name__)

TMP_ENV = "RECOMPRESS_BENCH_TMP"

_ENCODE_PLACEHOLDERS = {"in", "out", "w", "h", "qp", "crf"}
_DECODE_PLACEHOLDERS = {"in", "out", "w", "h"}


class ExternalCodecError(Exception):
    """Base for failures driving external binaries."""


class EncoderRunError(ExternalCodecError):
    pass


class MetricRunError(ExternalCodecError):
    pass


_slots_lock = threading.Lock()
_process_slots = threading.BoundedSemaphore(os.cpu_count() or 1)


def set_process_limit(n: int) -> None:
    """Cap simultaneous external encoder/decoder processes."""
    global _process_slots
    if n < 1:
        raise ValueError("process limit must be >= 1")
    with _slots_lock:
        _process_slots = threading.BoundedSemaphore(n)


def _check_template(template: str, allowed: set[str], required: set[str], what: str) -> None:
    import string

    fields = set()
    try:
        for _, field_name, _, _ in string.Formatter().parse(template):
            if field_name is not None:
                fields.add(field_name)
    except ValueError as exc:
        raise ValueError(f"{what}: malformed template: {exc}") from exc
    unknown = fields - allowed
    if unknown:
        raise ValueError(f"{what}: unknown placeholders {sorted(unknown)}")
    missing = required - fields
    if missing:
        raise ValueError(f"{what}: missing required placeholders {sorted(missing)}")


@dataclass(frozen=True)
class EncoderSpec:
    """One external codec in one rate mode.

    ``encode_args``/``decode_args`` are shell-style argument strings with
    ``{in}``, ``{out}``, ``{w}``, ``{h}`` and, depending on ``mode``,
    ``{qp}`` or ``{crf}`` placeholders.
    """

    codec_id: str
    mode: str
    encoder: str
    encode_args: str
    decoder: str
    decode_args: str

    def __post_init__(self) -> None:
        if self.mode not in ("cqp", "crf"):
            raise ValueError(f"mode must be 'cqp' or 'crf', got {self.mode!r}")
        knob = "qp" if self.mode == "cqp" else "crf"
        _check_template(
            self.encode_args, _ENCODE_PLACEHOLDERS,
            {"in", "out", knob}, f"{self.codec_id} encode_args",
        )
        _check_template(
            self.decode_args, _DECODE_PLACEHOLDERS,
            {"in", "out"}, f"{self.codec_id} decode_args",
        )

    def param_name(self) -> str:
        return "qp" if self.mode == "cqp" else "crf"


_FFMPEG_RAWOUT = "-y -loglevel error -i {in} -f rawvideo -pix_fmt yuv420p {out}"

DEFAULT_SPECS: dict[tuple[str, str], EncoderSpec] = {
    ("x264", "cqp"): EncoderSpec(
        "x264", "cqp", "x264",
        "--qp {qp} --frames 1 --bframes 0 --input-res {w}x{h} --input-csp i420"
        " --fps 25 --output {out} {in}",
        "ffmpeg", _FFMPEG_RAWOUT,
    ),
    ("x264", "crf"): EncoderSpec(
        "x264", "crf", "x264",
        "--crf {crf} --frames 1 --bframes 0 --input-res {w}x{h} --input-csp i420"
        " --fps 25 --output {out} {in}",
        "ffmpeg", _FFMPEG_RAWOUT,
    ),
    ("x265", "cqp"): EncoderSpec(
        "x265", "cqp", "x265",
        "--input {in} --input-res {w}x{h} --fps 25 --frames 1 --bframes 0"
        " --qp {qp} --output {out}",
        "ffmpeg", _FFMPEG_RAWOUT,
    ),
    ("x265", "crf"): EncoderSpec(
        "x265", "crf", "x265",
        "--input {in} --input-res {w}x{h} --fps 25 --frames 1 --bframes 0"
        " --crf {crf} --output {out}",
        "ffmpeg", _FFMPEG_RAWOUT,
    ),
    ("vvenc", "cqp"): EncoderSpec(
        "vvenc", "cqp", "vvencapp",
        "-i {in} -s {w}x{h} -r 25 --frames 1 -q {qp} -o {out}",
        "vvdecapp", "-b {in} -o {out}",
    ),
}


def default_spec(codec_id: str, mode: str = "cqp") -> EncoderSpec:
    try:
        return DEFAULT_SPECS[(codec_id, mode)]
    except KeyError:
        raise ValueError(f"no default spec for codec {codec_id!r} in mode {mode!r}") from None


@dataclass(frozen=True)
class ExternalResult:
    decoded: PlanarImage
    bits: int
    encoder_log: str


def _fresh_tmpdir(tag: str) -> str:
    base = os.environ.get(TMP_ENV)
    if base:
        os.makedirs(base, exist_ok=True)
    return tempfile.mkdtemp(prefix=f"recompress-{tag}-", dir=base or None)


def _run(cmd: list[str], what: str, workdir: str) -> subprocess.CompletedProcess:
    try:
        with _process_slots:
            return subprocess.run(
                cmd, capture_output=True, text=True, errors="replace", cwd=workdir,
            )
    except FileNotFoundError as exc:
        raise EncoderRunError(
            f"failed to spawn {what} ({cmd[0]!r} not found); inputs kept in {workdir}"
        ) from exc
    except OSError as exc:
        raise EncoderRunError(
            f"failed to spawn {what}: {exc}; inputs kept in {workdir}"
        ) from exc


def _fail(workdir: str, message: str) -> EncoderRunError:
    log.error("%s; temp dir retained at %s", message, workdir)
    return EncoderRunError(f"{message}; temp dir retained at {workdir}")


def run_encoder(spec: EncoderSpec, img: PlanarImage, param: int) -> ExternalResult:
    """One encode-decode round trip through an external codec.

    ``param`` is the qp (CQP mode) or crf (CRF mode) value.  Returns the
    decoded frame, the bitstream size in bits, and the encoder's log.
    """
    if img.colorspace is not Colorspace.YCBCR420:
        raise ValueError("external encoders take YCbCr 4:2:0 input")
    workdir = _fresh_tmpdir(spec.codec_id)
    try:
        src = os.path.join(workdir, "in.yuv")
        bitstream = os.path.join(workdir, "stream.bin")
        recon = os.path.join(workdir, "recon.yuv")
        write_yuv420(img, src)
        fields = {
            "in": src, "out": bitstream,
            "w": img.width, "h": img.height,
            spec.param_name(): param,
        }
        cmd = [spec.encoder] + [a.format(**fields) for a in shlex.split(spec.encode_args)]
        proc = _run(cmd, f"{spec.codec_id} encoder", workdir)
        enc_log = proc.stdout + proc.stderr
        if proc.returncode != 0:
            raise _fail(
                workdir,
                f"{spec.codec_id} encoder exited with status {proc.returncode}: "
                f"{enc_log.strip()[-500:]}",
            )
        if not os.path.exists(bitstream) or os.path.getsize(bitstream) == 0:
            raise _fail(workdir, f"{spec.codec_id} encoder produced no bitstream")
        bits = os.path.getsize(bitstream) * 8

        dec_fields = {"in": bitstream, "out": recon, "w": img.width, "h": img.height}
        dec_cmd = [spec.decoder] + [
            a.format(**dec_fields) for a in shlex.split(spec.decode_args)
        ]
        dproc = _run(dec_cmd, f"{spec.codec_id} decoder", workdir)
        if dproc.returncode != 0:
            raise _fail(
                workdir,
                f"{spec.codec_id} decoder exited with status {dproc.returncode}: "
                f"{(dproc.stdout + dproc.stderr).strip()[-500:]}",
            )
        frame_bytes = img.width * img.height * 3 // 2
        try:
            size = os.path.getsize(recon)
        except OSError:
            raise _fail(workdir, f"{spec.codec_id} decoder produced no output") from None
        if size != frame_bytes:
            if size > 0 and size % frame_bytes == 0:
                raise _fail(
                    workdir,
                    f"{spec.codec_id} decoded {size // frame_bytes} frames, expected exactly 1",
                )
            raise _fail(
                workdir,
                f"{spec.codec_id} decoded frame size {size} does not match "
                f"{img.width}x{img.height} 4:2:0 ({frame_bytes} bytes)",
            )
        with open(recon, "rb") as fh:
            decoded = read_yuv420(
                fh.read(), img.width, img.height, img.orig_width, img.orig_height
            )
        result = ExternalResult(decoded, bits, enc_log)
    except Exception:
        # workdir retained for post-mortem
        raise
    shutil.rmtree(workdir, ignore_errors=True)
    return result


def external_bits(spec: EncoderSpec, img: PlanarImage, param: int) -> int:
    """Rate-only probe used by the qp solver."""
    return run_encoder(spec, img, param).bits


def run_external_metric(command: str, img_a: PlanarImage, img_b: PlanarImage) -> float:
    """Run ``command`` (template with {a} and {b}) on two images saved as
    PNG and parse a single decimal number from its stdout."""
    _check_template(command, {"a", "b"}, {"a", "b"}, "metric command")
    workdir = _fresh_tmpdir("metric")
    try:
        path_a = os.path.join(workdir, "a.png")
        path_b = os.path.join(workdir, "b.png")
        save_image(img_a, path_a)
        save_image(img_b, path_b)
        cmd = [a.format(a=path_a, b=path_b) for a in shlex.split(command)]
        try:
            with _process_slots:
                proc = subprocess.run(
                    cmd, capture_output=True, text=True, errors="replace", cwd=workdir
                )
        except (FileNotFoundError, OSError) as exc:
            raise MetricRunError(
                f"failed to spawn metric command: {exc}; inputs kept in {workdir}"
            ) from exc
        if proc.returncode != 0:
            log.error("metric command failed; temp dir retained at %s", workdir)
            raise MetricRunError(
                f"metric command exited with status {proc.returncode}: "
                f"{proc.stderr.strip()[-500:]}; temp dir retained at {workdir}"
            )
        text = proc.stdout.strip()
        try:
            value = float(text)
        except ValueError:
            log.error("unparseable metric output; temp dir retained at %s", workdir)
            raise MetricRunError(
                f"could not parse a decimal from metric stdout: {text!r}; "
                f"temp dir retained at {workdir}"
            ) from None
    except Exception:
        # workdir retained for post-mortem
        raise
    shutil.rmtree(workdir, ignore_errors=True)
    return value
