"""Subprocess adapter tests driven by hermetic Python stub codecs."""
from __future__ import annotations

import os
import re
import shutil
import sys

import numpy as np
import pytest

from conftest import rgb_image
from recompress_bench.diffproxy import CodecCondition, CodecId, RateMode
from recompress_bench.extcodec import (
    DEFAULT_SPECS,
    TMP_ENV,
    EncoderRunError,
    EncoderSpec,
    MetricRunError,
    default_spec,
    external_bits,
    run_encoder,
    run_external_metric,
    set_process_limit,
)
from recompress_bench.pixelcore import read_yuv420

_GOOD_ENCODER = """\
import sys
inp, out, w, h, knob = sys.argv[1:6]
data = open(inp, "rb").read()
pad = (52 - int(knob)) * 100 + 1
with open(out, "wb") as fh:
    fh.write(data + b"\\x00" * pad)
print("wrote", len(data) + pad, "bytes")
"""

_GOOD_DECODER = """\
import sys
inp, out, w, h = sys.argv[1:5]
data = open(inp, "rb").read()
n = int(w) * int(h) * 3 // 2
with open(out, "wb") as fh:
    fh.write(data[:n])
"""


def _script(tmp_path, name: str, body: str) -> str:
    path = tmp_path / name
    path.write_text(body)
    return str(path)


def _stub_spec(tmp_path, mode: str = "cqp",
               encoder_body: str = _GOOD_ENCODER,
               decoder_body: str = _GOOD_DECODER) -> EncoderSpec:
    enc = _script(tmp_path, "enc.py", encoder_body)
    dec = _script(tmp_path, "dec.py", decoder_body)
    knob = "{qp}" if mode == "cqp" else "{crf}"
    return EncoderSpec(
        "stub", mode, sys.executable,
        f"{enc} {{in}} {{out}} {{w}} {{h}} {knob}",
        sys.executable, f"{dec} {{in}} {{out}} {{w}} {{h}}",
    )


def _yuv_image(seed: int, w: int = 32, h: int = 16):
    """A frame whose samples sit exactly on the 8-bit grid."""
    rng = np.random.default_rng(seed)
    data = rng.integers(0, 256, w * h * 3 // 2, dtype=np.uint8).tobytes()
    return read_yuv420(data, w, h, w, h)


def _retained_dir(exc: BaseException) -> str:
    m = re.search(r"(?:retained at|kept in) (\S+)", str(exc))
    assert m, f"no temp dir path in {exc}"
    return m.group(1)


def test_stub_round_trip_is_exact(tmp_path, monkeypatch) -> None:
    monkeypatch.setenv(TMP_ENV, str(tmp_path / "scratch"))
    spec = _stub_spec(tmp_path)
    img = _yuv_image(1)

    res = run_encoder(spec, img, 30)
    frame_bytes = 32 * 16 * 3 // 2
    assert res.bits == (frame_bytes + (52 - 30) * 100 + 1) * 8
    assert "wrote" in res.encoder_log
    for got, want in zip(res.decoded.planes, img.planes):
        assert np.array_equal(got, want)
    # success path cleans up after itself
    assert os.listdir(tmp_path / "scratch") == []


def test_stub_rate_falls_as_qp_rises(tmp_path) -> None:
    spec = _stub_spec(tmp_path)
    img = _yuv_image(2)
    frame_bytes = 32 * 16 * 3 // 2
    assert external_bits(spec, img, 10) == (frame_bytes + 42 * 100 + 1) * 8
    assert external_bits(spec, img, 40) == (frame_bytes + 12 * 100 + 1) * 8


def test_crf_mode_spec(tmp_path) -> None:
    spec = _stub_spec(tmp_path, mode="crf")
    assert spec.param_name() == "crf"
    assert _stub_spec(tmp_path).param_name() == "qp"
    res = run_encoder(spec, _yuv_image(3), 23)
    assert res.bits > 0


def test_crf_measured_rate_feeds_back_into_condition(tmp_path) -> None:
    spec = _stub_spec(tmp_path, mode="crf")
    img = _yuv_image(4)
    res = run_encoder(spec, img, 23)
    measured = res.bits / img.luma_area

    cond = CodecCondition.crf_mode(CodecId.X264, 23)
    fed = cond.with_measured_bpp(measured)
    assert fed is not cond
    assert fed.mode is RateMode.TARGET_BPP
    assert fed.bpp == pytest.approx(measured, rel=1e-12)
    assert cond.mode is RateMode.CRF


def test_rejects_rgb_input(tmp_path) -> None:
    spec = _stub_spec(tmp_path)
    with pytest.raises(ValueError, match="4:2:0 input"):
        run_encoder(spec, rgb_image(5, 32), 30)


def test_encoder_failure_retains_workdir(tmp_path, monkeypatch) -> None:
    monkeypatch.setenv(TMP_ENV, str(tmp_path / "scratch"))
    spec = _stub_spec(
        tmp_path,
        encoder_body="import sys\nprint('boom', file=sys.stderr)\nsys.exit(3)\n",
    )
    with pytest.raises(EncoderRunError, match="exited with status 3") as exc:
        run_encoder(spec, _yuv_image(6), 30)
    assert "boom" in str(exc.value)

    kept = _retained_dir(exc.value)
    assert kept.startswith(str(tmp_path / "scratch"))
    assert os.path.isdir(kept)
    assert os.path.exists(os.path.join(kept, "in.yuv"))
    shutil.rmtree(kept)


def test_empty_bitstream_detected(tmp_path) -> None:
    spec = _stub_spec(
        tmp_path, encoder_body="import sys\nopen(sys.argv[2], 'wb').close()\n"
    )
    with pytest.raises(EncoderRunError, match="produced no bitstream") as exc:
        run_encoder(spec, _yuv_image(7), 30)
    shutil.rmtree(_retained_dir(exc.value))

    spec_none = _stub_spec(tmp_path, encoder_body="pass\n")
    with pytest.raises(EncoderRunError, match="produced no bitstream") as exc:
        run_encoder(spec_none, _yuv_image(7), 30)
    shutil.rmtree(_retained_dir(exc.value))


def test_decoder_size_mismatch(tmp_path) -> None:
    short = _GOOD_DECODER.replace("data[:n]", "data[: n - 7]")
    spec = _stub_spec(tmp_path, decoder_body=short)
    with pytest.raises(EncoderRunError, match="does not match") as exc:
        run_encoder(spec, _yuv_image(8), 30)
    assert "768 bytes" in str(exc.value)
    shutil.rmtree(_retained_dir(exc.value))


def test_decoder_emitting_two_frames(tmp_path) -> None:
    double = _GOOD_DECODER.replace("data[:n]", "data[:n] * 2")
    spec = _stub_spec(tmp_path, decoder_body=double)
    with pytest.raises(EncoderRunError, match="2 frames, expected exactly 1") as exc:
        run_encoder(spec, _yuv_image(9), 30)
    shutil.rmtree(_retained_dir(exc.value))


def test_missing_binary(tmp_path) -> None:
    spec = EncoderSpec(
        "ghost", "cqp", "/nonexistent/encoder-binary",
        "{in} {out} {qp}", sys.executable, "{in} {out}",
    )
    with pytest.raises(EncoderRunError, match="failed to spawn") as exc:
        run_encoder(spec, _yuv_image(10), 30)
    assert "not found" in str(exc.value)
    shutil.rmtree(_retained_dir(exc.value))


def test_template_validation() -> None:
    def spec_with(encode_args: str = "{in} {out} {qp}", decode_args: str = "{in} {out}",
                  mode: str = "cqp") -> EncoderSpec:
        return EncoderSpec("t", mode, "enc", encode_args, "dec", decode_args)

    with pytest.raises(ValueError, match="malformed template"):
        spec_with("{in} {out")
    with pytest.raises(ValueError, match=r"unknown placeholders \['bogus'\]"):
        spec_with("{in} {out} {qp} {bogus}")
    with pytest.raises(ValueError, match=r"missing required placeholders \['qp'\]"):
        spec_with("{in} {out}")
    with pytest.raises(ValueError, match=r"missing required placeholders \['crf'\]"):
        spec_with("{in} {out} {qp}", mode="crf")
    with pytest.raises(ValueError, match=r"unknown placeholders \['qp'\]"):
        spec_with(decode_args="{in} {out} {qp}")
    with pytest.raises(ValueError, match="mode must be 'cqp' or 'crf'"):
        spec_with(mode="abr")


def test_default_specs_cover_published_codecs() -> None:
    assert set(DEFAULT_SPECS) == {
        ("x264", "cqp"), ("x264", "crf"),
        ("x265", "cqp"), ("x265", "crf"),
        ("vvenc", "cqp"),
    }
    assert default_spec("x264") is DEFAULT_SPECS[("x264", "cqp")]
    assert default_spec("x265", "crf").param_name() == "crf"
    with pytest.raises(ValueError, match="no default spec"):
        default_spec("av1")


def test_process_limit(tmp_path) -> None:
    with pytest.raises(ValueError, match="process limit must be >= 1"):
        set_process_limit(0)
    try:
        set_process_limit(2)
        assert run_encoder(_stub_spec(tmp_path), _yuv_image(11), 30).bits > 0
    finally:
        set_process_limit(os.cpu_count() or 1)


def test_external_metric_runs(tmp_path) -> None:
    body = (
        "import os, sys\n"
        "assert os.path.getsize(sys.argv[1]) > 0\n"
        "assert os.path.getsize(sys.argv[2]) > 0\n"
        "print('  0.4375 ')\n"
    )
    script = _script(tmp_path, "metric.py", body)
    value = run_external_metric(
        f"{sys.executable} {script} {{a}} {{b}}", rgb_image(12, 32), rgb_image(13, 32)
    )
    assert value == 0.4375


def test_external_metric_errors(tmp_path) -> None:
    img_a, img_b = rgb_image(14, 32), rgb_image(15, 32)

    fail = _script(tmp_path, "fail.py", "import sys\nsys.exit(2)\n")
    with pytest.raises(MetricRunError, match="exited with status 2") as exc:
        run_external_metric(f"{sys.executable} {fail} {{a}} {{b}}", img_a, img_b)
    shutil.rmtree(_retained_dir(exc.value))

    chatty = _script(tmp_path, "chatty.py", "print('not-a-number')\n")
    with pytest.raises(MetricRunError, match="could not parse a decimal") as exc:
        run_external_metric(f"{sys.executable} {chatty} {{a}} {{b}}", img_a, img_b)
    shutil.rmtree(_retained_dir(exc.value))

    with pytest.raises(ValueError, match=r"missing required placeholders \['b'\]"):
        run_external_metric("vmaf {a}", img_a, img_b)
