"""End-to-end command-line coverage: every subcommand, both output schemas,
the external-codec path through stub binaries, and the exit-code contract."""
from __future__ import annotations

import csv
import json
import math
import os
import sys

import numpy as np
import pytest

from recompress_bench import __version__, extcodec
from recompress_bench.cli import (
    MEAN_ID,
    RD_COLUMNS,
    RD_SCHEMA,
    main,
    read_rd_csv,
    write_rd_csv,
)
from recompress_bench.extcodec import EncoderSpec
from recompress_bench.pixelcore import load_image

_STUB_ENCODER = """\
import sys
inp, out, w, h, knob = sys.argv[1:6]
data = open(inp, "rb").read()
pad = (52 - int(knob)) * 40 + 1
with open(out, "wb") as fh:
    fh.write(data + b"\\x00" * pad)
"""

_STUB_DECODER = """\
import sys
inp, out, w, h = sys.argv[1:5]
data = open(inp, "rb").read()
n = int(w) * int(h) * 3 // 2
with open(out, "wb") as fh:
    fh.write(data[:n])
"""


def _stub_spec(tmp_path, mode: str = "cqp", encoder_body: str = _STUB_ENCODER) -> EncoderSpec:
    enc = tmp_path / "enc.py"
    enc.write_text(encoder_body)
    dec = tmp_path / "dec.py"
    dec.write_text(_STUB_DECODER)
    knob = "{qp}" if mode == "cqp" else "{crf}"
    return EncoderSpec(
        "x264", mode, sys.executable,
        f"{enc} {{in}} {{out}} {{w}} {{h}} {knob}",
        sys.executable, f"{dec} {{in}} {{out}} {{w}} {{h}}",
    )


def _main_json(argv: list[str], capsys) -> tuple[int, dict]:
    code = main(argv)
    out = capsys.readouterr().out.strip().splitlines()
    return code, json.loads(out[-1])


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory) -> str:
    path = tmp_path_factory.mktemp("corpus")
    code = main([
        "make-corpus", "--out", str(path),
        "--count", "2", "--size", "32x32", "--seed", "5", "--kind", "smooth",
    ])
    assert code == 0
    return str(path)


def test_version_flag(capsys) -> None:
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_unknown_command_exits_2(capsys) -> None:
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_make_corpus_deterministic(tmp_path, capsys) -> None:
    args = ["--count", "3", "--size", "32x32", "--seed", "9", "--kind", "mixed"]
    code_a, report = _main_json(["make-corpus", "--out", str(tmp_path / "a"), *args], capsys)
    code_b, _ = _main_json(["make-corpus", "--out", str(tmp_path / "b"), *args], capsys)
    assert code_a == code_b == 0
    assert report == {"out": str(tmp_path / "a"), "count": 3, "seed": 9, "size": "32x32"}

    names = sorted(os.listdir(tmp_path / "a"))
    assert names == ["img00.png", "img01.png", "img02.png"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        assert load_image(str(tmp_path / "a" / name)).orig_width == 32


def test_make_corpus_guards(tmp_path, capsys) -> None:
    assert main(["make-corpus", "--out", str(tmp_path), "--size", "abc"]) == 2
    assert "expected WxH" in capsys.readouterr().err
    assert main(["make-corpus", "--out", str(tmp_path), "--size", "8x8"]) == 2
    assert "at least 16x16" in capsys.readouterr().err


def test_encode_fixed_qp(corpus_dir, tmp_path, capsys) -> None:
    src = os.path.join(corpus_dir, "img00.png")
    out = str(tmp_path / "bs.bin")
    dec = str(tmp_path / "dec.png")
    code, report = _main_json(
        ["encode", "--input", src, "--output", out, "--qp", "30", "--decode-to", dec],
        capsys,
    )
    assert code == 0
    assert report["qp"] == 30
    assert report["codec"] == "refcodec"
    assert report["bits"] > 0
    assert report["bpp"] == pytest.approx(report["bits"] / 1024, rel=1e-12)
    assert math.isfinite(report["psnr"])
    assert os.path.getsize(out) == math.ceil(report["bits"] / 8)
    assert load_image(dec).orig_width == 32


def test_encode_target_bpp(corpus_dir, tmp_path, capsys) -> None:
    src = os.path.join(corpus_dir, "img01.png")
    code, report = _main_json(
        ["encode", "--input", src, "--output", str(tmp_path / "bs.bin"),
         "--target-bpp", "0.5"],
        capsys,
    )
    assert code == 0
    assert report["target_bpp"] == 0.5
    assert report["status"] in ("matched", "best_effort_at_bound")
    assert report["probes"] <= 12
    assert 0 <= report["qp"] <= 51


def test_encode_needs_a_rate_knob(corpus_dir, tmp_path, capsys) -> None:
    src = os.path.join(corpus_dir, "img00.png")
    assert main(["encode", "--input", src, "--output", str(tmp_path / "x.bin")]) == 2
    assert "either --qp or --target-bpp" in capsys.readouterr().err


def _read_rd_file(path: str) -> tuple[str, list[dict]]:
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
    return first, read_rd_csv(path)


def test_rd_run_refcodec_schema_and_means(corpus_dir, tmp_path, capsys) -> None:
    out_dir = str(tmp_path / "run")
    code, report = _main_json(
        ["rd-run", "--corpus", corpus_dir, "--out-dir", out_dir,
         "--targets", "0.3,0.6"],
        capsys,
    )
    assert code == 0
    assert report["failures"] == 0
    assert report["rows"] == 6

    schema, rows = _read_rd_file(os.path.join(out_dir, "rd_results.csv"))
    assert schema == RD_SCHEMA
    per_image = [r for r in rows if r["image_id"] != MEAN_ID]
    means = [r for r in rows if r["image_id"] == MEAN_ID]
    assert len(per_image) == 4 and len(means) == 2
    assert set(per_image[0]) == set(RD_COLUMNS)
    for row in per_image:
        assert row["codec"] == "refcodec"
        assert 0 <= row["qp"] <= 51 and row["qp"] == int(row["qp"])
        assert row["achieved_bpp"] > 0
        assert math.isfinite(row["psnr"]) and 0 < row["ssim"] <= 1
    for mean in means:
        group = [r for r in per_image if r["target_bpp"] == mean["target_bpp"]]
        assert len(group) == 2
        assert mean["psnr"] == pytest.approx(np.mean([r["psnr"] for r in group]), abs=1e-5)
        assert mean["achieved_bpp"] == pytest.approx(
            np.mean([r["achieved_bpp"] for r in group]), abs=1e-7
        )

    with open(os.path.join(out_dir, "rd_run_meta.json")) as fh:
        meta = json.load(fh)
    assert meta["yuv_range"] == "full"
    assert meta["matrix"] == "bt601"
    assert meta["subsampling"] == "420"
    assert meta["psnr_domain"] == "rgb"
    assert meta["ssim_domain"] == "luma"
    assert meta["version"] == __version__
    assert meta["n_images"] == 2 and meta["n_failures"] == 0


def test_rd_run_deterministic(corpus_dir, tmp_path, capsys) -> None:
    args = ["rd-run", "--corpus", corpus_dir, "--targets", "0.4"]
    assert main([*args, "--out-dir", str(tmp_path / "a")]) == 0
    assert main([*args, "--out-dir", str(tmp_path / "b")]) == 0
    capsys.readouterr()
    assert (tmp_path / "a" / "rd_results.csv").read_bytes() == \
        (tmp_path / "b" / "rd_results.csv").read_bytes()


def test_rd_run_external_cqp(corpus_dir, tmp_path, capsys, monkeypatch) -> None:
    monkeypatch.setitem(
        extcodec.DEFAULT_SPECS, ("x264", "cqp"), _stub_spec(tmp_path)
    )
    out_dir = str(tmp_path / "run")
    code, report = _main_json(
        ["rd-run", "--corpus", corpus_dir, "--out-dir", out_dir,
         "--codec", "x264", "--targets", "12.5"],
        capsys,
    )
    assert code == 0 and report["failures"] == 0
    _, rows = _read_rd_file(os.path.join(out_dir, "rd_results.csv"))
    per_image = [r for r in rows if r["image_id"] != MEAN_ID]
    assert len(per_image) == 2
    for row in per_image:
        assert row["codec"] == "x264"
        assert 0 <= row["qp"] <= 51
        assert row["achieved_bpp"] > 0


def test_rd_run_external_crf_reports_measured_rate(
    corpus_dir, tmp_path, capsys, monkeypatch
) -> None:
    monkeypatch.setitem(
        extcodec.DEFAULT_SPECS, ("x264", "crf"), _stub_spec(tmp_path, mode="crf")
    )
    out_dir = str(tmp_path / "run")
    code, _ = _main_json(
        ["rd-run", "--corpus", corpus_dir, "--out-dir", out_dir,
         "--codec", "x264", "--ext-mode", "crf", "--crf-list", "23,30"],
        capsys,
    )
    assert code == 0
    _, rows = _read_rd_file(os.path.join(out_dir, "rd_results.csv"))
    per_image = [r for r in rows if r["image_id"] != MEAN_ID]
    assert len(per_image) == 4
    frame_bits = (32 * 32 * 3 // 2) * 8
    for row in per_image:
        # crf has no rate target: the measured rate fills both bpp columns
        # and the crf value lands in the qp column
        assert row["qp"] in (23, 30)
        expected = (frame_bits + ((52 - row["qp"]) * 40 + 1) * 8) / 1024
        # target_bpp is stored at 6 significant digits, achieved_bpp at 8 decimals
        assert row["target_bpp"] == pytest.approx(expected, rel=5e-6)
        assert row["achieved_bpp"] == pytest.approx(expected, abs=5e-9)


def test_rd_run_failures_yield_na_rows_and_exit_1(
    corpus_dir, tmp_path, capsys, monkeypatch
) -> None:
    broken = _stub_spec(tmp_path, encoder_body="import sys\nsys.exit(9)\n")
    monkeypatch.setitem(extcodec.DEFAULT_SPECS, ("x264", "cqp"), broken)
    out_dir = str(tmp_path / "run")
    code = main([
        "rd-run", "--corpus", corpus_dir, "--out-dir", out_dir,
        "--codec", "x264", "--targets", "12.5",
    ])
    captured = capsys.readouterr()
    assert code == 1
    assert "failed" in captured.err
    assert json.loads(captured.out.strip().splitlines()[-1])["failures"] == 2

    _, rows = _read_rd_file(os.path.join(out_dir, "rd_results.csv"))
    assert all(r["image_id"] != MEAN_ID for r in rows)
    for row in rows:
        assert row["psnr"] is None and row["qp"] is None and row["achieved_bpp"] is None


def test_rd_run_argument_guards(corpus_dir, tmp_path, capsys) -> None:
    out = str(tmp_path / "o")
    assert main(["rd-run", "--corpus", corpus_dir, "--out-dir", out]) == 2
    assert "need --targets" in capsys.readouterr().err
    assert main(["rd-run", "--corpus", corpus_dir, "--out-dir", out,
                 "--codec", "x264", "--ext-mode", "crf"]) == 2
    assert "need --crf-list" in capsys.readouterr().err
    assert main(["rd-run", "--corpus", str(tmp_path / "nowhere"), "--out-dir", out,
                 "--targets", "0.3"]) == 2
    assert "not found" in capsys.readouterr().err
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["rd-run", "--corpus", str(empty), "--out-dir", out,
                 "--targets", "0.3"]) == 2
    assert "no .png/.ppm images" in capsys.readouterr().err


def test_rd_csv_round_trip(tmp_path) -> None:
    rows = [
        {"image_id": "a", "codec": "refcodec", "target_bpp": 0.3,
         "achieved_bpp": 0.29731445, "qp": 31, "psnr": 34.123456,
         "ssim": 0.951234, "mse": 2.5e-4},
        {"image_id": "b", "codec": "refcodec", "target_bpp": 0.3,
         "achieved_bpp": None, "qp": None, "psnr": None, "ssim": None, "mse": None},
    ]
    path = str(tmp_path / "rd.csv")
    write_rd_csv(path, rows)
    back = read_rd_csv(path)
    assert back[0]["psnr"] == pytest.approx(34.123456, abs=1e-6)
    assert back[0]["qp"] == 31
    assert back[1]["psnr"] is None and back[1]["qp"] is None


def _write_mean_curve(path: str, points: list[tuple[float, float]]) -> None:
    rows = [
        {"image_id": MEAN_ID, "codec": "refcodec", "target_bpp": bpp,
         "achieved_bpp": bpp, "qp": 20, "psnr": q, "ssim": min(0.99, q / 40),
         "mse": 1e-4}
        for bpp, q in points
    ]
    write_rd_csv(path, rows)


def test_bdrate_inline_points(capsys) -> None:
    anchor = "0.2:30,0.4:33,0.8:36,1.6:39"
    test = "0.1:30,0.2:33,0.4:36,0.8:39"
    for fit in ("cubic", "pchip"):
        code, report = _main_json(
            ["bdrate", "--anchor-points", anchor, "--test-points", test,
             "--metric", "psnr", "--fit", fit],
            capsys,
        )
        assert code == 0
        assert report["fit"] == fit
        assert report["higher_is_better"] is True
        assert report["n_anchor"] == report["n_test"] == 4
        assert report["bd_rate_percent"] == pytest.approx(-50.0, abs=0.01)
        assert report["bd_quality"] == pytest.approx(3.0, abs=0.01)


def test_bdrate_csv_route(tmp_path, capsys) -> None:
    a = str(tmp_path / "a.csv")
    b = str(tmp_path / "b.csv")
    _write_mean_curve(a, [(0.2, 30.0), (0.4, 33.0), (0.8, 36.0), (1.6, 39.0)])
    _write_mean_curve(b, [(0.1, 30.0), (0.2, 33.0), (0.4, 36.0), (0.8, 39.0)])
    code, report = _main_json(
        ["bdrate", "--anchor", a, "--test", b, "--metric", "psnr"], capsys
    )
    assert code == 0
    assert report["bd_rate_percent"] == pytest.approx(-50.0, abs=0.01)

    short = str(tmp_path / "short.csv")
    _write_mean_curve(short, [(0.2, 30.0), (0.4, 33.0), (0.8, 36.0)])
    assert main(["bdrate", "--anchor", short, "--test", b, "--metric", "psnr"]) == 2
    assert "need at least 4" in capsys.readouterr().err


def test_ttest_value_route(tmp_path, capsys) -> None:
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    ids = [f"img{i}" for i in range(5)]
    base = [30.0, 31.0, 29.0, 32.0, 28.0]
    a.write_text("image_id,value\n" + "".join(
        f"{i},{v + d}\n" for i, v, d in zip(ids, base, [1, 2, 3, 4, 5])
    ))
    b.write_text("image_id,value\n" + "".join(f"{i},{v}\n" for i, v in zip(ids, base)))
    code, report = _main_json(["ttest", "--a", str(a), "--b", str(b)], capsys)
    assert code == 0
    assert report["n"] == 5
    assert report["diff"]["mean"] == pytest.approx(3.0, abs=1e-12)
    assert report["t"] == pytest.approx(3.0 * math.sqrt(2.0), rel=1e-12)
    assert report["p"] == pytest.approx(0.01323559956368269, abs=1e-12)


def test_ttest_metric_route(tmp_path, capsys) -> None:
    def rd_rows(offset: float) -> list[dict]:
        return [
            {"image_id": f"img{i}", "codec": "refcodec", "target_bpp": 0.3,
             "achieved_bpp": 0.3, "qp": 30, "psnr": 30.0 + i + offset,
             "ssim": 0.9, "mse": 1e-4}
            for i in range(3)
        ]

    a = str(tmp_path / "a.csv")
    b = str(tmp_path / "b.csv")
    write_rd_csv(a, rd_rows(0.5))
    write_rd_csv(b, rd_rows(0.0))
    code, report = _main_json(
        ["ttest", "--a", a, "--b", b, "--metric", "psnr"], capsys
    )
    assert code == 0
    assert report["n"] == 3
    assert report["diff"]["mean"] == pytest.approx(0.5, abs=1e-12)

    assert main(["ttest", "--a", a, "--b", b]) == 2
    assert "pass --metric" in capsys.readouterr().err
    assert main(["ttest", "--a", a, "--b", b, "--metric", "nope"]) == 2
    assert "no column" in capsys.readouterr().err


def test_ttest_needs_two_pairs(tmp_path, capsys) -> None:
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    a.write_text("image_id,value\nimg0,1.0\n")
    b.write_text("image_id,value\nimg0,2.0\n")
    assert main(["ttest", "--a", str(a), "--b", str(b)]) == 2
    assert "only 1 paired observations" in capsys.readouterr().err


def test_optimize_writes_traces_and_summary(corpus_dir, tmp_path, capsys) -> None:
    out_dir = str(tmp_path / "opt")
    code, report = _main_json(
        ["optimize", "--corpus", corpus_dir, "--out-dir", out_dir,
         "--target-bpp", "0.4", "--steps", "3", "--save-images"],
        capsys,
    )
    assert code == 0
    assert report["images"] == 2 and report["failures"] == 0

    for image_id in ("img00", "img01"):
        trace_path = os.path.join(out_dir, f"trace_{image_id}.csv")
        with open(trace_path) as fh:
            assert fh.readline().startswith("# recompress-bench optimize-trace")
            reader = csv.DictReader(fh)
            steps = list(reader)
        assert [r["step"] for r in steps] == ["0", "1", "2"]
        assert all(float(r["loss"]) >= 0 for r in steps)
        assert all(0 <= int(r["qp"]) <= 51 for r in steps)
        assert os.path.exists(os.path.join(out_dir, f"pre_{image_id}.png"))
        assert os.path.exists(os.path.join(out_dir, f"dec_{image_id}.png"))

    with open(os.path.join(out_dir, "optimize_summary.json")) as fh:
        summary = json.load(fh)
    assert summary["config"]["steps"] == 3
    assert summary["config"]["target_bpp"] == 0.4
    assert summary["config"]["supervision"] == "slightly_compressed"
    assert len(summary["images"]) == 2
    for row in summary["images"]:
        assert math.isfinite(row["final_psnr"])
        assert row["delta_psnr"] == pytest.approx(
            row["final_psnr"] - row["baseline_psnr"], abs=1e-12
        )
    assert math.isfinite(summary["mean_delta_psnr"])


def test_optimize_grid_ablation(corpus_dir, tmp_path, capsys) -> None:
    out_dir = str(tmp_path / "grid")
    code, report = _main_json(
        ["optimize", "--corpus", corpus_dir, "--out-dir", out_dir,
         "--target-bpp", "0.4", "--steps", "2",
         "--grid", "noste:clean,ste:slight"],
        capsys,
    )
    assert code == 0 and report["configs"] == 2

    path = os.path.join(out_dir, "ablation.csv")
    with open(path) as fh:
        assert fh.readline().startswith("# recompress-bench ablation")
        rows = list(csv.DictReader(fh))
    assert [r["label"] for r in rows] == ["noste:clean", "ste:slight"]
    assert all(r["n_images"] == "2" for r in rows)
    assert all(math.isfinite(float(r["mean_psnr"])) for r in rows)


def test_optimize_grid_guards(corpus_dir, tmp_path, capsys) -> None:
    base = ["optimize", "--corpus", corpus_dir, "--out-dir", str(tmp_path / "g"),
            "--target-bpp", "0.4", "--steps", "1"]
    assert main([*base, "--grid", "noste:clean"]) == 2
    assert ">= 2 configurations" in capsys.readouterr().err
    assert main([*base, "--grid", "noste"]) == 2
    assert "expected mode:supervision" in capsys.readouterr().err


def test_missing_input_file_exits_2(tmp_path, capsys) -> None:
    assert main(["encode", "--input", str(tmp_path / "ghost.png"),
                 "--output", str(tmp_path / "o.bin"), "--qp", "30"]) == 2
    assert "error:" in capsys.readouterr().err
