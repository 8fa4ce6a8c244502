"""Command-line front end.

Subcommands: ``encode`` (one image through the reference codec), ``rd-run``
(rate-distortion sweeps over a corpus, CSV out), ``bdrate`` (Bjontegaard
comparison of two result sets), ``ttest`` (paired significance test),
``optimize`` (per-image preprocessing), and ``make-corpus`` (deterministic
synthetic test images).

Exit codes: 0 success, 1 partial failure (some rows failed but output was
written), 2 usage or input errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__, bdstats, extcodec, metrics, optimizer, ratecontrol, refcodec
from .bdstats import PairedSample, RdCurve, bd_quality, bd_rate, paired_t_test, summarize
from .diffproxy import CodecCondition, CodecId, ComposeMode
from .optimizer import OptimizeConfig, Supervision
from .pixelcore import (
    ImageFormatError,
    PlanarImage,
    from_rgb_array,
    load_image,
    rgb_to_ycbcr420,
    save_image,
    ycbcr420_to_rgb,
)

RD_SCHEMA = "# recompress-bench rd-results v1"
RD_COLUMNS = ("image_id", "codec", "target_bpp", "achieved_bpp", "qp", "psnr", "ssim", "mse")
ABLATION_SCHEMA = "# recompress-bench ablation v1"
TRACE_SCHEMA = "# recompress-bench optimize-trace v1"
MEAN_ID = "MEAN"

RUN_METADATA = {
    "yuv_range": "full",
    "matrix": "bt601",
    "subsampling": "420",
    "psnr_domain": "rgb",
    "ssim_domain": "luma",
}


class CliError(Exception):
    """Bad arguments or unusable input; maps to exit code 2."""


def _fmt(value, spec: str) -> str:
    if value is None:
        return ""
    v = float(value)
    if math.isinf(v) or math.isnan(v):
        return str(v)
    return format(v, spec)


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


# ---------------------------------------------------------------------------
# corpus handling

IMAGE_EXTS = (".png", ".ppm")


def _load_corpus(directory: str) -> list[tuple[str, PlanarImage]]:
    if not os.path.isdir(directory):
        raise CliError(f"corpus directory not found: {directory}")
    names = sorted(
        f for f in os.listdir(directory) if f.lower().endswith(IMAGE_EXTS)
    )
    if not names:
        raise CliError(f"no {'/'.join(IMAGE_EXTS)} images in {directory}")
    corpus = []
    for name in names:
        image_id = os.path.splitext(name)[0]
        corpus.append((image_id, load_image(os.path.join(directory, name))))
    return corpus


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"could not parse {what}: {text!r}") from None
    if not vals:
        raise CliError(f"empty {what}")
    return vals


def _parse_ints(text: str, what: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise CliError(f"could not parse {what}: {text!r}") from None
    if not vals:
        raise CliError(f"empty {what}")
    return vals


# ---------------------------------------------------------------------------
# encode


def _cmd_encode(args) -> int:
    img = load_image(args.input)
    ycc = rgb_to_ycbcr420(img)
    report = {"input": args.input, "output": args.output, "codec": "refcodec"}
    if args.target_bpp is not None:
        res = ratecontrol.solve_qp(
            ycc, refcodec.encoded_bits, args.target_bpp, args.tolerance
        )
        qp = res.qp
        report.update(
            target_bpp=args.target_bpp, status=res.status.value, probes=res.probes
        )
    elif args.qp is not None:
        qp = args.qp
    else:
        raise CliError("encode needs either --qp or --target-bpp")
    bs = refcodec.encode(ycc, qp)
    with open(args.output, "wb") as fh:
        fh.write(bs.to_bytes())
    decoded = refcodec.decode(bs)
    decoded_rgb = ycbcr420_to_rgb(decoded)
    if args.decode_to:
        save_image(decoded_rgb, args.decode_to)
    report.update(
        qp=qp,
        bits=bs.bit_count,
        bpp=bs.bit_count / ycc.luma_area,
        psnr=metrics.psnr(img, decoded_rgb),
    )
    _emit(report)
    return 0


# ---------------------------------------------------------------------------
# rd-run


def _rd_point_refcodec(image_id, rgb, ycc, target, tolerance):
    res = ratecontrol.solve_qp(ycc, refcodec.encoded_bits, target, tolerance)
    decoded = refcodec.decode(refcodec.encode(ycc, res.qp))
    decoded_rgb = ycbcr420_to_rgb(decoded)
    return {
        "image_id": image_id,
        "codec": "refcodec",
        "target_bpp": target,
        "achieved_bpp": res.achieved_bpp,
        "qp": res.qp,
        "psnr": metrics.psnr(rgb, decoded_rgb),
        "ssim": metrics.ssim(rgb, decoded_rgb),
        "mse": metrics.mse(rgb, decoded_rgb),
    }


def _rd_point_external(image_id, rgb, ycc, spec, target, tolerance):
    if spec.mode == "crf":
        result = extcodec.run_encoder(spec, ycc, int(target))
        measured = ratecontrol.measured_bpp_feedback(
            result.bits, ycc.orig_width, ycc.orig_height
        )
        decoded_rgb = ycbcr420_to_rgb(result.decoded)
        return {
            "image_id": image_id,
            "codec": spec.codec_id,
            "target_bpp": measured,
            "achieved_bpp": measured,
            "qp": int(target),
            "psnr": metrics.psnr(rgb, decoded_rgb),
            "ssim": metrics.ssim(rgb, decoded_rgb),
            "mse": metrics.mse(rgb, decoded_rgb),
        }
    res = ratecontrol.solve_qp(
        ycc,
        lambda im, q: extcodec.external_bits(spec, im, q),
        target,
        tolerance,
        monotone=False,
    )
    result = extcodec.run_encoder(spec, ycc, res.qp)
    decoded_rgb = ycbcr420_to_rgb(result.decoded)
    return {
        "image_id": image_id,
        "codec": spec.codec_id,
        "target_bpp": target,
        "achieved_bpp": res.achieved_bpp,
        "qp": res.qp,
        "psnr": metrics.psnr(rgb, decoded_rgb),
        "ssim": metrics.ssim(rgb, decoded_rgb),
        "mse": metrics.mse(rgb, decoded_rgb),
    }


def _format_rd_row(row: dict) -> list[str]:
    return [
        row["image_id"],
        row["codec"],
        _fmt(row.get("target_bpp"), ".6g"),
        _fmt(row.get("achieved_bpp"), ".8f"),
        _fmt(row.get("qp"), ".2f") if isinstance(row.get("qp"), float)
        else ("" if row.get("qp") is None else str(row["qp"])),
        _fmt(row.get("psnr"), ".6f"),
        _fmt(row.get("ssim"), ".6f"),
        _fmt(row.get("mse"), ".8e"),
    ]


def write_rd_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(RD_SCHEMA + "\n")
        writer = csv.writer(fh)
        writer.writerow(RD_COLUMNS)
        for row in rows:
            writer.writerow(_format_rd_row(row))


def read_rd_csv(path: str) -> list[dict]:
    """Read an rd-results CSV back into typed rows."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    rows = []
    for raw in reader:
        row = dict(raw)
        for key in ("target_bpp", "achieved_bpp", "qp", "psnr", "ssim", "mse"):
            if row.get(key):
                row[key] = float(row[key])
            else:
                row[key] = None
        rows.append(row)
    return rows


def _mean_rows(rows: list[dict]) -> list[dict]:
    groups: dict[tuple, list[dict]] = {}
    order = []
    for row in rows:
        key = (row["codec"], row["_group"])
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(row)
    means = []
    for key in order:
        ok = [r for r in groups[key] if r.get("psnr") is not None]
        if not ok:
            continue
        means.append({
            "image_id": MEAN_ID,
            "codec": key[0],
            "target_bpp": float(np.mean([r["target_bpp"] for r in ok])),
            "achieved_bpp": float(np.mean([r["achieved_bpp"] for r in ok])),
            "qp": float(np.mean([r["qp"] for r in ok])),
            "psnr": float(np.mean([r["psnr"] for r in ok])),
            "ssim": float(np.mean([r["ssim"] for r in ok])),
            "mse": float(np.mean([r["mse"] for r in ok])),
        })
    return means


def _cmd_rd_run(args) -> int:
    corpus = _load_corpus(args.corpus)
    os.makedirs(args.out_dir, exist_ok=True)
    codecs = [c.strip() for c in args.codec.split(",") if c.strip()]
    jobs = []
    for codec in codecs:
        if codec == "refcodec":
            if not args.targets:
                raise CliError("refcodec runs need --targets")
            rates = _parse_floats(args.targets, "--targets")
            for rate in rates:
                for image_id, rgb in corpus:
                    jobs.append((codec, rate, image_id, rgb, None))
        else:
            if args.ext_mode == "crf":
                if not args.crf_list:
                    raise CliError("crf-mode runs need --crf-list")
                rates = [float(c) for c in _parse_ints(args.crf_list, "--crf-list")]
            else:
                if not args.targets:
                    raise CliError("cqp-mode runs need --targets")
                rates = _parse_floats(args.targets, "--targets")
            spec = extcodec.default_spec(codec, args.ext_mode)
            for rate in rates:
                for image_id, rgb in corpus:
                    jobs.append((codec, rate, image_id, rgb, spec))

    failures = []

    def run_job(job):
        codec, rate, image_id, rgb, spec = job
        ycc = rgb_to_ycbcr420(rgb)
        if spec is None:
            row = _rd_point_refcodec(image_id, rgb, ycc, rate, args.tolerance)
        else:
            row = _rd_point_external(image_id, rgb, ycc, spec, rate, args.tolerance)
        return row

    rows = []
    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        for job, outcome in zip(jobs, pool.map(_guard(run_job), jobs)):
            codec, rate, image_id, _, _ = job
            if isinstance(outcome, Exception):
                failures.append((image_id, codec, rate, outcome))
                print(
                    f"rd-run: {codec} @ {rate} on {image_id} failed: {outcome}",
                    file=sys.stderr,
                )
                rows.append({
                    "image_id": image_id, "codec": codec, "target_bpp": rate,
                    "achieved_bpp": None, "qp": None,
                    "psnr": None, "ssim": None, "mse": None, "_group": rate,
                })
            else:
                outcome["_group"] = rate
                rows.append(outcome)

    rows.sort(key=lambda r: (r["codec"], r["_group"], r["image_id"]))
    all_rows = rows + _mean_rows(rows)
    for row in all_rows:
        row.pop("_group", None)
    csv_path = os.path.join(args.out_dir, "rd_results.csv")
    write_rd_csv(csv_path, all_rows)
    meta = dict(RUN_METADATA)
    meta.update(
        version=__version__, seed=args.seed, corpus=os.path.abspath(args.corpus),
        codecs=codecs, tolerance=args.tolerance,
        n_images=len(corpus), n_failures=len(failures),
    )
    with open(os.path.join(args.out_dir, "rd_run_meta.json"), "w") as fh:
        json.dump(meta, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _emit({"csv": csv_path, "rows": len(all_rows), "failures": len(failures)})
    return 1 if failures else 0


def _guard(fn):
    def wrapped(job):
        try:
            return fn(job)
        except Exception as exc:  # noqa: BLE001 - forwarded to the caller
            return exc

    return wrapped


# ---------------------------------------------------------------------------
# bdrate


def _curve_from_args(path, points_text, metric, codec):
    if points_text:
        pts = []
        for chunk in points_text.split(","):
            b, q = chunk.split(":")
            pts.append((float(b), float(q)))
        return RdCurve(tuple(pts), metrics.higher_is_better(metric), metric)
    rows = [r for r in read_rd_csv(path) if r["image_id"] == MEAN_ID]
    if codec:
        rows = [r for r in rows if r["codec"] == codec]
    if metric not in RD_COLUMNS:
        raise CliError(f"metric {metric!r} is not a column of {path}")
    pts = sorted(
        (r["achieved_bpp"], r[metric]) for r in rows if r[metric] is not None
    )
    if len(pts) < 4:
        raise CliError(
            f"{path}: found {len(pts)} usable mean rows, need at least 4"
        )
    return RdCurve(tuple(pts), metrics.higher_is_better(metric), metric)


def _cmd_bdrate(args) -> int:
    anchor = _curve_from_args(args.anchor, args.anchor_points, args.metric, args.codec)
    test = _curve_from_args(args.test, args.test_points, args.metric, args.codec)
    rate = bd_rate(anchor, test, args.fit)
    quality = bd_quality(anchor, test, args.fit)
    _emit({
        "metric": args.metric,
        "fit": args.fit,
        "bd_rate_percent": rate,
        "bd_quality": quality,
        "higher_is_better": anchor.higher_is_better,
        "n_anchor": len(anchor.points),
        "n_test": len(test.points),
    })
    return 0


# ---------------------------------------------------------------------------
# ttest


def _read_paired_values(path: str, metric: str | None) -> dict[str, float]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    fields = reader.fieldnames or []
    out: dict[str, float] = {}
    if "value" in fields:
        for row in reader:
            if row.get("value"):
                out[row["image_id"]] = float(row["value"])
        return out
    if not metric:
        raise CliError(f"{path} has no 'value' column; pass --metric to pick one")
    if metric not in fields:
        raise CliError(f"{path} has no column {metric!r}")
    for row in reader:
        if row["image_id"] == MEAN_ID or not row.get(metric):
            continue
        key = "|".join(
            row.get(k, "") or "" for k in ("image_id", "codec", "target_bpp")
        )
        out[key] = float(row[metric])
    return out


def _cmd_ttest(args) -> int:
    va = _read_paired_values(args.a, args.metric)
    vb = _read_paired_values(args.b, args.metric)
    keys = sorted(set(va) & set(vb))
    if len(keys) < 2:
        raise CliError(
            f"only {len(keys)} paired observations between {args.a} and {args.b}"
        )
    sample = PairedSample(
        tuple(keys), tuple(va[k] for k in keys), tuple(vb[k] for k in keys)
    )
    t, p = paired_t_test(sample)
    sa = summarize(sample.a)
    sb = summarize(sample.b)
    diff = summarize([x - y for x, y in zip(sample.a, sample.b)])
    _emit({
        "n": len(keys),
        "t": t,
        "p": p,
        "a": {"mean": sa.mean, "sd": sa.sd},
        "b": {"mean": sb.mean, "sd": sb.sd},
        "diff": {"mean": diff.mean, "sd": diff.sd},
    })
    return 0


# ---------------------------------------------------------------------------
# optimize


def _cmd_optimize(args) -> int:
    corpus = _load_corpus(args.corpus)
    os.makedirs(args.out_dir, exist_ok=True)
    target = CodecCondition.target_bpp(CodecId.REFCODEC, args.target_bpp)

    def build_cfg(mode: str, supervision: str) -> OptimizeConfig:
        return OptimizeConfig(
            target=target,
            steps=args.steps,
            step_size=args.step_size,
            mode=ComposeMode(mode),
            supervision=Supervision(
                "slightly_compressed" if supervision in ("slight", "slightly_compressed")
                else supervision
            ),
            re_solve_qp_every=args.resolve_every,
            tolerance=args.tolerance,
        )

    if args.grid:
        combos = []
        for chunk in args.grid.split(","):
            try:
                mode, supervision = chunk.strip().split(":")
            except ValueError:
                raise CliError(f"bad --grid entry {chunk!r}, expected mode:supervision") from None
            combos.append((chunk.strip(), build_cfg(mode, supervision)))
        rows = optimizer.ablation_run(corpus, combos)
        path = os.path.join(args.out_dir, "ablation.csv")
        with open(path, "w", newline="") as fh:
            fh.write(ABLATION_SCHEMA + "\n")
            writer = csv.writer(fh)
            writer.writerow(("label", "n_images", "mean_psnr", "mean_bpp", "mean_final_loss"))
            for row in rows:
                writer.writerow((
                    row.label, row.n_images,
                    _fmt(row.mean_psnr, ".6f"), _fmt(row.mean_bpp, ".8f"),
                    _fmt(row.mean_final_loss, ".8e"),
                ))
        _emit({"ablation_csv": path, "configs": len(rows)})
        return 0

    cfg = build_cfg(args.mode, args.supervision)
    failures = 0
    per_image = []

    def run_one(item):
        image_id, rgb = item
        trace = optimizer.optimize_preprocess(rgb, cfg)
        base = optimizer.identity_baseline(rgb, target, args.tolerance)
        return image_id, trace, base

    with ThreadPoolExecutor(max_workers=args.workers) as pool:
        results = list(pool.map(_guard(run_one), corpus))
    for item, outcome in zip(corpus, results):
        if isinstance(outcome, Exception):
            failures += 1
            print(f"optimize: {item[0]} failed: {outcome}", file=sys.stderr)
            continue
        image_id, trace, base = outcome
        trace_path = os.path.join(args.out_dir, f"trace_{image_id}.csv")
        with open(trace_path, "w", newline="") as fh:
            fh.write(TRACE_SCHEMA + "\n")
            writer = csv.writer(fh)
            writer.writerow(("step", "loss", "qp"))
            for i, (loss, qp) in enumerate(zip(trace.losses, trace.qp_history)):
                writer.writerow((i, _fmt(loss, ".8e"), qp))
        if args.save_images:
            save_image(
                ycbcr420_to_rgb(trace.preprocessed),
                os.path.join(args.out_dir, f"pre_{image_id}.png"),
            )
            save_image(trace.decoded, os.path.join(args.out_dir, f"dec_{image_id}.png"))
        per_image.append({
            "image_id": image_id,
            "final_psnr": trace.final_psnr,
            "final_bpp": trace.final_bpp,
            "final_qp": trace.final_qp,
            "baseline_psnr": base.psnr,
            "baseline_bpp": base.bpp,
            "baseline_qp": base.qp,
            "delta_psnr": trace.final_psnr - base.psnr,
            "final_loss": trace.losses[-1],
        })
    summary = {
        "config": {
            "target_bpp": args.target_bpp,
            "steps": cfg.steps,
            "step_size": cfg.step_size,
            "mode": cfg.mode.value,
            "supervision": cfg.supervision.value,
            "re_solve_qp_every": cfg.re_solve_qp_every,
            "tolerance": cfg.tolerance,
        },
        "images": per_image,
        "n_failures": failures,
    }
    if per_image:
        summary["mean_final_psnr"] = float(np.mean([r["final_psnr"] for r in per_image]))
        summary["mean_baseline_psnr"] = float(np.mean([r["baseline_psnr"] for r in per_image]))
        summary["mean_delta_psnr"] = float(np.mean([r["delta_psnr"] for r in per_image]))
    path = os.path.join(args.out_dir, "optimize_summary.json")
    with open(path, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    _emit({"summary": path, "images": len(per_image), "failures": failures})
    return 1 if failures else 0


# ---------------------------------------------------------------------------
# make-corpus


def _synth_image(rng: np.random.Generator, kind: str, width: int, height: int) -> np.ndarray:
    from scipy.ndimage import gaussian_filter

    if kind == "noise":
        return rng.uniform(0.0, 1.0, size=(height, width, 3))
    if kind == "smooth":
        base = rng.uniform(0.0, 1.0, size=(height, width, 3))
        out = np.empty_like(base)
        for c in range(3):
            out[:, :, c] = gaussian_filter(base[:, :, c], sigma=min(width, height) / 12.0)
        lo, hi = out.min(), out.max()
        return (out - lo) / (hi - lo) if hi > lo else np.full_like(out, 0.5)
    # "mixed": smooth background with a few hard-edged rectangles
    img = _synth_image(rng, "smooth", width, height)
    for _ in range(6):
        x0 = int(rng.integers(0, width - 4))
        y0 = int(rng.integers(0, height - 4))
        x1 = int(rng.integers(x0 + 2, min(width, x0 + width // 3) + 1))
        y1 = int(rng.integers(y0 + 2, min(height, y0 + height // 3) + 1))
        img[y0:y1, x0:x1] = rng.uniform(0.0, 1.0, size=3)
    return img


def _cmd_make_corpus(args) -> int:
    try:
        w, h = (int(v) for v in args.size.lower().split("x"))
    except ValueError:
        raise CliError(f"bad --size {args.size!r}, expected WxH") from None
    if w < 16 or h < 16:
        raise CliError("corpus images must be at least 16x16")
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    kinds = {"smooth": ["smooth"], "noise": ["noise"], "mixed": ["smooth", "mixed", "noise"]}
    cycle = kinds[args.kind]
    paths = []
    for i in range(args.count):
        kind = cycle[i % len(cycle)]
        arr = _synth_image(rng, kind, w, h)
        img = from_rgb_array(arr)
        path = os.path.join(args.out, f"img{i:02d}.png")
        save_image(img, path)
        paths.append(path)
    _emit({"out": args.out, "count": len(paths), "seed": args.seed, "size": args.size})
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recompress-bench",
        description="Recompression-aware rate-distortion toolkit",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="encode one image with the reference codec")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--qp", type=int)
    p.add_argument("--target-bpp", type=float)
    p.add_argument("--tolerance", type=float, default=0.05)
    p.add_argument("--decode-to", help="also write the decoded image here")
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("rd-run", help="rate-distortion sweep over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--codec", default="refcodec", help="comma list: refcodec,x264,x265,vvenc")
    p.add_argument("--targets", help="comma list of target bpp values")
    p.add_argument("--crf-list", help="comma list of crf values (external crf mode)")
    p.add_argument("--ext-mode", choices=("cqp", "crf"), default="cqp")
    p.add_argument("--tolerance", type=float, default=0.05)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_rd_run)

    p = sub.add_parser("bdrate", help="Bjontegaard comparison of two result sets")
    p.add_argument("--anchor", help="rd-results CSV for the anchor")
    p.add_argument("--test", help="rd-results CSV for the test codec")
    p.add_argument("--anchor-points", help="inline curve: bpp:quality,bpp:quality,...")
    p.add_argument("--test-points", help="inline curve, same format")
    p.add_argument("--metric", default="psnr")
    p.add_argument("--codec", help="filter mean rows by codec id")
    p.add_argument("--fit", choices=bdstats.FIT_METHODS, default="cubic")
    p.set_defaults(func=_cmd_bdrate)

    p = sub.add_parser("ttest", help="paired two-sided t-test between result sets")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--metric", help="column to compare when reading rd-results CSVs")
    p.set_defaults(func=_cmd_ttest)

    p = sub.add_parser("optimize", help="per-image preprocessing optimization")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--target-bpp", type=float, required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--step-size", type=float, default=0.05)
    p.add_argument("--mode", choices=("noste", "ste"), default="noste")
    p.add_argument(
        "--supervision", choices=("clean", "slight", "slightly_compressed"),
        default="slight",
    )
    p.add_argument("--resolve-every", type=int, default=10)
    p.add_argument("--tolerance", type=float, default=0.05)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--grid", help="ablation: comma list of mode:supervision combos")
    p.add_argument("--save-images", action="store_true")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("make-corpus", help="write deterministic synthetic images")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--size", default="96x96")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kind", choices=("smooth", "noise", "mixed"), default="mixed")
    p.set_defaults(func=_cmd_make_corpus)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ImageFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
