"""Command-line driver: ``meshpix encode|decode|compare|bench``.

Exit codes: 0 success, 1 internal or numerical failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from pathlib import Path

import numpy as np

from .codec import PipelineError, box_downsample, decode, encode
from .config import ConfigError, load_config
from .core import GrayImage, ImageFormatError, MeshFormatError, load_image, load_mesh, save_image, save_mesh
from .metrics import compression_ratio, format_db, quality_report
from .restore import DEFAULT_SHAPE, METHODS, RestoreConfig

METHOD_ALIASES = {
    "piecewise": "piecewise",
    "vertex": "vertex_iso_rbf",
    "iso": "triangle_iso_rbf",
    "arbf": "triangle_arbf",
    **{m: m for m in METHODS},
}
BENCH_METHODS = "piecewise,triangle_iso_rbf,triangle_arbf:mq,triangle_arbf:imq"
CSV_COLUMNS = ["image", "method", "kernel", "c", "ratio", "psnr_db", "rmse", "time_s",
               "regularized_systems", "fallback_triangles"]


class UsageError(Exception):
    pass


def _read_image(path) -> GrayImage:
    if not Path(path).exists():
        raise UsageError(f"no such file: {path}")
    return load_image(path)


def _read_mesh(path):
    if not Path(path).exists():
        raise UsageError(f"no such file: {path}")
    return load_mesh(path)


def _config(args):
    return load_config(args.config, args.set or ())


def _method(name: str) -> str:
    try:
        return METHOD_ALIASES[name]
    except KeyError:
        raise UsageError(f"unknown method {name!r}") from None


def _echo_overrides(cfg, out):
    for key, value in sorted(cfg.overrides.items()):
        print(f"  override {key}={value}", file=out)


# ------------------------------------------------------------------ commands

def cmd_encode(args, out=None) -> int:
    out = out or sys.stdout
    cfg = _config(args)
    img = _read_image(args.image)
    res = encode(img, cfg)
    save_mesh(res.mesh, args.mesh)
    m = res.mesh
    print(f"vertices={m.n_vertices} triangles={m.n_triangles} "
          f"constrained={len(m.constrained_edges)} skipped_constraints={len(res.skipped_constraints)} "
          f"ratio={compression_ratio(m, img):.6f} time_s={res.seconds:.3f}", file=out)
    _echo_overrides(cfg, out)
    return 0


def _restore_cfg(args, cfg) -> RestoreConfig:
    rcfg = cfg.restore()
    if args.method is not None:
        rcfg.method = _method(args.method)
    if rcfg.method == "piecewise" and (args.kernel is not None or args.c is not None):
        raise UsageError("piecewise decoding takes no kernel or shape parameter")
    if args.kernel is not None:
        rcfg.kernel = args.kernel
        if args.c is None and "rbf.shape_c" not in cfg.overrides:
            rcfg.c = None
    if args.c is not None:
        rcfg.c = args.c
    if args.scale is not None:
        rcfg.scale = args.scale
    try:
        return rcfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_decode(args, out=None) -> int:
    out = out or sys.stdout
    cfg = _config(args)
    rcfg = _restore_cfg(args, cfg)
    mesh = _read_mesh(args.mesh)
    source = _read_image(args.tensor_from) if args.tensor_from else None
    if source is not None and (source.width, source.height) != (mesh.width, mesh.height):
        raise UsageError(f"{args.tensor_from} is {source.width}x{source.height}, "
                         f"the mesh frame is {mesh.width}x{mesh.height}")
    res = decode(mesh, cfg, source, rcfg)
    save_image(res.image, args.output)
    r = res.restored
    print(f"method={rcfg.method} kernel={rcfg.kernel} c={rcfg.shape_c:g} scale={rcfg.scale:g} "
          f"size={res.image.width}x{res.image.height} tensor={res.tensor_mode} "
          f"regularized_systems={r.regularized_systems} fallback_triangles={r.fallback_triangles} "
          f"time_s={res.seconds:.3f}", file=out)
    _echo_overrides(cfg, out)
    return 0


def difference_image(a: GrayImage, b: GrayImage) -> GrayImage:
    """|a - b| stretched so the largest difference maps to 255."""
    d = np.abs(a.data - b.data)
    top = d.max()
    return GrayImage(d * (255.0 / top) if top > 0 else d)


def _match_size(original: GrayImage, restored: GrayImage) -> GrayImage:
    if restored.shape == original.shape:
        return restored
    fy, ry = divmod(restored.height, original.height)
    fx, rx = divmod(restored.width, original.width)
    if ry or rx or fx != fy or fx < 1:
        raise UsageError(f"size mismatch: original {original.width}x{original.height}, "
                         f"restored {restored.width}x{restored.height}")
    return box_downsample(restored, fx)


def cmd_compare(args, out=None) -> int:
    out = out or sys.stdout
    original = _read_image(args.original)
    restored = _match_size(original, _read_image(args.restored))
    report = quality_report(original, restored)
    print(report.to_record(), file=out)
    if args.diff:
        save_image(difference_image(original, GrayImage(restored.quantized().astype(float))), args.diff)
    return 0


def _bench_methods(text: str):
    cells = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        name, _, kernel = item.partition(":")
        method = _method(name)
        cells.append((method, kernel or None))
    return cells


def format_table(rows) -> str:
    header = CSV_COLUMNS
    body = [[str(r[c]) for c in header] for r in rows]
    widths = [max([len(h)] + [len(b[i]) for b in body]) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)).rstrip() for b in body]
    return "\n".join(lines)


def cmd_bench(args, out=None) -> int:
    out = out or sys.stdout
    cfg = _config(args)
    cells = _bench_methods(args.methods)
    rows = []
    failures = 0
    for path in args.images:
        try:
            img = _read_image(path)
            enc = encode(img, cfg)
        except Exception as exc:  # noqa: BLE001 - reported per cell, run continues
            print(f"{path}: encode failed: {exc}", file=sys.stderr)
            failures += 1
            continue
        for method, kernel in cells:
            rcfg = cfg.restore()
            rcfg.method = method
            if kernel is not None:
                rcfg.kernel = kernel
                rcfg.c = None
            try:
                rcfg.validate()
                t = time.perf_counter()
                res = decode(enc.mesh, cfg, None if args.self_contained else img, rcfg)
                elapsed = time.perf_counter() - t
                rep = quality_report(img, res.image, enc.mesh)
            except Exception as exc:  # noqa: BLE001
                print(f"{path} {method}: decode failed: {exc}", file=sys.stderr)
                failures += 1
                continue
            piecewise = method == "piecewise"
            rows.append({
                "image": Path(path).name, "method": method,
                "kernel": "-" if piecewise else rcfg.kernel,
                "c": "-" if piecewise else f"{rcfg.shape_c:g}",
                "ratio": f"{rep.compression_ratio:.4f}", "psnr_db": format_db(rep.psnr_db),
                "rmse": f"{rep.rmse:.4f}", "time_s": f"{elapsed:.3f}",
                "regularized_systems": res.restored.regularized_systems,
                "fallback_triangles": res.restored.fallback_triangles,
            })
    print(format_table(rows), file=out)
    _echo_overrides(cfg, out)
    if args.csv:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        if args.csv == "-":
            out.write(buf.getvalue())
        else:
            Path(args.csv).write_text(buf.getvalue(), encoding="utf-8")
    return 1 if failures and not rows else 0


# -------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meshpix", description="Grayscale mesh image codec.")
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="config override (repeatable)")

    p = sub.add_parser("encode", help="image -> mesh file")
    p.add_argument("image")
    p.add_argument("mesh")
    shared(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="mesh file -> image")
    p.add_argument("mesh")
    p.add_argument("output")
    p.add_argument("--method", help="piecewise, vertex, iso, arbf or a full method name")
    p.add_argument("--kernel", choices=sorted(DEFAULT_SHAPE))
    p.add_argument("--c", type=float, help="kernel shape parameter")
    p.add_argument("--scale", type=float, help="output scale factor (>= 1)")
    p.add_argument("--tensor-from", help="original image supplying structure tensors")
    shared(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("compare", help="quality of a restored image")
    p.add_argument("original")
    p.add_argument("restored")
    p.add_argument("--diff", help="write the stretched |difference| image here")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("bench", help="encode each image, decode with every method")
    p.add_argument("images", nargs="*")
    p.add_argument("--methods", default=BENCH_METHODS,
                   help="comma list of method[:kernel] (default: %(default)s)")
    p.add_argument("--csv", help="write CSV here ('-' for stdout)")
    p.add_argument("--self-contained", action="store_true",
                   help="take ARBF tensors from a piecewise pre-decode, not the original")
    shared(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ConfigError, ImageFormatError, MeshFormatError, OSError) as exc:
        print(f"meshpix: error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"meshpix: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"meshpix: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
