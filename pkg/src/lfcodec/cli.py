"""Command-line interface.

Exit codes: 0 ok, 1 configuration error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .errors import ConfigError, DataError
from .lightfield_io import (
    CHROMA_FORMATS,
    load_grid,
    manifest_paths,
    prepare_grid,
    store_grid,
    write_ppm,
    write_yuv,
)
from .metrics import RateDistortionCurve, RdPoint, bd_metrics, similarity_csv_rows, similarity_map
from .pipeline import (
    DEFAULT_CENTRAL_OFFSET,
    DEFAULT_SEARCH_RANGE,
    EncodeJob,
    decode_lightfield,
    decode_single_view,
    encode_lightfield,
    rate_target_encode,
    read_container,
)
from .reference_graph import DEFAULT_MAX_REFS, REF_KINDS, build_graph, graph_to_csv_rows
from .scan_planner import SCAN_KINDS, mean_reference_distance, plan_scan, plan_to_csv_rows
from .synthetic import SceneParams, make_lightfield

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("lfcodec")


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors (exit 1), not argparse's exit 2
    def error(self, message):
        raise ConfigError(message)


def _on_off(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def _pair(text):
    try:
        r, c = (int(v) for v in text.lower().split("x"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected ROWSxCOLS, got {text!r}") from exc
    return r, c


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v)


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v)


def _write_rows(path, header, rows):
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if path:
            fh.close()


def _add_encode_options(p):
    p.add_argument("--qp", type=int, default=32, help="base QP (default 32)")
    p.add_argument("--central-offset", type=int, default=DEFAULT_CENTRAL_OFFSET,
                   help="QP offset of the intra anchor view")
    p.add_argument("--target-bpp", type=float, help="pick the base QP for this rate")
    p.add_argument("--parallel", action="store_true", help="encode quadrants in parallel")
    p.add_argument("--fast-depth", type=_on_off, default=False, metavar="on|off")
    p.add_argument("--scan", choices=SCAN_KINDS, default="proposed")
    p.add_argument("--refs", choices=REF_KINDS, default=None,
                   help="reference kind (default: proposed for the proposed scan, else lowdelay)")
    p.add_argument("--max-refs", type=int, default=DEFAULT_MAX_REFS)
    p.add_argument("--search-range", type=int, default=DEFAULT_SEARCH_RANGE)


def _refs_kind(args):
    if args.refs:
        return args.refs
    return "proposed" if args.scan == "proposed" else "lowdelay"


def _load(args):
    (path,) = manifest_paths([args.input])
    return prepare_grid(load_grid(path), args.chroma, select=args.select)


def cmd_encode(args):
    grid = _load(args)
    job = EncodeJob.create(
        grid, scan=args.scan, refs=_refs_kind(args), max_refs=args.max_refs,
        base_qp=args.qp, central_qp_offset=args.central_offset, fast_depth=args.fast_depth,
        parallel=args.parallel, search_range=args.search_range,
    )
    if args.target_bpp is not None:
        rt = rate_target_encode(job, args.target_bpp)
        res = rt.result
        if rt.saturated:
            log.warning("target %.4f bpp is above the QP 0 rate", args.target_bpp)
        if rt.unreachable:
            log.warning("target %.4f bpp is below the QP 51 rate", args.target_bpp)
    else:
        res = encode_lightfield(job)
    Path(args.output).write_bytes(res.data)
    print(json.dumps({"output": str(args.output), "bytes": len(res.data), "bpp": res.bpp,
                      "base_qp": res.job.base_qp, "views": len(res.views)}))
    return EXIT_OK


def cmd_decode(args):
    grid = decode_lightfield(Path(args.input).read_bytes())
    manifest = store_grid(grid, args.output)
    print(manifest)
    return EXIT_OK


def _write_picture(path, pic, grid_like):
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        if pic.planes[1].shape != pic.planes[0].shape:
            raise ConfigError("PPM output needs 4:4:4 views; use a .yuv file name")
        write_ppm(path, np.stack(pic.planes, axis=-1), grid_like.bit_depth)
    else:
        write_yuv(path, pic, grid_like.bit_depth)


def cmd_view(args):
    data = Path(args.input).read_bytes()
    pic, count = decode_single_view(data, (args.row, args.col))
    header = read_container(data).header
    _write_picture(args.output, pic, header)
    print(json.dumps({"row": args.row, "col": args.col, "views_decoded": count,
                      "output": str(args.output)}))
    return EXIT_OK


def cmd_analyze_scan(args):
    plan = plan_scan(args.scan, args.rows, args.cols)
    graph = build_graph(_refs_kind(args), plan, args.max_refs)
    refs = {i: (r, d) for i, r, d in graph_to_csv_rows(plan, graph)}
    rows = [row + refs[row[0]] for row in plan_to_csv_rows(plan)]
    _write_rows(args.output, ("coding_index", "quadrant", "row", "col", "refs", "distances"), rows)
    print(f"mean_reference_distance,{mean_reference_distance(plan, graph):.6f}", file=sys.stderr)
    return EXIT_OK


def cmd_similarity_map(args):
    smap = similarity_map(_load(args))
    _write_rows(args.output, ("row", "col", "avg_psnr_db"), similarity_csv_rows(smap))
    return EXIT_OK


def _read_rd_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "bpp" not in rows[0] or "psnr_y" not in rows[0]:
        raise DataError(f"{path}: expected an RD CSV with bpp and psnr_y columns")
    try:
        return RateDistortionCurve(tuple(RdPoint(float(r["bpp"]), float(r["psnr_y"]))
                                         for r in rows))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def cmd_bd(args):
    res = bd_metrics(_read_rd_csv(args.test), _read_rd_csv(args.anchor))
    _write_rows(None, ("bd_rate_pct", "bd_psnr_db"),
                [(f"{res['bd_rate_pct']:.4f}", f"{res['bd_psnr_db']:.4f}")])
    return EXIT_OK


def _experiment_config(args, **extra):
    datasets = list(args.datasets)
    if args.synthetic:
        datasets.append(f"{bench.SYNTHETIC_PREFIX}:{args.synthetic}")
    qps = args.qps or ()
    bpps = args.target_bpps or ()
    if not qps and not bpps:
        qps = bench.DEFAULT_QPS
    return bench.ExperimentConfig(
        datasets=datasets, qps=qps, target_bpps=bpps, fast_depth=args.fast_depth,
        parallel=args.parallel, central_qp_offset=args.central_offset,
        search_range=args.search_range, chroma_format=args.chroma, select=args.select,
        output_dir=args.output, **extra,
    )


def cmd_compare(args):
    pairs = bench.DEFAULT_PAIRS
    if args.pairs:
        pairs = [tuple(p.split(":")) if ":" in p else
                 (p, "proposed" if p == "proposed" else "lowdelay") for p in args.pairs]
    cfg = _experiment_config(args, pairs=pairs, anchor=args.anchor)
    res = bench.run_compare(cfg)
    for f in res.files:
        print(f)
    return EXIT_OK


def cmd_ablate_depth(args):
    cfg = _experiment_config(args, timing_runs=args.runs)
    res = bench.run_depth_ablation(cfg)
    for f in res.files:
        print(f)
    return EXIT_OK


def cmd_gen_synthetic(args):
    params = SceneParams(rows=args.rows, cols=args.cols, width=args.width, height=args.height,
                         bit_depth=args.bit_depth, chroma_format=args.chroma, seed=args.seed)
    grid = make_lightfield(params)
    print(store_grid(grid, args.output))
    return EXIT_OK


def _add_experiment_options(p):
    p.add_argument("datasets", nargs="*", help="manifest files or directories")
    p.add_argument("--synthetic", type=int, default=0, metavar="N",
                   help="also use N built-in synthetic light fields")
    p.add_argument("--qps", type=_ints, help="comma-separated QP ladder (default 22,27,32,37)")
    p.add_argument("--target-bpps", type=_floats, help="comma-separated target bit rates")
    p.add_argument("--fast-depth", type=_on_off, default=False, metavar="on|off")
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--central-offset", type=int, default=DEFAULT_CENTRAL_OFFSET)
    p.add_argument("--search-range", type=int, default=DEFAULT_SEARCH_RANGE)
    p.add_argument("--chroma", choices=CHROMA_FORMATS, default="422")
    p.add_argument("--select", type=_pair, help="central sub-grid ROWSxCOLS, e.g. 13x13")
    p.add_argument("-o", "--output", default="results", help="output directory")


def build_parser():
    parser = _Parser(prog="lfcodec", description="Light-field pseudo-sequence codec toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("encode", help="encode a view grid to a .lflf container")
    p.add_argument("input", help="manifest file or directory")
    p.add_argument("output", help="output .lflf file")
    p.add_argument("--chroma", choices=CHROMA_FORMATS, default="422")
    p.add_argument("--select", type=_pair, help="central sub-grid ROWSxCOLS, e.g. 13x13")
    _add_encode_options(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a container to a view directory")
    p.add_argument("input")
    p.add_argument("output", help="output directory (manifest.txt plus views)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("view", help="decode a single view")
    p.add_argument("input")
    p.add_argument("row", type=int)
    p.add_argument("col", type=int)
    p.add_argument("output", help=".yuv or (4:4:4 only) .ppm file")
    p.set_defaults(func=cmd_view)

    p = sub.add_parser("analyze-scan", help="print a scan plan and its reference distances")
    p.add_argument("--rows", type=int, default=13)
    p.add_argument("--cols", type=int, default=13)
    p.add_argument("--scan", choices=SCAN_KINDS, default="proposed")
    p.add_argument("--refs", choices=REF_KINDS, default=None)
    p.add_argument("--max-refs", type=int, default=DEFAULT_MAX_REFS)
    p.add_argument("-o", "--output", help="CSV file (default stdout)")
    p.set_defaults(func=cmd_analyze_scan)

    p = sub.add_parser("similarity-map", help="mean Y-PSNR of each view against all others")
    p.add_argument("input")
    p.add_argument("--chroma", choices=CHROMA_FORMATS, default="444")
    p.add_argument("--select", type=_pair)
    p.add_argument("-o", "--output", help="CSV file (default stdout)")
    p.set_defaults(func=cmd_similarity_map)

    p = sub.add_parser("bd", help="Bjontegaard deltas between two RD CSV files")
    p.add_argument("test")
    p.add_argument("anchor")
    p.set_defaults(func=cmd_bd)

    p = sub.add_parser("compare", help="scan-order comparison with a BD table")
    _add_experiment_options(p)
    p.add_argument("--anchor", default="zigzag")
    p.add_argument("--pairs", nargs="+", metavar="SCAN[:REFS]",
                   help="(scan, refs) pairs, default: all five scans")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ablate-depth", help="fast depth decision vs full search")
    _add_experiment_options(p)
    p.add_argument("--runs", type=int, default=3, help="timing repetitions (median)")
    p.set_defaults(func=cmd_ablate_depth)

    p = sub.add_parser("gen-synthetic", help="write a synthetic light field")
    p.add_argument("output", help="output directory")
    p.add_argument("--rows", type=int, default=9)
    p.add_argument("--cols", type=int, default=9)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--bit-depth", type=int, choices=(8, 10), default=8)
    p.add_argument("--chroma", choices=CHROMA_FORMATS, default="422")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        print(f"lfcodec: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"lfcodec: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"lfcodec: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # anything else is a bug
        log.exception("internal error")
        print(f"lfcodec: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
