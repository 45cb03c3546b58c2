"""Experiment harness: scan-order comparison and fast-depth ablation.

Both experiments write plain CSV files into the configured output
directory. Everything except the timing columns is a deterministic
function of the configuration and the input data.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .lightfield_io import load_grid, manifest_paths, prepare_grid, select_center
from .metrics import RateDistortionCurve, RdPoint, bd_psnr, bd_rate, grid_quality
from .pipeline import (
    DEFAULT_CENTRAL_OFFSET,
    DEFAULT_SEARCH_RANGE,
    EncodeJob,
    encode_lightfield,
    rate_target_encode,
    time_report,
)
from .reference_graph import REF_KINDS
from .scan_planner import SCAN_KINDS
from .synthetic import synthetic_suite

log = logging.getLogger(__name__)

DEFAULT_TARGET_BPPS = (0.75, 0.1, 0.02, 0.005)
DEFAULT_QPS = (22, 27, 32, 37)
DEFAULT_PAIRS = (
    ("proposed", "proposed"),
    ("serpentine", "lowdelay"),
    ("raster", "lowdelay"),
    ("spiral", "lowdelay"),
    ("zigzag", "lowdelay"),
)
SYNTHETIC_PREFIX = "synthetic"


@dataclass
class ExperimentConfig:
    """What to encode and how.

    ``datasets`` holds manifest paths (or directories containing
    ``manifest.txt``); the entry ``synthetic:N`` stands for the first N light
    fields of the built-in synthetic suite. Rate points are either a QP
    ladder (``qps``) or a list of target bit rates (``target_bpps``).
    """

    datasets: tuple = ()
    pairs: tuple = DEFAULT_PAIRS  # (scan kind, reference kind)
    qps: tuple = ()
    target_bpps: tuple = ()
    anchor: str = "zigzag"
    fast_depth: bool = False
    parallel: bool = False
    central_qp_offset: int = DEFAULT_CENTRAL_OFFSET
    search_range: int = DEFAULT_SEARCH_RANGE
    chroma_format: str = "422"
    select: tuple = None  # (rows, cols) central selection
    output_dir: str = "results"
    timing_runs: int = 3
    synthetic: dict = field(default_factory=dict)  # overrides for synthetic content

    def __post_init__(self):
        self.datasets = tuple(self.datasets)
        self.pairs = tuple(tuple(p) for p in self.pairs)
        self.qps = tuple(int(q) for q in self.qps)
        self.target_bpps = tuple(float(b) for b in self.target_bpps)
        if not self.datasets:
            raise ConfigError("at least one dataset is required")
        if not self.qps and not self.target_bpps:
            raise ConfigError("at least one rate point (QP or target bpp) is required")
        if self.qps and self.target_bpps:
            raise ConfigError("give either a QP ladder or target bit rates, not both")
        if any(not 0 <= q <= 51 for q in self.qps):
            raise ConfigError("QPs must lie in [0, 51]")
        if any(not b > 0 for b in self.target_bpps):
            raise ConfigError("target bit rates must be positive")
        if not self.pairs:
            raise ConfigError("at least one (scan, refs) pair is required")
        for scan, refs in self.pairs:
            if scan not in SCAN_KINDS:
                raise ConfigError(f"unknown scan kind {scan!r}")
            if refs not in REF_KINDS:
                raise ConfigError(f"unknown reference kind {refs!r}")
        if self.timing_runs < 1:
            raise ConfigError("timing_runs must be at least 1")

    @property
    def rate_points(self):
        if self.qps:
            return [("qp", q) for q in self.qps]
        return [("bpp", b) for b in self.target_bpps]


def pair_label(pair):
    scan, refs = pair
    return scan if (scan == "proposed") == (refs == "proposed") else f"{scan}+{refs}"


def _anchor_pair(cfg):
    for p in cfg.pairs:
        if p[0] == cfg.anchor or pair_label(p) == cfg.anchor:
            return p
    return None


def load_datasets(cfg):
    """``[(name, grid)]`` for every dataset entry of ``cfg``, preprocessed."""
    out = []
    for entry in cfg.datasets:
        text = str(entry)
        if text.startswith(SYNTHETIC_PREFIX):
            _, _, count = text.partition(":")
            try:
                n = int(count or 3)
            except ValueError as exc:
                raise ConfigError(f"bad synthetic dataset spec {text!r}") from exc
            overrides = dict(cfg.synthetic)
            overrides.setdefault("chroma_format", cfg.chroma_format)
            for k, g in enumerate(synthetic_suite(n, **overrides)):
                if cfg.select is not None:
                    g = select_center(g, *cfg.select)
                out.append((f"synthetic{k}", g))
            continue
        (path,) = manifest_paths([text])
        grid = prepare_grid(load_grid(path), cfg.chroma_format, select=cfg.select)
        out.append((path.parent.name or path.stem, grid))
    return out


def _job(cfg, grid, pair, fast_depth=None, parallel=None):
    scan, refs = pair
    return EncodeJob.create(
        grid,
        scan=scan,
        refs=refs,
        central_qp_offset=cfg.central_qp_offset,
        search_range=cfg.search_range,
        fast_depth=cfg.fast_depth if fast_depth is None else fast_depth,
        parallel=cfg.parallel if parallel is None else parallel,
    )


def rd_curve(cfg, grid, job):
    """Encode ``job`` at every rate point of ``cfg``; returns (curve, rows)."""
    points, rows = [], []
    for kind, value in cfg.rate_points:
        if kind == "qp":
            res, qp = encode_lightfield(replace(job, base_qp=value)), value
        else:
            rt = rate_target_encode(job, value)
            res, qp = rt.result, rt.qp
        p, s = grid_quality(grid, res.recon_grid())
        points.append(RdPoint(res.bpp, p, s))
        rows.append((kind, value, qp, res.bpp, p, s))
    return RateDistortionCurve(tuple(points)), rows


def _bd(test, anchor):
    """BD-rate (%) and BD-PSNR (dB); NaN when the curves cannot be compared."""
    try:
        return bd_rate(test, anchor), bd_psnr(test, anchor)
    except Exception as exc:  # DataError from degenerate or disjoint curves
        log.warning("BD metrics unavailable: %s", exc)
        return float("nan"), float("nan")


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _fmt(x, digits):
    return "nan" if x != x else f"{x:.{digits}f}"


def _rd_rows(rows):
    return [(k, v, qp, _fmt(b, 6), _fmt(p, 4), _fmt(s, 6)) for k, v, qp, b, p, s in rows]


RD_HEADER = ("rate_kind", "rate_value", "qp", "bpp", "psnr_y", "ssim_y")


@dataclass
class CompareResult:
    curves: dict  # (dataset, label) -> RateDistortionCurve
    bd: dict  # (dataset, label) -> (bd_rate_pct, bd_psnr_db)
    files: list


def run_compare(cfg, datasets=None):
    """Encode every dataset under every (scan, refs) pair; BD table vs the anchor.

    ``datasets`` may supply preloaded ``[(name, grid)]`` instead of loading
    ``cfg.datasets``. With a single pair only the RD CSVs are written.
    """
    datasets = load_datasets(cfg) if datasets is None else datasets
    out = Path(cfg.output_dir)
    curves, files = {}, []
    for name, grid in datasets:
        for pair in cfg.pairs:
            label = pair_label(pair)
            log.info("compare: %s %s", name, label)
            curve, rows = rd_curve(cfg, grid, _job(cfg, grid, pair))
            curves[name, label] = curve
            files.append(_write_csv(out / f"rd_{name}_{label}.csv", RD_HEADER, _rd_rows(rows)))
    bd = {}
    anchor = _anchor_pair(cfg)
    if len(cfg.pairs) > 1:
        if anchor is None:
            raise ConfigError(f"anchor {cfg.anchor!r} is not one of the compared pairs")
        alabel = pair_label(anchor)
        labels = [pair_label(p) for p in cfg.pairs if p != anchor]
        table = []
        for name, _ in datasets:
            row = [name]
            for label in labels:
                bd[name, label] = _bd(curves[name, label], curves[name, alabel])
                row += [_fmt(bd[name, label][0], 4), _fmt(bd[name, label][1], 4)]
            table.append(row)
        avg = ["average"]
        for label in labels:
            vals = np.array([bd[name, label] for name, _ in datasets])
            avg += [_fmt(float(vals[:, 0].mean()), 4), _fmt(float(vals[:, 1].mean()), 4)]
        table.append(avg)
        header = ["dataset"]
        for label in labels:
            header += [f"{label}_bd_rate_pct", f"{label}_bd_psnr_db"]
        files.append(_write_csv(out / f"bd_vs_{alabel}.csv", header, table))
    return CompareResult(curves, bd, files)


@dataclass
class AblationResult:
    rows: list  # per dataset dicts
    files: list


def run_depth_ablation(cfg, datasets=None, pair=("proposed", "proposed")):
    """Fast depth decision vs full search, with the three timing configurations.

    RD curves of serial full search and serial fast depth give BD metrics
    (the parallel arm produces the same bits, which the timing run checks).
    Timing uses the middle rate point of the ladder.
    """
    datasets = load_datasets(cfg) if datasets is None else datasets
    out = Path(cfg.output_dir)
    files, results = [], []
    for name, grid in datasets:
        log.info("ablation: %s", name)
        base = _job(cfg, grid, pair, fast_depth=False, parallel=False)
        full, rows_full = rd_curve(cfg, grid, base)
        fast, rows_fast = rd_curve(cfg, grid, replace(base, fast_depth=True))
        files.append(_write_csv(out / f"rd_{name}_full.csv", RD_HEADER, _rd_rows(rows_full)))
        files.append(_write_csv(out / f"rd_{name}_fastdepth.csv", RD_HEADER, _rd_rows(rows_fast)))
        if len(full.points) >= 4:
            bdr, bdp = _bd(fast, full)
        else:
            bdr = bdp = float("nan")
        mid = rows_full[len(rows_full) // 2][2]
        timing = time_report(replace(base, base_qp=mid), runs=cfg.timing_runs)
        results.append(dict(dataset=name, bd_rate_pct=bdr, bd_psnr_db=bdp, qp=mid, **timing))
    table = []
    for r in results:
        table.append((
            r["dataset"], _fmt(r["bd_rate_pct"], 4), _fmt(r["bd_psnr_db"], 4),
            r["qp"], int(r["identical"]),
            _fmt(r["t_serial_full"], 3), _fmt(r["t_serial_fastdepth"], 3),
            _fmt(r["t_parallel_fastdepth"], 3), _fmt(r["delta_t_s"], 2), _fmt(r["delta_t_p"], 2),
        ))
    if len(results) > 1:
        def mean(key):
            return float(np.mean([r[key] for r in results]))

        table.append((
            "average", _fmt(mean("bd_rate_pct"), 4), _fmt(mean("bd_psnr_db"), 4), "",
            int(all(r["identical"] for r in results)),
            _fmt(mean("t_serial_full"), 3), _fmt(mean("t_serial_fastdepth"), 3),
            _fmt(mean("t_parallel_fastdepth"), 3), _fmt(mean("delta_t_s"), 2),
            _fmt(mean("delta_t_p"), 2),
        ))
    header = ("dataset", "bd_rate_pct", "bd_psnr_db", "timing_qp", "serial_parallel_identical",
              "t_serial_full_s", "t_serial_fastdepth_s", "t_parallel_fastdepth_s",
              "delta_t_s_pct", "delta_t_p_pct")
    files.append(_write_csv(out / "depth_ablation.csv", header, table))
    return AblationResult(results, files)
