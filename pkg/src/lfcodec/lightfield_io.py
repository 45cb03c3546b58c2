"""Sub-aperture view grids: containers, manifest I/O and pixel-format conversions.

A light field is held as a ``rows x cols`` grid of equally sized views. The
grid position ``(row, col)`` is the angular coordinate and the pixel position
inside a view is the spatial coordinate.

On disk a grid is a directory of per-view image files plus a plain-text
manifest with one ``row col filename`` line per view (0-indexed). Full
resolution 3-channel views are binary PPM (P6, 8-bit or 16-bit big-endian
with ``maxval = 2**bit_depth - 1``). Chroma-subsampled YCbCr views are raw
planar ``.yuv`` files (Y, Cb, Cr; 8-bit, or 16-bit little-endian). Optional
``# key=value`` header lines at the top of the manifest carry the colour
space and, for ``.yuv`` views, the geometry.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DataError,
    DimensionMismatch,
    InvalidSelection,
    MissingView,
    TargetTooSmall,
    UnsupportedBitDepth,
)

CHROMA_FORMATS = ("444", "422", "420")
COLOR_SPACES = ("ycbcr", "rgb")
MIN_CU = 8

# (horizontal shift, vertical shift) of the chroma planes
CHROMA_SHIFT = {"444": (0, 0), "422": (1, 0), "420": (1, 1)}

# BT.709 luma coefficients
KR = 0.2126
KB = 0.0722
KG = 1.0 - KR - KB


def chroma_shape(height, width, chroma_format):
    sx, sy = CHROMA_SHIFT[chroma_format]
    return height >> sy, width >> sx


@dataclass(frozen=True)
class Picture:
    """One view: three sample planes (Y, Cb, Cr or R, G, B)."""

    planes: tuple

    def __post_init__(self):
        planes = tuple(np.asarray(p) for p in self.planes)
        if len(planes) != 3:
            raise DataError(f"a view needs 3 planes, got {len(planes)}")
        for p in planes:
            if p.ndim != 2:
                raise DataError("planes must be 2-D arrays")
            p.flags.writeable = False
        object.__setattr__(self, "planes", planes)

    @property
    def y(self):
        return self.planes[0]

    @property
    def height(self):
        return self.planes[0].shape[0]

    @property
    def width(self):
        return self.planes[0].shape[1]

    def equals(self, other):
        return all(np.array_equal(a, b) for a, b in zip(self.planes, other.planes))

    @classmethod
    def from_arrays(cls, y, cb, cr, dtype=np.int32):
        return cls(tuple(np.array(p, dtype=dtype) for p in (y, cb, cr)))


@dataclass(frozen=True)
class GridSelection:
    row_offset: int
    col_offset: int
    rows: int
    cols: int

    def fits(self, grid_rows, grid_cols):
        return (
            self.row_offset >= 0
            and self.col_offset >= 0
            and self.rows >= 1
            and self.cols >= 1
            and self.row_offset + self.rows <= grid_rows
            and self.col_offset + self.cols <= grid_cols
        )


@dataclass(frozen=True)
class ViewGrid:
    """A rows x cols grid of views sharing one geometry and sample format.

    ``views`` is stored row-major; ``view(r, c)`` indexes it.
    """

    rows: int
    cols: int
    width: int
    height: int
    bit_depth: int
    chroma_format: str
    views: tuple = field(repr=False)
    color_space: str = "ycbcr"

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))
        if self.bit_depth not in (8, 10):
            raise UnsupportedBitDepth(f"bit depth {self.bit_depth} not supported (8 or 10)")
        if self.chroma_format not in CHROMA_FORMATS:
            raise DataError(f"unknown chroma format {self.chroma_format!r}")
        if self.color_space not in COLOR_SPACES:
            raise DataError(f"unknown colour space {self.color_space!r}")
        if self.color_space == "rgb" and self.chroma_format != "444":
            raise DataError("RGB grids are always 4:4:4")
        if self.rows < 1 or self.cols < 1:
            raise DataError("grid needs at least one view")
        if len(self.views) != self.rows * self.cols:
            raise MissingView(f"expected {self.rows * self.cols} views, got {len(self.views)}")
        ch, cw = chroma_shape(self.height, self.width, self.chroma_format)
        maxval = (1 << self.bit_depth) - 1
        for i, v in enumerate(self.views):
            if v is None:
                raise MissingView(f"view {divmod(i, self.cols)} missing")
            if v.planes[0].shape != (self.height, self.width):
                raise DimensionMismatch(
                    f"view {divmod(i, self.cols)} is {v.planes[0].shape[::-1]}, "
                    f"expected {(self.width, self.height)}"
                )
            for p in v.planes[1:]:
                if p.shape != (ch, cw):
                    raise DimensionMismatch(
                        f"view {divmod(i, self.cols)} chroma plane {p.shape} "
                        f"inconsistent with {self.chroma_format}"
                    )
            for p in v.planes:
                if p.size and (p.min() < 0 or p.max() > maxval):
                    raise DataError(
                        f"view {divmod(i, self.cols)} has samples outside [0, {maxval}]"
                    )

    @property
    def center(self):
        return (self.rows - 1) // 2, (self.cols - 1) // 2

    @property
    def num_views(self):
        return self.rows * self.cols

    def view(self, row, col):
        return self.views[row * self.cols + col]

    def positions(self):
        return [(r, c) for r in range(self.rows) for c in range(self.cols)]

    def with_views(self, views, **changes):
        """Return a copy with new views (and optionally new metadata)."""
        params = dict(
            rows=self.rows,
            cols=self.cols,
            width=self.width,
            height=self.height,
            bit_depth=self.bit_depth,
            chroma_format=self.chroma_format,
            color_space=self.color_space,
        )
        params.update(changes)
        return ViewGrid(views=tuple(views), **params)

    def equals(self, other):
        same_meta = (
            self.rows == other.rows
            and self.cols == other.cols
            and self.width == other.width
            and self.height == other.height
            and self.bit_depth == other.bit_depth
            and self.chroma_format == other.chroma_format
            and self.color_space == other.color_space
        )
        return same_meta and all(a.equals(b) for a, b in zip(self.views, other.views))


def grid_from_views(views_by_pos, bit_depth, chroma_format="444", color_space="ycbcr"):
    """Build a grid from a ``{(row, col): Picture}`` mapping."""
    if not views_by_pos:
        raise MissingView("no views given")
    rows = max(r for r, _ in views_by_pos) + 1
    cols = max(c for _, c in views_by_pos) + 1
    views = []
    for r in range(rows):
        for c in range(cols):
            if (r, c) not in views_by_pos:
                raise MissingView(f"view ({r}, {c}) missing from grid")
            views.append(views_by_pos[(r, c)])
    h, w = views[0].planes[0].shape
    return ViewGrid(rows, cols, w, h, bit_depth, chroma_format, tuple(views), color_space)


# ---------------------------------------------------------------------------
# PPM / raw planar files


def _read_token(data, pos):
    n = len(data)
    while pos < n:
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
        pos += 1
    return data[start:pos], pos


def read_ppm(path):
    """Read a binary P6 PPM. Returns ``(array[h, w, 3], bit_depth)``."""
    data = Path(path).read_bytes()
    magic, pos = _read_token(data, 0)
    if magic != b"P6":
        raise DataError(f"{path}: not a binary PPM (magic {magic!r})")
    try:
        w, pos = _read_token(data, pos)
        h, pos = _read_token(data, pos)
        maxval, pos = _read_token(data, pos)
        width, height, maxval = int(w), int(h), int(maxval)
    except ValueError as exc:
        raise DataError(f"{path}: malformed PPM header") from exc
    pos += 1  # single whitespace before the raster
    bit_depth = {255: 8, 1023: 10}.get(maxval)
    if bit_depth is None:
        raise UnsupportedBitDepth(f"{path}: maxval {maxval} (supported: 255, 1023)")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * 3
    raster = data[pos : pos + count * dtype.itemsize]
    if len(raster) != count * dtype.itemsize:
        raise DataError(f"{path}: truncated raster")
    arr = np.frombuffer(raster, dtype=dtype).reshape(height, width, 3).astype(np.int32)
    if arr.max(initial=0) > maxval:
        raise DataError(f"{path}: sample exceeds maxval {maxval}")
    return arr, bit_depth


def write_ppm(path, arr, bit_depth):
    arr = np.asarray(arr)
    h, w, _ = arr.shape
    maxval = (1 << bit_depth) - 1
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P6\n{w} {h}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + arr.astype(dtype).tobytes())


def _yuv_dtype(bit_depth):
    return np.dtype("<u2") if bit_depth > 8 else np.dtype("u1")


def read_yuv(path, width, height, bit_depth, chroma_format):
    ch, cw = chroma_shape(height, width, chroma_format)
    dtype = _yuv_dtype(bit_depth)
    data = Path(path).read_bytes()
    sizes = [height * width, ch * cw, ch * cw]
    if len(data) != sum(sizes) * dtype.itemsize:
        raise DimensionMismatch(f"{path}: {len(data)} bytes does not match {width}x{height}")
    flat = np.frombuffer(data, dtype=dtype).astype(np.int32)
    y = flat[: sizes[0]].reshape(height, width)
    cb = flat[sizes[0] : sizes[0] + sizes[1]].reshape(ch, cw)
    cr = flat[sizes[0] + sizes[1] :].reshape(ch, cw)
    return Picture((y, cb, cr))


def write_yuv(path, picture, bit_depth):
    dtype = _yuv_dtype(bit_depth)
    Path(path).write_bytes(b"".join(p.astype(dtype).tobytes() for p in picture.planes))


# ---------------------------------------------------------------------------
# manifests


def _parse_manifest(manifest_path):
    header = {}
    entries = []
    for lineno, raw in enumerate(Path(manifest_path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    header[k.strip()] = v.strip()
            continue
        parts = line.split(maxsplit=2)
        if len(parts) != 3:
            raise DataError(f"{manifest_path}:{lineno}: expected 'row col filename'")
        try:
            r, c = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise DataError(f"{manifest_path}:{lineno}: bad grid position") from exc
        if r < 0 or c < 0:
            raise DataError(f"{manifest_path}:{lineno}: negative grid position")
        entries.append((r, c, parts[2]))
    if not entries:
        raise MissingView(f"{manifest_path}: manifest lists no views")
    return header, entries


def load_grid(manifest_path):
    """Load a view grid described by a manifest file."""
    manifest_path = Path(manifest_path)
    header, entries = _parse_manifest(manifest_path)
    base = manifest_path.parent
    color_space = header.get("color", "rgb")
    chroma_format = header.get("chroma", "444")
    if color_space not in COLOR_SPACES:
        raise DataError(f"{manifest_path}: unknown colour space {color_space!r}")
    if chroma_format not in CHROMA_FORMATS:
        raise DataError(f"{manifest_path}: unknown chroma format {chroma_format!r}")

    views = {}
    bit_depth = None
    for r, c, name in entries:
        if (r, c) in views:
            raise DataError(f"{manifest_path}: duplicate entry for ({r}, {c})")
        path = base / name
        if not path.is_file():
            raise MissingView(f"view ({r}, {c}): file {path} not found")
        if path.suffix.lower() == ".yuv":
            try:
                w, h = int(header["width"]), int(header["height"])
                bd = int(header["bit_depth"])
            except (KeyError, ValueError) as exc:
                raise DataError(f"{manifest_path}: .yuv views need width/height/bit_depth") from exc
            if bd not in (8, 10):
                raise UnsupportedBitDepth(f"bit depth {bd} not supported")
            pic = read_yuv(path, w, h, bd, chroma_format)
        else:
            if chroma_format != "444":
                raise DataError(f"{path}: PPM views are always 4:4:4")
            arr, bd = read_ppm(path)
            pic = Picture(tuple(arr[:, :, k] for k in range(3)))
        if bit_depth is None:
            bit_depth = bd
        elif bd != bit_depth:
            raise DimensionMismatch(f"view ({r}, {c}) has bit depth {bd}, expected {bit_depth}")
        views[(r, c)] = pic

    rows = max(r for r, _ in views) + 1
    cols = max(c for _, c in views) + 1
    for r in range(rows):
        for c in range(cols):
            if (r, c) not in views:
                raise MissingView(f"view ({r}, {c}) missing from {manifest_path}")
    return grid_from_views(views, bit_depth, chroma_format, color_space)


def store_grid(grid, directory, manifest_name="manifest.txt"):
    """Write a grid as per-view files plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = [
        f"# color={grid.color_space} chroma={grid.chroma_format} "
        f"width={grid.width} height={grid.height} bit_depth={grid.bit_depth}"
    ]
    for r, c in grid.positions():
        pic = grid.view(r, c)
        if grid.chroma_format == "444":
            name = f"view_{r:02d}_{c:02d}.ppm"
            write_ppm(directory / name, np.stack(pic.planes, axis=-1), grid.bit_depth)
        else:
            name = f"view_{r:02d}_{c:02d}.yuv"
            write_yuv(directory / name, pic, grid.bit_depth)
        lines.append(f"{r} {c} {name}")
    manifest = directory / manifest_name
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# grid / pixel transforms


def select_center(grid, rows, cols):
    """Keep the centred ``rows x cols`` sub-grid (e.g. 13x13 out of 15x15)."""
    if rows < 1 or cols < 1 or rows > grid.rows or cols > grid.cols:
        raise InvalidSelection(f"cannot select {rows}x{cols} from {grid.rows}x{grid.cols}")
    if (grid.rows - rows) % 2 or (grid.cols - cols) % 2:
        raise InvalidSelection(
            f"{rows}x{cols} cannot be centred exactly in {grid.rows}x{grid.cols} (parity)"
        )
    sel = GridSelection((grid.rows - rows) // 2, (grid.cols - cols) // 2, rows, cols)
    return crop_grid(grid, sel)


def crop_grid(grid, sel):
    if not sel.fits(grid.rows, grid.cols):
        raise InvalidSelection(f"{sel} does not fit in {grid.rows}x{grid.cols}")
    views = [
        grid.view(sel.row_offset + r, sel.col_offset + c)
        for r in range(sel.rows)
        for c in range(sel.cols)
    ]
    return grid.with_views(views, rows=sel.rows, cols=sel.cols)


def _round_half_away(x):
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def rgb_to_ycbcr_planes(r, g, b, bit_depth):
    """BT.709 full-range R'G'B' to limited-range Y'CbCr, integer output."""
    maxval = (1 << bit_depth) - 1
    scale = 1 << (bit_depth - 8)
    rn = np.asarray(r, dtype=np.float64) / maxval
    gn = np.asarray(g, dtype=np.float64) / maxval
    bn = np.asarray(b, dtype=np.float64) / maxval
    ey = KR * rn + KG * gn + KB * bn
    ecb = (bn - ey) / (2.0 * (1.0 - KB))
    ecr = (rn - ey) / (2.0 * (1.0 - KR))
    y = _round_half_away((219.0 * ey + 16.0) * scale)
    cb = _round_half_away((224.0 * ecb + 128.0) * scale)
    cr = _round_half_away((224.0 * ecr + 128.0) * scale)
    y = np.clip(y, 16 * scale, 235 * scale)
    cb = np.clip(cb, 16 * scale, 240 * scale)
    cr = np.clip(cr, 16 * scale, 240 * scale)
    return y.astype(np.int32), cb.astype(np.int32), cr.astype(np.int32)


def convert_rgb_to_ycbcr(grid):
    if grid.color_space != "rgb":
        raise DataError("convert_rgb_to_ycbcr expects an RGB grid")
    views = [
        Picture(rgb_to_ycbcr_planes(*v.planes, grid.bit_depth)) for v in grid.views
    ]
    return grid.with_views(views, color_space="ycbcr")


def pad_views(grid, target_w, target_h):
    """Right/bottom edge-replication padding of every view."""
    if target_w < grid.width or target_h < grid.height:
        raise TargetTooSmall(
            f"target {target_w}x{target_h} smaller than source {grid.width}x{grid.height}"
        )
    if target_w % 2 or target_h % 2:
        raise TargetTooSmall(f"target {target_w}x{target_h} must have even dimensions")
    if (target_w, target_h) == (grid.width, grid.height):
        return grid
    sx, sy = CHROMA_SHIFT[grid.chroma_format]
    views = []
    for v in grid.views:
        planes = []
        for k, p in enumerate(v.planes):
            ph, pw = (target_h, target_w) if k == 0 else (target_h >> sy, target_w >> sx)
            planes.append(
                np.pad(p, ((0, ph - p.shape[0]), (0, pw - p.shape[1])), mode="edge")
            )
        views.append(Picture(tuple(planes)))
    return grid.with_views(views, width=target_w, height=target_h)


def crop_views(grid, width, height):
    """Inverse of :func:`pad_views`: keep the top-left ``width x height`` region."""
    if width > grid.width or height > grid.height:
        raise DimensionMismatch("crop larger than source")
    sx, sy = CHROMA_SHIFT[grid.chroma_format]
    views = []
    for v in grid.views:
        planes = [v.planes[0][:height, :width]]
        planes += [p[: height >> sy, : width >> sx] for p in v.planes[1:]]
        views.append(Picture(tuple(np.array(p) for p in planes)))
    return grid.with_views(views, width=width, height=height)


def subsample_plane(plane, chroma_format):
    """2-tap averaging (round half up) horizontally, and vertically for 4:2:0."""
    p = np.asarray(plane, dtype=np.int32)
    if chroma_format in ("422", "420"):
        if p.shape[1] % 2:
            p = np.pad(p, ((0, 0), (0, 1)), mode="edge")
        p = (p[:, 0::2] + p[:, 1::2] + 1) >> 1
    if chroma_format == "420":
        if p.shape[0] % 2:
            p = np.pad(p, ((0, 1), (0, 0)), mode="edge")
        p = (p[0::2, :] + p[1::2, :] + 1) >> 1
    return p


def subsample_chroma(grid, chroma_format):
    if grid.chroma_format == chroma_format:
        return grid
    if grid.chroma_format != "444":
        raise DataError("chroma subsampling expects a 4:4:4 grid")
    if grid.color_space != "ycbcr":
        raise DataError("chroma subsampling expects YCbCr")
    if chroma_format == "444":
        return grid
    if chroma_format not in CHROMA_FORMATS:
        raise DataError(f"unknown chroma format {chroma_format!r}")
    views = [
        Picture((v.planes[0], subsample_plane(v.planes[1], chroma_format),
                 subsample_plane(v.planes[2], chroma_format)))
        for v in grid.views
    ]
    return grid.with_views(views, chroma_format=chroma_format)


def prepare_grid(grid, chroma_format="422", select=None, pad_to=None):
    """The usual ingest chain: centre selection, YCbCr conversion, padding, subsampling."""
    if select is not None:
        grid = select_center(grid, *select)
    if grid.color_space == "rgb":
        grid = convert_rgb_to_ycbcr(grid)
    if pad_to is None:
        # round odd sizes up to even so chroma subsampling is exact (625 -> 626)
        pad_to = (grid.width + grid.width % 2, grid.height + grid.height % 2)
    grid = pad_views(grid, *pad_to)
    return subsample_chroma(grid, chroma_format)


def manifest_paths(paths):
    """Expand directories to their ``manifest.txt``."""
    out = []
    for p in paths:
        p = Path(p)
        out.append(p / "manifest.txt" if p.is_dir() else p)
    return out


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return Path(path)
