"""Terrain raster preparation: bathymetry merge, int16 quantisation, chunking.

Grids follow the ESRI ASCII layout: row 0 is the northern edge and cell
``(i, j)`` is centred at ``(xll + (j + 0.5) c, yll + (nrows - i - 0.5) c)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .errors import CoverageError, FormatError, RangeOverflowError, ValidationError

INT16_MIN, INT16_MAX = -32768, 32767


@dataclass(frozen=True)
class HeightGrid:
    values: np.ndarray  # (nrows, ncols), NaN = missing
    xllcorner: float = 0.0
    yllcorner: float = 0.0
    cellsize: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValidationError("height grid must be 2-D", module="terrain-prep", operation="HeightGrid")
        if not self.cellsize > 0:
            raise ValidationError("cell size must be positive", module="terrain-prep", operation="HeightGrid")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def cell_centres(self) -> tuple[np.ndarray, np.ndarray]:
        nrows, ncols = self.shape
        x = self.xllcorner + (np.arange(ncols) + 0.5) * self.cellsize
        y = self.yllcorner + (nrows - np.arange(nrows) - 0.5) * self.cellsize
        return np.meshgrid(x, y)


def read_ascii_grid(path) -> HeightGrid:
    path = Path(path)
    header = {}
    with open(path) as fh:
        for _ in range(6):
            pos = fh.tell()
            line = fh.readline()
            parts = line.split()
            if len(parts) != 2 or parts[0][0].isdigit() or parts[0][0] == "-":
                fh.seek(pos)
                break
            header[parts[0].lower()] = float(parts[1])
        rows = np.loadtxt(fh, ndmin=2)
    try:
        ncols, nrows = int(header["ncols"]), int(header["nrows"])
        cellsize = header["cellsize"]
        xll = header.get("xllcorner", header.get("xllcenter", 0.0))
        yll = header.get("yllcorner", header.get("yllcenter", 0.0))
    except KeyError as exc:
        raise FormatError(f"ASCII grid header lacks {exc}", module="terrain-prep", operation="read_ascii_grid",
                          location=str(path)) from None
    if rows.shape != (nrows, ncols):
        raise FormatError(f"expected {nrows}x{ncols} values, found {rows.shape[0]}x{rows.shape[1]}",
                          module="terrain-prep", operation="read_ascii_grid", location=str(path))
    nodata = header.get("nodata_value")
    if nodata is not None:
        rows = np.where(rows == nodata, np.nan, rows)
    return HeightGrid(rows, xll, yll, cellsize)


def write_ascii_grid(grid: HeightGrid, path, nodata: float = -9999.0) -> None:
    nrows, ncols = grid.shape
    with open(path, "w") as fh:
        fh.write(f"ncols {ncols}\nnrows {nrows}\nxllcorner {grid.xllcorner!r}\nyllcorner {grid.yllcorner!r}\n"
                 f"cellsize {grid.cellsize!r}\nNODATA_value {nodata:g}\n")
        np.savetxt(fh, np.where(np.isnan(grid.values), nodata, grid.values), fmt="%.6f")


@dataclass(frozen=True)
class DepthContour:
    depth: float
    vertices: np.ndarray  # (n, 2)
    polyline_id: str = ""

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        ctx = dict(module="terrain-prep", operation="DepthContour", location=str(self.polyline_id))
        if self.depth > 0:
            raise ValidationError("contour depth must be <= 0", **ctx)
        if verts.ndim != 2 or verts.shape[0] < 2 or verts.shape[1] != 2:
            raise ValidationError("contour needs at least two (x, y) vertices", **ctx)
        object.__setattr__(self, "vertices", verts)


def read_contours(path) -> list[DepthContour]:
    frame = pd.read_csv(path, comment="#", dtype={"polyline_id": str})
    if list(frame.columns) != ["depth", "x", "y", "polyline_id"]:
        raise FormatError("contour header must be depth,x,y,polyline_id", module="terrain-prep",
                          operation="read_contours", location=str(path))
    out = []
    for pid, g in frame.groupby("polyline_id", sort=False):
        depths = g["depth"].unique()
        if depths.size != 1:
            raise ValidationError(f"polyline {pid} mixes depths {depths.tolist()}", module="terrain-prep",
                                  operation="read_contours", location=str(path))
        out.append(DepthContour(float(depths[0]), g[["x", "y"]].to_numpy(), str(pid)))
    return out


def merge_bathymetry(grid: HeightGrid, contours, k: int = 8, search_radius: float = 1000.0,
                     power: float = 2.0) -> HeightGrid:
    """Fill missing (water) cells by IDW over the nearest contour vertices, clamped to <= 0."""
    missing = np.isnan(grid.values)
    if not missing.any():
        return grid
    if not contours:
        raise CoverageError(f"{int(missing.sum())} missing cells and no contours", module="terrain-prep",
                            operation="merge_bathymetry")
    verts = np.vstack([c.vertices for c in contours])
    depths = np.concatenate([np.full(len(c.vertices), c.depth) for c in contours])
    tree = cKDTree(verts)
    xs, ys = grid.cell_centres()
    query = np.column_stack([xs[missing], ys[missing]])
    kk = min(k, len(verts))
    dist, idx = tree.query(query, k=kk, distance_upper_bound=search_radius)
    dist = dist.reshape(len(query), kk)
    idx = idx.reshape(len(query), kk)
    found = np.isfinite(dist)
    uncovered = ~found.any(axis=1)
    if uncovered.any():
        cells = np.argwhere(missing)[uncovered]
        shown = ", ".join(f"({i},{j})" for i, j in cells[:10]) + (" ..." if len(cells) > 10 else "")
        raise CoverageError(f"{len(cells)} cell(s) without a contour within {search_radius} m",
                            module="terrain-prep", operation="merge_bathymetry", location=shown)
    safe_idx = np.where(found, idx, 0)
    d = depths[safe_idx]
    exact = found & (dist == 0.0)
    with np.errstate(divide="ignore"):
        w = np.where(found, 1.0 / np.where(found, dist, 1.0) ** power, 0.0)
    has_exact = exact.any(axis=1)
    w[has_exact] = exact[has_exact].astype(float)
    filled = (w * d).sum(axis=1) / w.sum(axis=1)
    values = grid.values.copy()
    values[missing] = np.minimum(filled, 0.0)
    return replace(grid, values=values)


@dataclass(frozen=True)
class QuantizedChunkSet:
    counts: np.ndarray  # (nrows, ncols) int16, unpadded
    scale: float
    offset: float
    xllcorner: float = 0.0
    yllcorner: float = 0.0
    cellsize: float = 1.0
    chunk_size: int | None = None
    tiles: dict = field(default_factory=dict)  # (row, col) -> (chunk, chunk) int16
    provenance: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    @property
    def tile_grid(self) -> tuple[int, int]:
        if not self.chunk_size:
            return (0, 0)
        nrows, ncols = self.shape
        return (-(-nrows // self.chunk_size), -(-ncols // self.chunk_size))

    def dequantize(self) -> HeightGrid:
        return HeightGrid(self.counts * self.scale + self.offset, self.xllcorner, self.yllcorner, self.cellsize)


def quantize_int16(grid: HeightGrid, scale: float = 0.1, offset: float | None = None) -> QuantizedChunkSet:
    """``count = round((h - offset) / scale)``; the offset defaults to the mid-range of the grid."""
    values = grid.values
    if np.isnan(values).any():
        raise ValidationError("grid still has missing cells; merge bathymetry first", module="terrain-prep",
                              operation="quantize_int16")
    if not scale > 0:
        raise ValidationError("scale must be positive", module="terrain-prep", operation="quantize_int16")
    lo, hi = float(values.min()), float(values.max())
    if offset is None:
        offset = 0.5 * (lo + hi)
    top = round((hi - offset) / scale)
    bottom = round((lo - offset) / scale)
    if top > INT16_MAX or bottom < INT16_MIN:
        needed = max((hi - offset) / INT16_MAX, (offset - lo) / -INT16_MIN)
        mid_needed = (hi - lo) / 2 / INT16_MAX
        raise RangeOverflowError(
            f"range [{lo:g}, {hi:g}] m at scale {scale:g} needs counts [{bottom}, {top}]; "
            f"minimum scale {needed:.6g} m/count at this offset ({mid_needed:.6g} with a mid-range offset)",
            module="terrain-prep", operation="quantize_int16")
    counts = np.rint((values - offset) / scale).astype(np.int16)
    return QuantizedChunkSet(counts, float(scale), float(offset), grid.xllcorner, grid.yllcorner, grid.cellsize,
                             provenance={"source_shape": list(grid.shape), "range_m": [lo, hi]})


def chunk_split(qset: QuantizedChunkSet, chunk_size: int) -> QuantizedChunkSet:
    """Pad to a multiple of ``chunk_size`` by edge replication and cut into square tiles."""
    if chunk_size < 1:
        raise ValidationError("chunk size must be >= 1", module="terrain-prep", operation="chunk_split")
    nrows, ncols = qset.shape
    pr, pc = -(-nrows // chunk_size), -(-ncols // chunk_size)
    padded = np.pad(qset.counts, ((0, pr * chunk_size - nrows), (0, pc * chunk_size - ncols)), mode="edge")
    tiles = {}
    for r in range(pr):
        for c in range(pc):
            tiles[(r, c)] = padded[r * chunk_size:(r + 1) * chunk_size, c * chunk_size:(c + 1) * chunk_size].copy()
    return replace(qset, chunk_size=int(chunk_size), tiles=tiles)


def assemble_counts(qset: QuantizedChunkSet) -> np.ndarray:
    nrows, ncols = qset.shape
    pr, pc = qset.tile_grid
    cs = qset.chunk_size
    padded = np.empty((pr * cs, pc * cs), dtype=np.int16)
    for (r, c), tile in qset.tiles.items():
        padded[r * cs:(r + 1) * cs, c * cs:(c + 1) * cs] = tile
    return padded[:nrows, :ncols]


def chunk_reassemble(qset: QuantizedChunkSet) -> HeightGrid:
    """Stitch the tiles back and dequantise the original extent."""
    counts = assemble_counts(qset)
    return HeightGrid(counts * qset.scale + qset.offset, qset.xllcorner, qset.yllcorner, qset.cellsize)


def write_chunks(qset: QuantizedChunkSet, out_dir, extra: dict | None = None) -> Path:
    """One little-endian row-major int16 file per tile plus ``chunks.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for (r, c) in sorted(qset.tiles):
        name = f"chunk_r{r:03d}_c{c:03d}.bin"
        (out / name).write_bytes(qset.tiles[(r, c)].astype("<i2").tobytes(order="C"))
        names.append({"row": r, "col": c, "file": name})
    meta = {
        "scale": qset.scale, "offset": qset.offset, "chunk_size": qset.chunk_size,
        "nrows": qset.shape[0], "ncols": qset.shape[1],
        "xllcorner": qset.xllcorner, "yllcorner": qset.yllcorner, "cellsize": qset.cellsize,
        "dtype": "int16", "byte_order": "little", "layout": "row-major",
        "chunks": names, "provenance": qset.provenance,
    }
    if extra:
        meta.update(extra)
    sidecar = out / "chunks.json"
    sidecar.write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return sidecar


def read_chunks(sidecar) -> QuantizedChunkSet:
    sidecar = Path(sidecar)
    meta = json.loads(sidecar.read_text())
    cs = int(meta["chunk_size"])
    tiles = {}
    for entry in meta["chunks"]:
        raw = np.frombuffer((sidecar.parent / entry["file"]).read_bytes(), dtype="<i2")
        tiles[(entry["row"], entry["col"])] = raw.reshape(cs, cs).astype(np.int16)
    shell = QuantizedChunkSet(np.zeros((meta["nrows"], meta["ncols"]), dtype=np.int16), meta["scale"],
                              meta["offset"], meta["xllcorner"], meta["yllcorner"], meta["cellsize"], cs, tiles,
                              meta.get("provenance", {}))
    return replace(shell, counts=assemble_counts(shell))
