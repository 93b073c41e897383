import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from windtwin.errors import CoverageError, RangeOverflowError, ValidationError
from windtwin.terrain import (
    DepthContour,
    HeightGrid,
    chunk_reassemble,
    chunk_split,
    merge_bathymetry,
    quantize_int16,
    read_ascii_grid,
    read_chunks,
    read_contours,
    write_ascii_grid,
    write_chunks,
)


def one_cell(values, **kw):
    return HeightGrid(np.array(values, dtype=float), **kw)


# -- merge_bathymetry --------------------------------------------------------

def test_equidistant_contours_average():
    # centre of the single cell is (0.5, 0.5)
    grid = one_cell([[np.nan]])
    contours = [DepthContour(-10.0, [(0.5, -9.5), (0.5, -100)]), DepthContour(-20.0, [(0.5, 10.5), (0.5, 100)])]
    filled = merge_bathymetry(grid, contours, k=2)
    assert filled.values[0, 0] == pytest.approx(-15.0, abs=1e-12)


def test_vertex_hit_takes_its_depth():
    grid = one_cell([[np.nan]])
    contours = [DepthContour(-7.0, [(0.5, 0.5), (50, 50)]), DepthContour(-30.0, [(1.5, 0.5), (2, 2)])]
    assert merge_bathymetry(grid, contours).values[0, 0] == -7.0


def test_onshore_cells_untouched_and_fill_bounded():
    rng = np.random.default_rng(0)
    values = rng.uniform(1, 50, (20, 30))
    values[:, 15:] = np.nan
    grid = HeightGrid(values, cellsize=10.0)
    contours = [DepthContour(float(-d), rng.uniform(150, 300, (6, 2)) * [1, 0.66], f"c{d}") for d in (5, 12, 40)]
    filled = merge_bathymetry(grid, contours, k=8, search_radius=1e4)
    land = ~np.isnan(values)
    assert np.array_equal(filled.values[land], values[land])
    sea = filled.values[~land]
    assert not np.isnan(sea).any()
    # brute force: each filled cell within the depths of its 8 nearest vertices
    verts = np.vstack([c.vertices for c in contours])
    depths = np.concatenate([np.full(len(c.vertices), c.depth) for c in contours])
    xs, ys = grid.cell_centres()
    for x, y, v in zip(xs[~land], ys[~land], sea):
        near = np.argsort(np.hypot(verts[:, 0] - x, verts[:, 1] - y))[:8]
        assert depths[near].min() - 1e-9 <= v <= depths[near].max() + 1e-9


def test_uncovered_cell_is_a_coverage_error():
    values = np.zeros((3, 3))
    values[2, 2] = np.nan
    with pytest.raises(CoverageError) as info:
        merge_bathymetry(HeightGrid(values), [DepthContour(-5.0, [(500, 500), (501, 501)])], search_radius=10.0)
    assert "(2,2)" in info.value.location


def test_positive_contour_depth_rejected():
    with pytest.raises(ValidationError):
        DepthContour(3.0, [(0, 0), (1, 1)])


# -- quantize_int16 ----------------------------------------------------------

def test_quantization_example():
    q = quantize_int16(one_cell([[123.456]]), scale=0.1, offset=0.0)
    assert q.counts[0, 0] == 1235
    back = q.dequantize().values[0, 0]
    assert back == pytest.approx(123.5, abs=1e-12)
    assert abs(back - 123.456) <= 0.05


def test_offset_height_is_count_zero():
    assert quantize_int16(one_cell([[42.0, 50.0]]), scale=0.1, offset=42.0).counts[0, 0] == 0


def test_default_offset_is_mid_range():
    q = quantize_int16(one_cell([[-10.0, 30.0]]))
    assert q.offset == 10.0
    assert q.counts.tolist() == [[-200, 200]]


def test_range_overflow_reports_minimum_scale():
    grid = one_cell([[0.0, 7000.0]])
    with pytest.raises(RangeOverflowError) as info:
        quantize_int16(grid, scale=0.1)
    # 3500 m either side of the mid-range offset over 32767 counts
    assert f"{3500 / 32767:.6g}" in info.value.message
    quantize_int16(grid, scale=3500 / 32767 * 1.0001)


@settings(max_examples=50)
@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=20),
                  elements=st.floats(-500, 2500)),
       st.sampled_from([0.05, 0.1, 0.25, 1.0]))
def test_quantization_error_is_at_most_half_a_count(values, scale):
    q = quantize_int16(HeightGrid(values), scale=scale)
    err = np.abs(q.dequantize().values - values)
    assert err.max() <= scale / 2 * (1 + 1e-9)


# -- chunking ----------------------------------------------------------------

def quantized(shape, seed=0):
    rng = np.random.default_rng(seed)
    return quantize_int16(HeightGrid(rng.uniform(0, 300, shape)), scale=0.1)


def test_100_grid_with_64_chunks_gives_2x2():
    q = chunk_split(quantized((100, 100)), 64)
    assert q.tile_grid == (2, 2) and len(q.tiles) == 4
    # the padding replicates the last row and column
    assert np.all(q.tiles[(1, 1)][36:, :36] == q.counts[99, 64:100])
    assert np.all(q.tiles[(1, 1)][:36, 36:] == q.counts[64:100, 99][:, None])


def test_exact_fit_has_one_chunk():
    q = chunk_split(quantized((64, 64)), 64)
    assert list(q.tiles) == [(0, 0)]
    assert np.array_equal(q.tiles[(0, 0)], q.counts)


@settings(max_examples=40)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(1, 17))
def test_split_reassemble_roundtrip(nrows, ncols, chunk):
    q = chunk_split(quantized((nrows, ncols), seed=nrows * 41 + ncols), chunk)
    back = chunk_reassemble(q)
    assert back.shape == (nrows, ncols)
    assert np.array_equal(np.rint((back.values - q.offset) / q.scale).astype(np.int16), q.counts)
    assert all(t.shape == (chunk, chunk) for t in q.tiles.values())


def test_chunk_size_must_be_positive():
    with pytest.raises(ValidationError):
        chunk_split(quantized((4, 4)), 0)


# -- files -------------------------------------------------------------------

def test_chunk_files_roundtrip(tmp_path):
    q = chunk_split(quantized((70, 50)), 32)
    sidecar = write_chunks(q, tmp_path, extra={"provenance": "config_hash=x seed=0"})
    raw = (tmp_path / "chunk_r000_c000.bin").read_bytes()
    assert len(raw) == 32 * 32 * 2
    assert np.array_equal(np.frombuffer(raw, "<i2").reshape(32, 32), q.tiles[(0, 0)])
    back = read_chunks(sidecar)
    assert np.array_equal(back.counts, q.counts)
    assert back.scale == q.scale and back.offset == q.offset


def test_ascii_grid_and_contours_roundtrip(tmp_path):
    values = np.array([[1.5, np.nan], [2.25, 3.0]])
    write_ascii_grid(HeightGrid(values, 100.0, 200.0, 5.0), tmp_path / "g.asc")
    back = read_ascii_grid(tmp_path / "g.asc")
    assert np.array_equal(back.values, values, equal_nan=True)
    assert (back.xllcorner, back.yllcorner, back.cellsize) == (100.0, 200.0, 5.0)
    (tmp_path / "c.csv").write_text("depth,x,y,polyline_id\n-5,0,0,a\n-5,1,1,a\n-9,2,2,b\n-9,3,3,b\n")
    contours = read_contours(tmp_path / "c.csv")
    assert [c.depth for c in contours] == [-5.0, -9.0]
