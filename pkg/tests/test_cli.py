"""Command-line behaviour, provenance stamps and golden reports.

Regenerate the goldens after an intended output change with
``python tests/test_cli.py`` and review the diff.
"""

import json
import subprocess
import sys
from pathlib import Path

import pytest

from windtwin import pipeline
from windtwin.cli import main

GOLDEN = Path(__file__).parent / "golden"
GOLDEN_SYNTH = ["--seed", "7", "--days", "30", "--turbines", "3"]
GOLDEN_VARIANTS = {"densities": ["constant", "humid"], "mappings": ["power_curve"],
                   "interpolations": ["cubic"], "caps": [True]}


def tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def golden_run(workdir: Path) -> Path:
    data = workdir / "data"
    assert main(["synth", *GOLDEN_SYNTH, "--output-dir", str(data)]) == 0
    doc = json.loads((data / "run_config.json").read_text())
    doc.pop("provenance", None)
    doc["variants"] = GOLDEN_VARIANTS
    config = data / "golden_config.json"
    config.write_text(json.dumps(doc, indent=1, sort_keys=True))
    assert main(["run", "--config", str(config)]) == 0
    return data / doc["paths"]["output_dir"]


def golden_files(run_dir: Path) -> dict[str, bytes]:
    return {k: v for k, v in tree(run_dir).items() if k.split("/")[0] in ("reports", "hybrid")}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    return golden_run(tmp_path_factory.mktemp("golden"))


# -- basics ------------------------------------------------------------------

def test_version_and_help_via_console_script():
    out = subprocess.run(["windtwin", "--version"], capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "windtwin 0.1.0"
    helptext = subprocess.run(["windtwin", "--help"], capture_output=True, text=True, check=True).stdout
    for cmd in ("synth", "ingest", "train", "predict", "evaluate", "hybrid", "terrain"):
        assert cmd in helptext


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "windtwin.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0


def test_argument_error_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["bogus"])
    assert info.value.code == 2


def test_synth_twice_gives_identical_trees(tmp_path):
    assert main(["synth", "--seed", "7", "--days", "3", "--turbines", "2", "--output-dir", str(tmp_path / "a")]) == 0
    assert main(["synth", "--seed", "7", "--days", "3", "--turbines", "2", "--output-dir", str(tmp_path / "b")]) == 0
    assert tree(tmp_path / "a") == tree(tmp_path / "b")


@pytest.fixture
def tiny_data(tmp_path):
    data = tmp_path / "data"
    assert main(["synth", "--seed", "3", "--days", "4", "--turbines", "2", "--output-dir", str(data)]) == 0
    return data


def last_error(capsys) -> dict:
    line = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(line)


def test_evaluate_without_predict_is_a_missing_input_error(tiny_data, capsys):
    config = str(tiny_data / "run_config.json")
    assert main(["ingest", "--config", config]) == 0
    code = main(["evaluate", "--config", config])
    assert code == 5
    err = last_error(capsys)
    assert err["error"] == "MissingInputError" and "predict" in err["message"]


def test_missing_config_file_exits_2(tmp_path, capsys):
    assert main(["ingest", "--config", str(tmp_path / "nope.json")]) == 2
    assert last_error(capsys)["error"] == "ConfigError"


@pytest.mark.parametrize("change", [
    {"evaluation": {"selection_period": ["2021-01-01T00:00:00Z", "2021-01-03T00:00:00Z"],
                    "report_period": ["2021-01-02T00:00:00Z", "2021-01-04T00:00:00Z"]}},
    {"variants": {"densities": ["wet"]}},
    {"sampling": {"MEPS": "bilinear"}},
    {"ddm": {"training": {"learning_rate": 0.1}}},
    {"evaluation": {"normalizer": "median"}},
])
def test_invalid_config_exits_2_with_location(tiny_data, capsys, change):
    doc = json.loads((tiny_data / "run_config.json").read_text())
    doc.update(change)
    path = tiny_data / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["ingest", "--config", str(path)]) == 2
    err = last_error(capsys)
    assert err["error"] == "ConfigError" and err["module"] and err["operation"]


def test_missing_data_file_exits_2(tiny_data, capsys):
    (tiny_data / "scada.csv").unlink()
    assert main(["ingest", "--config", str(tiny_data / "run_config.json")]) == 2
    assert "scada.csv" in json.dumps(last_error(capsys))


def test_corrupt_scada_exits_3_with_row(tiny_data, capsys):
    path = tiny_data / "scada.csv"
    lines = path.read_text().splitlines()
    lines.insert(5, lines[4])
    path.write_text("\n".join(lines) + "\n")
    assert main(["ingest", "--config", str(tiny_data / "run_config.json")]) == 3
    err = last_error(capsys)
    assert err["module"] == "core-data" and err["location"].endswith(":6")


def test_steps_in_sequence_match_run(tiny_data):
    config = str(tiny_data / "run_config.json")
    for step in ("ingest", "train", "predict", "evaluate", "hybrid"):
        assert main([step, "--config", config, "--output-dir", str(tiny_data / "steps")]) == 0
    assert main(["run", "--config", config, "--output-dir", str(tiny_data / "all")]) == 0
    assert tree(tiny_data / "steps") == tree(tiny_data / "all")


def test_rerunning_a_step_is_byte_identical(tiny_data):
    config = str(tiny_data / "run_config.json")
    out = tiny_data / "run"
    assert main(["run", "--config", config]) == 0
    before = tree(out)
    assert main(["predict", "--config", config]) == 0
    assert main(["evaluate", "--config", config]) == 0
    assert tree(out) == before


def test_overrides_and_stamp(tiny_data):
    base = pipeline.load_run_config(tiny_data / "run_config.json")
    moved = pipeline.load_run_config(tiny_data / "run_config.json", output_dir=tiny_data / "x")
    reseeded = pipeline.load_run_config(tiny_data / "run_config.json", seed=99)
    assert moved.output_dir == tiny_data / "x" and moved.stamp == base.stamp
    assert reseeded.seed == 99 and reseeded.stamp.endswith("seed=99") and reseeded.hash != base.hash


# -- terrain -----------------------------------------------------------------

def test_terrain_subcommand(tmp_path):
    grid = tmp_path / "g.asc"
    grid.write_text("ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n"
                    "5 6 -9999\n7 8 -9999\n")
    contours = tmp_path / "c.csv"
    contours.write_text("depth,x,y,polyline_id\n-4,25,0,a\n-4,25,20,a\n")
    out = tmp_path / "chunks"
    assert main(["terrain", "--grid", str(grid), "--contours", str(contours), "--output-dir", str(out),
                 "--chunk-size", "2"]) == 0
    meta = json.loads((out / "chunks.json").read_text())
    assert meta["provenance"].startswith("config_hash=") and len(meta["chunks"]) == 2
    again = tmp_path / "again"
    assert main(["terrain", "--grid", str(grid), "--contours", str(contours), "--output-dir", str(again),
                 "--chunk-size", "2"]) == 0
    assert tree(out) == tree(again)


def test_terrain_overflow_exits_4(tmp_path, capsys):
    grid = tmp_path / "g.asc"
    grid.write_text("ncols 2\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n0 7000\n")
    assert main(["terrain", "--grid", str(grid), "--output-dir", str(tmp_path / "o"), "--scale", "0.1"]) == 4
    assert last_error(capsys)["error"] == "RangeOverflowError"


# -- provenance and goldens --------------------------------------------------

def stamp_of(path: Path) -> str:
    text = path.read_text()
    if path.suffix == ".json":
        return json.loads(text)["provenance"]
    return text.splitlines()[0].lstrip("# ")


def test_every_output_file_carries_config_hash_and_seed(small_run):
    cfg = pipeline.load_run_config(small_run.parent / "golden_config.json")
    files = [p for p in small_run.rglob("*") if p.is_file()]
    assert len(files) > 30
    for p in files:
        assert stamp_of(p) == cfg.stamp, p
    for p in small_run.parent.glob("*.*"):
        if p.name != "golden_config.json":
            assert stamp_of(p).startswith("config_hash=") and stamp_of(p).endswith("seed=7"), p


def test_reports_match_goldens(small_run):
    got = golden_files(small_run)
    want = tree(GOLDEN)
    assert sorted(got) == sorted(want)
    for name in want:
        assert got[name] == want[name], name


if __name__ == "__main__":
    import shutil
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        run_dir = golden_run(Path(tmp))
        shutil.rmtree(GOLDEN, ignore_errors=True)
        for name, data in golden_files(run_dir).items():
            (GOLDEN / name).parent.mkdir(parents=True, exist_ok=True)
            (GOLDEN / name).write_bytes(data)
    print(f"wrote goldens to {GOLDEN}")
