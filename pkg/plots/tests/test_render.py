import json
import subprocess
import sys
from pathlib import Path

import pytest

from waveplots import FigureSpec, SchemaError, render
from waveplots.cli import main, render_run


@pytest.fixture(scope="session")
def run_dir(tmp_path_factory):
    """A completed `run --scenario harmonic` artifact directory, produced by
    the primary CLI (the only interface this package consumes)."""
    out = tmp_path_factory.mktemp("artifacts")
    proc = subprocess.run(
        [sys.executable, "-m", "actionwave.cli", "run", "--scenario",
         "harmonic", "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr
    return sorted(p for p in out.iterdir() if p.is_dir())[0]


def test_render_all_four_kinds(run_dir, tmp_path):
    written = render_run(run_dir, tmp_path)
    assert len(written) == 4
    for path in written:
        data = Path(path).read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(data) > 5000


def test_rerender_identical_bytes(run_dir, tmp_path):
    first = render_run(run_dir, tmp_path / "a")
    second = render_run(run_dir, tmp_path / "b")
    for p1, p2 in zip(first, second):
        assert Path(p1).read_bytes() == Path(p2).read_bytes(), p1


def test_render_via_spec_json(run_dir, tmp_path):
    spec_path = tmp_path / "figure.json"
    spec_path.write_text(json.dumps({
        "kind": "heatmap",
        "inputs": {"field": str(run_dir / "field_kernel.csv")},
        "output": str(tmp_path / "heat.png"),
        "title": "kernel density",
    }))
    assert main(["render", "--spec", str(spec_path)]) == 0
    assert (tmp_path / "heat.png").exists()


def test_schema_error_names_missing_column(tmp_path):
    bad = tmp_path / "field_kernel.csv"
    bad.write_text("t,x,re_psi\n0.1,0.0,1.0\n")
    spec = FigureSpec(kind="heatmap", inputs={"field": str(bad)},
                      output=str(tmp_path / "x.png"))
    with pytest.raises(SchemaError, match="im_psi"):
        render(spec)


def test_missing_input_file(tmp_path):
    spec = FigureSpec(kind="profile",
                      inputs={"profile": str(tmp_path / "absent.csv")},
                      output=str(tmp_path / "x.png"))
    with pytest.raises(SchemaError, match="missing"):
        render(spec)


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(SchemaError):
        FigureSpec(kind="pie", inputs={}, output=str(tmp_path / "x.png"))


def test_cli_error_exit_code(tmp_path):
    spec_path = tmp_path / "figure.json"
    spec_path.write_text(json.dumps({
        "kind": "collapse",
        "inputs": {"clock": str(tmp_path / "nope.csv")},
        "output": str(tmp_path / "x.png")}))
    assert main(["render", "--spec", str(spec_path)]) == 1
