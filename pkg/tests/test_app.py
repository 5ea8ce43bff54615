import csv
import logging

import numpy as np
import pytest
import yaml

from adfem.app import cli
from adfem.app.config import ConfigError, from_dict, load_config
from adfem.app.meshgen import generate_rect_mesh
from adfem.app.meshio import MeshParseError, read_fields, read_mesh, write_fields, write_mesh
from adfem.app.output import TimingEntry, write_timing_report

SMALL = {"case": "oldroydb_channel", "mesh": {"generated": {"nx": 4, "ny": 2, "length": 2.0}},
         "jacobian_method": "ad_blocked"}


def _config(tmp_path, name="case.yaml", **changes):
    data = {**SMALL, **changes}
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def _run(argv, capsys):
    status = cli.main(argv)
    out, err = capsys.readouterr()
    return status, out, err


# --- meshes ----------------------------------------------------------------------------


@pytest.mark.parametrize("order, nodes", [(1, 9), (2, 25)])
def test_generated_counts(order, nodes):
    mesh = generate_rect_mesh(2, 2, order)
    assert mesh.n_nodes == nodes and mesh.n_elements == 8
    assert np.all(mesh.signed_areas() > 0)
    assert set(mesh.boundary) == {"inflow", "outflow", "wall_bottom", "wall_top"}


def test_p2_midpoints_are_edge_midpoints():
    mesh = generate_rect_mesh(3, 2, 2, 3.0, 1.0)
    c = mesh.coords()
    for a, b, m in ((0, 1, 3), (1, 2, 4), (2, 0, 5)):
        np.testing.assert_allclose(c[:, m], (c[:, a] + c[:, b]) / 2, atol=1e-15)


def test_mesh_round_trip(tmp_path):
    mesh = generate_rect_mesh(3, 2, 2, 2.0, 1.0)
    path = tmp_path / "m.mesh"
    write_mesh(path, mesh)
    back = read_mesh(path)
    np.testing.assert_array_equal(back.nodes, mesh.nodes)
    np.testing.assert_array_equal(back.elements, mesh.elements)
    for k, v in mesh.boundary.items():
        np.testing.assert_array_equal(back.boundary[k], v)


def test_orientation_repair_warns(tmp_path, caplog):
    path = tmp_path / "cw.mesh"
    path.write_text("nodes 3 elements 1 ndim 2 order 1\n0 0\n1 0\n0 1\n0 2 1\n")
    with caplog.at_level(logging.WARNING):
        mesh = read_mesh(path)
    assert mesh.signed_areas()[0] > 0
    assert "repaired orientation" in caplog.text


def test_out_of_range_index_reports_line(tmp_path):
    path = tmp_path / "bad.mesh"
    path.write_text("# comment\nnodes 3 elements 1 ndim 2 order 1\n0 0\n1 0\n0 1\n0 1 3\n")
    with pytest.raises(MeshParseError) as info:
        read_mesh(path)
    assert info.value.line == 6 and "out of range" in str(info.value)


def test_vtk_round_trip(tmp_path):
    mesh = generate_rect_mesh(3, 2, 2)
    u = np.random.default_rng(0).normal(size=mesh.n_nodes * 2)
    write_fields(tmp_path / "f.vtk", mesh, u, ("a", "b"))
    back, fields = read_fields(tmp_path / "f.vtk")
    assert back.n_nodes == mesh.n_nodes
    np.testing.assert_array_equal(fields["b"], u.reshape(-1, 2)[:, 1])


def test_timing_percentages(tmp_path):
    entries = [TimingEntry("ad_blocked", "4x2", 0.3, 0.1, 0.5, 3), TimingEntry("fd", "4x2", 0.8, 0.1, 1.0, 3)]
    text = write_timing_report(tmp_path / "t.csv", tmp_path / "t.txt", entries)
    assert entries[0].assembly_pct == pytest.approx(60.0)
    assert "80.00" in text and "0.3000" in text
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert [r["assembly_pct"] for r in rows] == ["60.000", "80.000"]


# --- configuration -------------------------------------------------------------------------


def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown"):
        from_dict({"cse": "poisson_square"})
    with pytest.raises(ConfigError, match="params"):
        from_dict({"params": {"lam": -1.0}})
    with pytest.raises(ConfigError):
        from_dict({"newton": {"linear": "cholesky"}})


def test_config_weissenberg(tmp_path):
    cfg = load_config(_config(tmp_path, params={"lam": 0.1}, channel={"umax": 3.0}))
    assert cfg.weissenberg == pytest.approx(0.1 * 2.0)


# --- command line ----------------------------------------------------------------------------


def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    status, stdout, _ = _run(["run", "--config", _config(tmp_path), "--out", str(out)], capsys)
    assert status == 0
    for name in ("fields.vtk", "convergence.csv", "residuals.csv", "timing.csv", "timing.txt",
                 "summary.json", "convergence.png", "field.png"):
        assert (out / name).stat().st_size > 0
    rows = list(csv.DictReader(open(out / "convergence.csv")))
    res = list(csv.DictReader(open(out / "residuals.csv")))
    assert len(res) == len(rows) + 1
    assert float(rows[-1]["residual_norm"]) <= 1e-10


def test_residuals_are_byte_identical_across_runs(tmp_path, capsys):
    cfg = _config(tmp_path)
    for k in range(2):
        assert _run(["run", "--config", cfg, "--out", str(tmp_path / f"r{k}")], capsys)[0] == 0
    assert (tmp_path / "r0" / "residuals.csv").read_bytes() == (tmp_path / "r1" / "residuals.csv").read_bytes()


def test_fd_and_ad_fields_agree(tmp_path, capsys):
    fields = {}
    for method in ("ad_blocked", "fd"):
        cfg = _config(tmp_path, name=f"{method}.yaml", jacobian_method=method)
        assert _run(["run", "--config", cfg, "--out", str(tmp_path / method)], capsys)[0] == 0
        fields[method] = read_fields(tmp_path / method / "fields.vtk")[1]
    for name, v in fields["ad_blocked"].items():
        assert np.abs(v - fields["fd"][name]).max() <= 1e-6


def test_poisson_refinement(tmp_path, capsys):
    cfg = _config(tmp_path, case="poisson_square", mesh={"generated": {"nx": 4, "ny": 4}},
                  poisson={"c": 1.0, "refinements": 3})
    status, _, _ = _run(["run", "--config", cfg, "--out", str(tmp_path / "p")], capsys)
    assert status == 0
    summary = yaml.safe_load((tmp_path / "p" / "summary.json").read_text())
    assert all(r >= 3.5 for r in summary["l2_ratios"])


@pytest.mark.parametrize("argv_tail, code, status", [
    (["--config", "/nonexistent.yaml"], "E_CONFIG", 2),
    (["--threads", "0"], "E_CONFIG", 2),
])
def test_cli_errors_are_single_lines(argv_tail, code, status, capsys, tmp_path):
    got, out, err = _run(["run", "--out", str(tmp_path)] + argv_tail, capsys)
    assert got == status
    assert err.count("\n") == 1 and err.startswith(f"error[{code}]:")


def test_cli_mesh_error(tmp_path, capsys):
    bad = tmp_path / "bad.mesh"
    bad.write_text("nodes 3 elements 1 ndim 2 order 2\n0 0\n1 0\n0 1\n0 1 2\n")
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"mesh": {"file": "bad.mesh"}}))
    status, _, err = _run(["run", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert status == 3 and err.startswith("error[E_MESH]:") and "bad.mesh:5" in err


def test_cli_missing_boundary_set(tmp_path, capsys):
    mesh = generate_rect_mesh(2, 2, 2)
    mesh.boundary.pop("outflow")
    write_mesh(tmp_path / "m.mesh", mesh)
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"mesh": {"file": "m.mesh"}}))
    status, _, err = _run(["run", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert status == 3 and "outflow" in err


def test_cli_no_convergence(tmp_path, capsys):
    cfg = _config(tmp_path, newton={"max_iters": 1})
    status, _, err = _run(["run", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert status == 5 and err.startswith("error[E_NO_CONVERGENCE]:")
    assert (tmp_path / "o" / "summary.json").exists()


@pytest.mark.parametrize("name", ["channel", "poisson", "bench"])
def test_shipped_configs_load(name):
    import pathlib
    cfg = load_config(pathlib.Path(__file__).parent.parent / "configs" / f"{name}.yaml")
    assert cfg.out == f"out/{name}"
