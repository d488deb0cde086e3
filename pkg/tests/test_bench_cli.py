import numpy as np
import pytest

from chobstacle.bench import cli
from chobstacle.bench.experiments import CSV_COLUMNS, ExperimentRecord, read_csv, run_single, run_table, write_csv
from chobstacle.bench.initial import (
    BAND_HALF_WIDTH,
    BAND_HIGH,
    BAND_LOW,
    HALF_WIDTH,
    SHAPES,
    band_mask,
    gen_initial,
    signed_distance,
)
from chobstacle.bench.plotdata import emit_plot_data, grid_dump, iteration_table
from chobstacle.bench.spectrum import format_report, interlacing_check, resolve_mask, spectrum_report
from chobstacle.exceptions import ConfigurationError
from chobstacle.mesh_fem import assemble_system, build_uniform_mesh
from chobstacle.runio import read_manifest, read_snapshot, snapshot_name, write_manifest, write_snapshot


@pytest.mark.parametrize("shape", SHAPES)
@pytest.mark.parametrize("p", [3, 5, 6])
def test_initial_values_in_range(shape, p):
    u = gen_initial(shape, p, seed=3)
    assert np.all(u >= -1.0) and np.all(u <= 1.0)
    mesh = build_uniform_mesh(p)
    band = band_mask(shape, mesh)
    assert np.all(u[band] >= BAND_LOW) and np.all(u[band] <= BAND_HIGH)
    inside = signed_distance(shape, mesh.coords) < 0
    assert np.all(u[~band & inside] == 1.0)
    assert np.all(u[~band & ~inside] == -1.0)


@pytest.mark.parametrize("shape", SHAPES)
def test_initial_deterministic(shape):
    assert np.array_equal(gen_initial(shape, 5, seed=11), gen_initial(shape, 5, seed=11))
    assert not np.array_equal(gen_initial(shape, 5, seed=11), gen_initial(shape, 5, seed=12))


@pytest.mark.parametrize("shape", SHAPES)
def test_band_fraction_matches_geometry(shape):
    p = 6
    mesh = build_uniform_mesh(p)
    delta = BAND_HALF_WIDTH * mesh.h
    if shape == "square":
        area = (2 * (HALF_WIDTH + delta)) ** 2 - (2 * (HALF_WIDTH - delta)) ** 2
    else:
        area = np.pi * ((HALF_WIDTH + delta) ** 2 - (HALF_WIDTH - delta) ** 2)
    frac = band_mask(shape, mesh).mean()
    assert abs(frac - area) <= 0.2 * area


def test_initial_unknown_shape():
    with pytest.raises(ConfigurationError):
        gen_initial("triangle", 3)


def test_square_level_sets_are_nested_squares():
    p = 5
    mesh = build_uniform_mesh(p)
    u = gen_initial("square", p, seed=0, mesh=mesh)
    grid = u.reshape(mesh.n_side, mesh.n_side)
    inner = np.argwhere(grid == 1.0)
    outer = np.argwhere(grid == -1.0)
    # the +1 region is an axis-aligned square centred in the domain
    lo, hi = inner.min(axis=0), inner.max(axis=0)
    assert np.array_equal(lo, lo[::-1]) and np.array_equal(hi, hi[::-1])
    assert inner.shape[0] == np.prod(hi - lo + 1)
    assert lo[0] + hi[0] == mesh.n_side - 1
    # the -1 region is the complement of a larger centred square
    box = np.ones_like(grid, dtype=bool)
    box[outer[:, 0], outer[:, 1]] = False
    blo, bhi = np.argwhere(box).min(axis=0), np.argwhere(box).max(axis=0)
    assert np.all(box[blo[0] : bhi[0] + 1, blo[1] : bhi[1] + 1])
    assert blo[0] < lo[0] and bhi[0] > hi[0]


def test_record_row_schema():
    rec = ExperimentRecord("square", 3, 1e-2, 1e-2, "I", 1, 12, 0.5, True)
    row = rec.row()
    assert tuple(row) == CSV_COLUMNS
    assert row["converged"] == "true"
    with pytest.raises(ValueError):
        ExperimentRecord("square", 3, 1e-2, 1e-2, "I", 1, -1, 0.5, True)


def test_csv_round_trip_and_determinism(tmp_path):
    a = run_table([3], [1e-2], shapes=("square", "circle"), precs=("I", "II"))
    b = run_table([3], [1e-2], shapes=("square", "circle"), precs=("I", "II"))
    path = tmp_path / "a.csv"
    write_csv(a, path)
    rows_a = read_csv(path)
    write_csv(b, tmp_path / "b.csv")
    rows_b = read_csv(tmp_path / "b.csv")
    assert list(rows_a[0]) == list(CSV_COLUMNS)
    strip = lambda rows: [{k: v for k, v in r.items() if k != "time"} for r in rows]  # noqa: E731
    assert strip(rows_a) == strip(rows_b)
    assert {r["shape"] for r in rows_a} == {"square", "circle"}
    assert {r["prec"] for r in rows_a} == {"I", "II"}
    assert all(int(r["its"]) >= 0 for r in rows_a)


def test_run_single_summary():
    seen = []
    summary = run_single("square", 3, 1e-2, "II", steps=2, callback=lambda sys_, st: seen.append(st.k))
    assert seen == [0, 1, 2]
    assert summary.converged and summary.prec == "II"
    assert summary.first_step_its == summary.records[0].gmres_iterations
    assert summary.total_its == sum(r.gmres_iterations for r in summary.records)
    assert summary.outer_steps == len(summary.records)


def test_run_single_failure_becomes_row(monkeypatch):
    from chobstacle.bench import experiments

    def boom(self, state):
        raise RuntimeError("synthetic failure")

    monkeypatch.setattr(experiments.NonsmoothNewtonSchur, "time_step", boom)
    summary = run_single("square", 3, 1e-2)
    assert not summary.converged
    assert summary.records[0].row()["converged"] == "false"


def test_manifest_round_trip(tmp_path):
    entries = {"p": 5, "epsilon": repr(1e-2), "prec": "I", "seed": 0}
    write_manifest(tmp_path / "m.txt", entries)
    assert read_manifest(tmp_path / "m.txt") == {k: str(v) for k, v in entries.items()}
    with pytest.raises(ConfigurationError):
        write_manifest(tmp_path / "bad.txt", {"a=b": 1})
    (tmp_path / "broken.txt").write_text("no separator\n")
    with pytest.raises(ConfigurationError):
        read_manifest(tmp_path / "broken.txt")


def test_snapshot_round_trip(tmp_path):
    u = np.random.default_rng(0).uniform(-1, 1, 25)
    path = write_snapshot(tmp_path / snapshot_name(3), u, 3, 0.03)
    lines = path.read_text().splitlines()
    assert lines[:3] == ["25", "3", "0.03"]
    v, k, t = read_snapshot(path)
    assert np.array_equal(u, v) and k == 3 and t == 0.03
    assert snapshot_name(12) == "u_00012.txt"
    path.write_text("26\n3\n0.03\n" + "\n".join("0" for _ in range(25)) + "\n")
    with pytest.raises(ConfigurationError):
        read_snapshot(path)


def test_grid_dump_columns():
    text = grid_dump(np.arange(9.0), 3)
    rows = text.split("\n\n")
    assert len([r for r in rows if r.strip()]) == 3
    for line in text.splitlines():
        if line:
            assert len(line.split()) == 3
    first = text.splitlines()[1].split()
    assert float(first[0]) == 0.5 and float(first[1]) == 0.0 and float(first[2]) == 1.0
    with pytest.raises(ValueError):
        grid_dump(np.arange(8.0), 3)


def test_iteration_table_row_count():
    rows = []
    for p in (3, 4):
        for eps in (1e-2, 1e-3, 1e-4):
            for step in (1, 2):
                rows.append({"shape": "square", "p": p, "epsilon": eps, "prec": "I", "step": step, "its": 7})
    table = iteration_table(rows)
    body = [line for line in table.splitlines() if not line.startswith("#")]
    assert len(body) == 2 * 3
    assert all(line.split()[-1] == "7" for line in body)
    total = iteration_table(rows, first_step_only=False)
    assert all(line.split()[-1] == "14" for line in total.splitlines()[1:])


def test_emit_plot_data(tmp_path):
    run = tmp_path / "run"
    run.mkdir()
    for k in range(2):
        write_snapshot(run / snapshot_name(k), np.linspace(-1, 1, 25), k, 0.01 * k)
    (run / snapshot_name(7)).write_text("garbage\n")
    rows = [{"shape": "square", "p": 2, "epsilon": 0.01, "prec": "I", "step": 1, "its": 4}]
    with pytest.warns(RuntimeWarning, match="skipping"):
        written = emit_plot_data(run, tmp_path / "out", csv_rows=rows)
    names = sorted(p.name for p in written)
    assert names == ["iterations.dat", "u_00000.dat", "u_00001.dat"]
    for line in (tmp_path / "out" / "u_00001.dat").read_text().splitlines()[1:]:
        assert line == "" or len(line.split()) == 3


def test_emit_plot_data_warns_when_empty(tmp_path):
    with pytest.warns(RuntimeWarning, match="no snapshots"):
        assert emit_plot_data(tmp_path) == []


def test_spectrum_report_contents():
    rep = spectrum_report(3, 1e-2, mask_source="random", seed=2)
    assert rep["interlacing"]["ok"]
    assert rep["k_hat_inverse_min"] >= -1e-12
    assert rep["schur_symmetric"] and rep["schur_min_eig"] > 0
    assert rep["prec2_cluster_ok"]
    text = format_report(rep)
    assert "interlacing: ok" in text and "prec II" in text


def test_spectrum_report_all_active():
    rep = spectrum_report(2, 1e-2, mask_source="all")
    assert "schur_min_eig" not in rep
    assert "singular" in format_report(rep)


def test_spectrum_report_limits():
    with pytest.raises(ConfigurationError):
        spectrum_report(5, 1e-2)
    sys_ = assemble_system(build_uniform_mesh(2), 1e-2, 1e-2)
    with pytest.raises(ConfigurationError):
        resolve_mask("hexagon", sys_)


@pytest.mark.parametrize("seed", range(5))
def test_interlacing_random_masks(seed):
    sys_ = assemble_system(build_uniform_mesh(3), 1e-2, 1e-2)
    assert interlacing_check(sys_.A.toarray(), resolve_mask("random", sys_, seed))["ok"]


def test_cli_run_writes_outputs(tmp_path, capsys):
    csv_path = tmp_path / "out.csv"
    snaps = tmp_path / "snaps"
    code = cli.main(["--p", "3", "--prec", "1,2", "--shape", "square", "--steps", "2",
                     "--csv", str(csv_path), "--snapshots", str(snaps)])
    assert code == cli.EXIT_OK
    out = capsys.readouterr().out
    assert out.count("converged=True") == 2
    rows = read_csv(csv_path)
    assert {r["prec"] for r in rows} == {"I", "II"}
    run_dir = snaps / "square_p3_eps0.01_precI"
    manifest = read_manifest(run_dir / "manifest.txt")
    assert manifest["p"] == "3" and manifest["prec"] == "I" and manifest["gmres_restart"] == "200"
    assert sorted(p.name for p in run_dir.glob("u_*.txt")) == [snapshot_name(k) for k in range(3)]


def test_cli_reports_non_convergence():
    assert cli.main(["--p", "2", "--outer-tol", "1e-30", "--steps", "1"]) == cli.EXIT_NOT_CONVERGED


def test_cli_spectrum(capsys):
    assert cli.main(["--spectrum", "--p", "2", "--shape", "circle"]) == cli.EXIT_OK
    assert "interlacing" in capsys.readouterr().out


def test_cli_rejects_bad_flags():
    with pytest.raises(SystemExit):
        cli.main(["--prec", "3"])
    with pytest.raises(SystemExit):
        cli.main(["--shape", "triangle"])


def test_cli_defaults():
    args = cli.build_parser().parse_args([])
    assert args.gmres_restart == 200 and args.gmres_maxit == 300 and args.gmres_rtol == 1e-7
    assert args.tau is None and args.outer_tol == 1e-7
