import csv
import math
from pathlib import Path

import pytest

from femcert.cli import main, parse_grid, parse_real
from femcert.trimesh import generate_friedrichs_keller, read_mesh

DATA = Path(__file__).parent / "data"


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def assert_csv_close(got, want, rel=1e-10):
    a, b = rows(got), rows(want)
    assert len(a) == len(b)
    assert a[0] == b[0]
    for ra, rb in zip(a[1:], b[1:]):
        assert len(ra) == len(rb)
        for x, y in zip(ra, rb):
            try:
                fx, fy = float(x), float(y)
            except ValueError:
                assert x == y
                continue
            if math.isnan(fy):
                assert math.isnan(fx)
            else:
                assert fx == pytest.approx(fy, rel=rel, abs=1e-15)


def test_parse_real_and_grid():
    assert parse_real("pi/2") == pytest.approx(math.pi / 2)
    assert parse_real("2*pi/3") == pytest.approx(2 * math.pi / 3)
    assert parse_grid("0.1:1:0.1") == pytest.approx([0.1 * k for k in range(1, 11)])
    assert parse_grid("0.05:1.0:0.05")[-1] == 1.0


@pytest.mark.parametrize("N, nv, nt", [(4, 25, 32), (1, 4, 2)])
def test_mesh_gen(tmp_path, N, nv, nt):
    out = tmp_path / "m.mesh"
    assert main(["mesh-gen", "--fk", str(N), "-o", str(out)]) == 0
    m = read_mesh(out.read_text())
    assert (m.n_vertices, m.n_triangles) == (nv, nt)
    assert m.same_structure(generate_friedrichs_keller(N))


def test_mesh_gen_golden(tmp_path):
    out = tmp_path / "m.mesh"
    main(["mesh-gen", "--fk", "2", "-o", str(out)])
    assert out.read_text() == (DATA / "fk2.mesh").read_text()


def test_converge_golden_and_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["converge", "--N", "2", "--f", "builtin:sinsin", "-o", str(a), "--no-svg"]) == 0
    assert main(["converge", "--N", "2", "--f", "builtin:sinsin", "-o", str(b), "--no-svg"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert_csv_close(a, DATA / "converge_N2.csv")
    assert not list(tmp_path.glob("*.svg"))


def test_solve_golden(tmp_path):
    prefix = tmp_path / "run"
    assert main(["solve", "--fk", "2", "--f", "builtin:sinsin", "-o", str(prefix)]) == 0
    for suffix in ("report", "solution", "flux"):
        assert_csv_close(f"{prefix}_{suffix}.csv", DATA / f"solve_fk2_{suffix}.csv")


def test_converge_study(tmp_path):
    out, svg = tmp_path / "c.csv", tmp_path / "c.svg"
    assert main(["converge", "--N", "4,8,16,32,64", "-o", str(out), "--svg", str(svg)]) == 0
    table = rows(out)
    body, footer = table[1:-1], table[-1]
    assert len(body) == 5
    col = {name: i for i, name in enumerate(table[0])}
    for r in body:
        assert float(r[col["apriori_energy"]]) >= float(r[col["energy_err"]])
    assert footer[0] == "slope"
    assert float(footer[col["energy_err"]]) == pytest.approx(1.0, abs=0.1)
    assert float(footer[col["l2_err"]]) == pytest.approx(2.0, abs=0.15)
    text = svg.read_text()
    assert text.startswith("<svg") and "polyline" in text


def test_solve_fk8_populated(tmp_path):
    prefix = tmp_path / "s"
    assert main(["solve", "--fk", "8", "--f", "builtin:sinsin", "-o", str(prefix)]) == 0
    header, row = rows(f"{prefix}_report.csv")
    values = dict(zip(header, row))
    for name in header[:-1]:
        assert values[name] != ""
    assert values["warning"] == ""


def test_solve_zero_load(tmp_path):
    prefix = tmp_path / "z"
    assert main(["solve", "--fk", "4", "--f", "builtin:const:0", "-o", str(prefix)]) == 0
    header, row = rows(f"{prefix}_report.csv")
    values = dict(zip(header, row))
    for name in ("energy_err", "l2_err", "apriori_energy", "apriori_l2", "apost_flux", "apost_mid"):
        assert float(values[name]) == 0


def test_solve_flat_triangle_warns(tmp_path):
    mesh = tmp_path / "flat.mesh"
    mesh.write_text("ncmesh v1\n4 2\n0 0\n1 0\n0.5 0.03\n0.5 -0.5\n0 1 2\n0 3 1\n")
    prefix = tmp_path / "f"
    assert main(["solve", "--mesh", str(mesh), "--f", "builtin:const:1", "-o", str(prefix), "--convex"]) == 0
    header, row = rows(f"{prefix}_report.csv")
    values = dict(zip(header, row))
    assert float(values["max_angle_deg"]) > 170
    assert float(values["C6h"]) > 10
    assert "maximum angle" in values["warning"]


def test_constants_atlas(tmp_path):
    out, svg = tmp_path / "a.csv", tmp_path / "a.svg"
    code = main(
        ["constants", "--J", "0,4", "--alpha", "0.5:1:0.5", "--theta", "pi/2", "--n", "16", "--poly-degree", "6",
         "-o", str(out), "--svg", str(svg)]
    )
    assert code == 0
    table = rows(out)
    assert len(table) == 5
    row = next(r for r in table[1:] if r[0] == "0" and float(r[1]) == 1.0)
    assert float(row[3]) <= 1 / math.pi <= float(row[4])
    c0 = {float(r[1]): float(r[3]) for r in table[1:] if r[0] == "0"}
    c4 = {float(r[1]): float(r[3]) for r in table[1:] if r[0] == "4"}
    assert all(c4[a] <= c0[a] for a in c0)
    assert svg.exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["constants", "--J", "9", "--alpha", "0.1:1:0.1", "-o", "x.csv"],
        ["constants", "--J", "0", "--alpha", "1:0.1:0.1", "-o", "x.csv"],
        ["constants", "--J", "0", "--alpha", "0.5:1:0.5", "--theta", "0.2", "-o", "x.csv"],
        ["constants", "--J", "0", "--alpha", "0.5:1:0.5", "--theta", "import os", "-o", "x.csv"],
        ["solve", "--fk", "0", "--f", "builtin:sinsin", "-o", "p"],
        ["solve", "--fk", "2", "--f", "builtin:nope", "-o", "p"],
        ["solve", "--fk", "2", "--mesh", "m", "--f", "builtin:sinsin", "-o", "p"],
        ["converge", "--N", "a,b", "-o", "x.csv"],
        ["converge", "--N", "2", "--f", "builtin:const:1", "-o", "x.csv"],
        ["frobnicate"],
    ],
)
def test_config_errors_exit_2(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


def test_bad_mesh_file_exit_2(tmp_path):
    mesh = tmp_path / "cw.mesh"
    mesh.write_text("ncmesh v1\n3 1\n0 0\n1 0\n0 1\n0 2 1\n")
    assert main(["solve", "--mesh", str(mesh), "--f", "builtin:const:1", "-o", str(tmp_path / "p")]) == 2
    assert main(["solve", "--mesh", str(tmp_path / "missing"), "--f", "builtin:const:1", "-o", str(tmp_path / "p")]) == 2


def test_numerical_failure_exit_3(tmp_path, monkeypatch):
    from femcert import cli
    from femcert.femcore import SolverError

    def boom(*args, **kwargs):
        raise SolverError("forced", 1.0)

    monkeypatch.setattr(cli, "convergence_study", boom)
    assert main(["converge", "--N", "2", "-o", str(tmp_path / "x.csv")]) == 3


def test_atlas_point_failure_is_marked(tmp_path, monkeypatch):
    from femcert import cli

    real = cli.constants.estimate

    def flaky(J, alpha, *args):
        if alpha == 0.5:
            raise cli.np.linalg.LinAlgError("forced")
        return real(J, alpha, *args)

    monkeypatch.setattr(cli.constants, "estimate", flaky)
    out = tmp_path / "a.csv"
    assert main(["constants", "--J", "0", "--alpha", "0.5:1:0.5", "--n", "8", "-o", str(out)]) == 3
    table = rows(out)
    assert table[1][5].startswith("failed:") and table[2][5].startswith("eigen-lower")


def test_constants_full_grid_performance(tmp_path):
    import time

    t0 = time.perf_counter()
    out = tmp_path / "a.csv"
    assert main(["constants", "--J", "0,12,4,5", "--alpha", "0.05:1.0:0.05", "--n", "32", "-o", str(out)]) == 0
    assert time.perf_counter() - t0 < 300
    assert len(rows(out)) == 1 + 4 * 20
