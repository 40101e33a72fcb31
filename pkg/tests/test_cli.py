"""Command-line driver: problem files, CSV round-trips, exit codes."""
import io
import subprocess
import sys

import numpy as np
import pytest

from perisum.cli import (ProblemFile, main, read_observers_csv, read_sources_csv,
                         write_observers_csv, write_potentials_csv,
                         write_sources_csv)
from perisum.model import ObserverPointSet, SourcePointSet


def run_cli(*argv):
    return main(list(argv))


def _write_cloud(tmp_path, rng, n=60, m=8, box=5.0):
    pos = rng.uniform(0, box, (n, 3))
    q = rng.uniform(-1, 1, n)
    q -= q.mean()
    src = SourcePointSet(pos, q)
    obs_rows = []
    while len(obs_rows) < m:
        cand = rng.uniform(0.3, box - 0.3, (6 * m, 3))
        d = cand[:, None, :] - pos[None, :, :]
        t = np.hypot(d[:, :, 1], d[:, :, 2])
        r = np.sqrt(np.einsum("mnk,mnk->mn", d, d))
        ok = (t.min(axis=1) > 0.15) & (r.min(axis=1) > 0.25)
        obs_rows.extend(cand[ok][: m - len(obs_rows)])
    obs = ObserverPointSet(np.asarray(obs_rows))
    spath = tmp_path / "src.csv"
    opath = tmp_path / "obs.csv"
    write_sources_csv(spath, src)
    write_observers_csv(opath, obs)
    return src, obs, spath, opath


def _problem_text(spath, opath, out, box=5.0, extra=""):
    return (f"dim = 1\nLx = {box}\nLy = {box}\nLz = {box}\n"
            f"regime = npsp\nDx = {box}\nDy = {box}\nDz = {box}\n"
            f"near_grid = 9,9,9\nfar_grid = 6\n"
            f"sources_path = {spath}\nobservers_path = {opath}\n"
            f"output_path = {out}\n" + extra)


def test_problem_file_defaults_and_unknown_key(tmp_path):
    p = tmp_path / "p.txt"
    p.write_text("dim = 2\nLx = 3.5\n# comment\nregime = dynamic\nk0_re = 1.0\n")
    prob = ProblemFile.load(p)
    assert prob.dim == 2 and prob.Lx == 3.5 and prob.Ly == 1.0
    assert prob.far_order == 3 and prob.series_tol == 1e-10
    bad = tmp_path / "bad.txt"
    bad.write_text("dim = 1\nnosuchkey = 5\n")
    with pytest.raises(ValueError, match="unknown key"):
        ProblemFile.load(bad)


def test_csv_roundtrip_bit_exact(tmp_path, rng):
    pos = rng.uniform(-1, 1, (37, 3)) * 10.0 ** rng.integers(-12, 12, (37, 3))
    q = rng.normal(size=37) * 1e-7 + 1j * rng.normal(size=37) * 1e3
    src = SourcePointSet(pos, q)
    path = tmp_path / "s.csv"
    write_sources_csv(path, src)
    back = read_sources_csv(path)
    assert np.array_equal(back.positions, src.positions)
    assert np.array_equal(back.amplitudes, src.amplitudes)

    obs = ObserverPointSet(pos)
    path2 = tmp_path / "o.csv"
    write_observers_csv(path2, obs)
    back2 = read_observers_csv(path2)
    assert np.array_equal(back2.positions, obs.positions)


def test_potentials_csv_format():
    buf = io.StringIO()
    write_potentials_csv(buf, np.array([[0.1, 0.2, 0.3]]),
                         np.array([1.5 - 2.5j]))
    lines = buf.getvalue().split("\n")
    assert lines[0] == "x,y,z,u_re,u_im"
    assert lines[1] == "0.10000000000000001,0.20000000000000001,0.29999999999999999,1.5,-2.5"


def test_solve_roundtrip_and_permutation_invariance(tmp_path, rng):
    src, obs, spath, opath = _write_cloud(tmp_path, rng)
    out1 = tmp_path / "u1.csv"
    prob = tmp_path / "prob.txt"
    prob.write_text(_problem_text(spath, opath, out1))
    assert run_cli("solve", str(prob)) == 0

    # permute source rows; output must match to near machine precision
    perm = rng.permutation(len(src))
    write_sources_csv(spath, SourcePointSet(src.positions[perm],
                                            src.amplitudes[perm]))
    out2 = tmp_path / "u2.csv"
    prob2 = tmp_path / "prob2.txt"
    prob2.write_text(_problem_text(spath, opath, out2))
    assert run_cli("solve", str(prob2)) == 0

    u1 = np.loadtxt(out1, delimiter=",", skiprows=1)
    u2 = np.loadtxt(out2, delimiter=",", skiprows=1)
    scale = np.abs(u1[:, 3] + 1j * u1[:, 4]).max()
    assert np.max(np.abs(u1 - u2)) <= 1e-14 * max(scale, 1.0)


def test_solve_exit_code_validation(tmp_path, rng):
    src, obs, spath, opath = _write_cloud(tmp_path, rng, n=10, m=3)
    empty = tmp_path / "empty.csv"
    empty.write_text("x,y,z,q_re,q_im\n")
    prob = tmp_path / "p.txt"
    prob.write_text(_problem_text(empty, opath, tmp_path / "u.csv"))
    assert run_cli("solve", str(prob)) == 1


def test_solve_exit_code_io(tmp_path):
    prob = tmp_path / "p.txt"
    prob.write_text(_problem_text(tmp_path / "missing.csv",
                                  tmp_path / "missing2.csv", ""))
    assert run_cli("solve", str(prob)) == 3


def test_solve_exit_code_anomaly(tmp_path, rng):
    src, obs, spath, opath = _write_cloud(tmp_path, rng, n=10, m=3, box=1.0)
    # k0 = 2 pi / L puts a Floquet root exactly at zero
    prob = tmp_path / "p.txt"
    prob.write_text(
        f"dim = 2\nLx = 1\nLy = 1\nLz = 1\nregime = dynamic\n"
        f"k0_re = {2 * np.pi}\nkx0_re = 0\n"
        f"Dx = 1\nDy = 1\nDz = 1\nnear_grid = 7,7,7\nfar_grid = 5\nfar_order = 2\n"
        f"sources_path = {spath}\nobservers_path = {opath}\n")
    assert run_cli("solve", str(prob)) == 2


def test_gen_coax_neutral(tmp_path):
    out = tmp_path / "coax.csv"
    assert run_cli("gen-coax", "--output", str(out), "--nphi", "16",
                   "--naxial", "8") == 0
    src = read_sources_csv(out)
    assert abs(src.net_charge()) < 1e-14 * np.abs(src.amplitudes).sum()
    # inner shell negative, outer positive
    assert (src.amplitudes.real < 0).any() and (src.amplitudes.real > 0).any()


def test_convergence_csv_decays(tmp_path, capsys):
    out = tmp_path / "conv.csv"
    assert run_cli("convergence", "--dim", "1", "--regime", "npsp",
                   "--point", "0.5,0.5,0.5", "--output", str(out)) == 0
    rows = np.loadtxt(out, delimiter=",", skiprows=1, ndmin=2)
    errs = rows[:, 1]
    # geometric decay until hitting the reference floor
    decaying = errs[errs > 1e-13]
    assert len(decaying) >= 4
    assert np.all(np.diff(np.log(decaying)) < 0)


def test_error_study_runs_and_trends(tmp_path, rng):
    src, obs, spath, opath = _write_cloud(tmp_path, rng, n=120, m=10)
    prob = tmp_path / "p.txt"
    out = tmp_path / "study.csv"
    prob.write_text(_problem_text(spath, opath, ""))
    assert run_cli("error-study", str(prob), "--orders", "1,3",
                   "--grids", "6", "--id-values", "1", "--output", str(out)) == 0
    rows = out.read_text().strip().split("\n")
    assert rows[0] == "order,grid,i_d,max_rel_error"
    assert len(rows) == 3
    errs = {int(r.split(",")[0]): float(r.split(",")[3]) for r in rows[1:]}
    assert errs[3] < 0.05 and errs[1] < 0.5


def test_error_study_oracle_cap(tmp_path, rng):
    src, obs, spath, opath = _write_cloud(tmp_path, rng, n=30, m=3)
    prob = tmp_path / "p.txt"
    prob.write_text(_problem_text(spath, opath, ""))
    assert run_cli("error-study", str(prob), "--oracle-cap", "10") == 1


def test_bench_smoke(tmp_path):
    out = tmp_path / "bench.csv"
    assert run_cli("bench", "--sizes", "400,800", "--dim", "1",
                   "--box-size", "10", "--repeats", "1",
                   "--output", str(out)) == 0
    rows = out.read_text().strip().split("\n")
    assert rows[0].startswith("N,build_ms,eval_ms,periodic_overhead_ratio")
    assert len(rows) == 3


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "perisum.cli", "--help"],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert "solve" in r.stdout and "gen-coax" in r.stdout
