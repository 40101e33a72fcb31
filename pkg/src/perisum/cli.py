"""Command-line driver: solve / convergence / error-study / bench / gen-coax.

Problem definitions are plain-text key-value files (diff-able experiment
provenance); point sets travel as CSV with full double precision.
"""
from __future__ import annotations

import argparse
import io
import sys
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .errors import (NotConvergedError, PerisumError, SeparationError,
                     ValidationError, WoodAnomalyError)
from .farzone import build_far_plan, eval_far
from .model import (ObserverPointSet, Periodicity, PeriodicityConfig,
                    Regime, SolverParams, SourcePointSet, TargetBox,
                    validate_problem)
from .nearzone import build_near_plan, eval_near
from .oracle import eval_direct
from .pgf import TruncationPolicy, pgf_lattice_trace, pgf_spectral_trace
from .solver import build_plan

__all__ = ["ProblemFile", "main"]

_FMT = "%.17g"

_REGIMES = {"dynamic": Regime.DYNAMIC, "static-shifted": Regime.STATIC_SHIFTED,
            "npsp": Regime.NPSP}


@dataclass
class ProblemFile:
    """Flat key-value problem description; unknown keys are rejected."""
    dim: int = 1
    Lx: float = 1.0
    Ly: float = 1.0
    Lz: float = 1.0
    k0_re: float = 0.0
    k0_im: float = 0.0
    kx0_re: float = 0.0
    kx0_im: float = 0.0
    ky0_re: float = 0.0
    ky0_im: float = 0.0
    kz0_re: float = 0.0
    kz0_im: float = 0.0
    regime: str = "npsp"
    Dx: float = 1.0
    Dy: float = 1.0
    Dz: float = 1.0
    i_d: int = 1
    far_order: int = 3
    far_grid: str = "10,10,10"
    near_order: int = 2
    near_grid: str = "auto"
    series_tol: float = 1e-10
    er_range_boxes: int = 1
    sources_path: str = ""
    observers_path: str = ""
    output_path: str = ""

    @classmethod
    def load(cls, path) -> "ProblemFile":
        known = {f.name: f for f in fields(cls)}
        values = {}
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" in line:
                    key, _, val = line.partition("=")
                else:
                    parts = line.split(None, 1)
                    if len(parts) != 2:
                        raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                    key, val = parts
                key = key.strip()
                val = val.strip()
                if key not in known:
                    raise ValueError(f"{path}:{lineno}: unknown key '{key}'")
                typ = known[key].type
                if typ in ("int", int):
                    values[key] = int(val)
                elif typ in ("float", float):
                    values[key] = float(val)
                else:
                    values[key] = val
        return cls(**values)

    def config(self) -> PeriodicityConfig:
        return PeriodicityConfig(
            dim=Periodicity(self.dim),
            L=(self.Lx, self.Ly, self.Lz),
            k0=complex(self.k0_re, self.k0_im),
            kshift=(complex(self.kx0_re, self.kx0_im),
                    complex(self.ky0_re, self.ky0_im),
                    complex(self.kz0_re, self.kz0_im)),
            regime=_REGIMES[self.regime])

    def box(self) -> TargetBox:
        return TargetBox((self.Dx, self.Dy, self.Dz))

    def params(self) -> SolverParams:
        return SolverParams(
            i_d=self.i_d, far_order=self.far_order,
            far_grid=_parse_triple_int(self.far_grid),
            near_order=self.near_order,
            near_grid=(None if self.near_grid.strip().lower() == "auto"
                       else _parse_triple_int(self.near_grid)),
            series_tol=self.series_tol, er_range_boxes=self.er_range_boxes)


def _parse_triple_int(text: str) -> tuple[int, int, int]:
    parts = [int(p) for p in str(text).replace(",", " ").split()]
    if len(parts) == 1:
        parts = parts * 3
    if len(parts) != 3:
        raise ValueError(f"expected 1 or 3 integers, got {text!r}")
    return tuple(parts)  # type: ignore[return-value]


def _parse_triple_float(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in str(text).replace(",", " ").split()]
    if len(parts) != 3:
        raise ValueError(f"expected 3 floats, got {text!r}")
    return tuple(parts)  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# CSV point-set I/O (decimal point, comma separator, LF, 17 significant digits)
# ---------------------------------------------------------------------------

def _read_csv(path, want: tuple[str, ...]) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().strip()
        cols = tuple(c.strip() for c in header.split(","))
        if cols != want:
            raise ValueError(
                f"{path}: expected header {','.join(want)}, got {header!r}")
        rest = fh.read().strip()
    if not rest:
        return np.zeros((0, len(want)))
    body = np.loadtxt(io.StringIO(rest), delimiter=",", ndmin=2)
    if body.shape[1] != len(want):
        raise ValueError(f"{path}: expected {len(want)} columns")
    return body


def read_sources_csv(path) -> SourcePointSet:
    data = _read_csv(path, ("x", "y", "z", "q_re", "q_im"))
    return SourcePointSet(data[:, :3], data[:, 3] + 1j * data[:, 4])


def read_observers_csv(path) -> ObserverPointSet:
    return ObserverPointSet(_read_csv(path, ("x", "y", "z")))


def write_sources_csv(path, src: SourcePointSet) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("x,y,z,q_re,q_im\n")
        for p, a in zip(src.positions, src.amplitudes):
            fh.write(",".join(_FMT % v for v in (*p, a.real, a.imag)) + "\n")


def write_observers_csv(path, obs: ObserverPointSet) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("x,y,z\n")
        for p in obs.positions:
            fh.write(",".join(_FMT % v for v in p) + "\n")


def write_potentials_csv(stream, positions: np.ndarray, values: np.ndarray) -> None:
    stream.write("x,y,z,u_re,u_im\n")
    for p, u in zip(positions, values):
        stream.write(",".join(_FMT % v for v in (*p, u.real, u.imag)) + "\n")


def _open_output(path):
    if not path or path == "-":
        return sys.stdout, False
    return open(path, "w", newline="\n"), True


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_solve(args) -> int:
    problem = ProblemFile.load(args.problem) if args.problem else ProblemFile()
    problem = _apply_overrides(problem, args)
    try:
        src = read_sources_csv(problem.sources_path)
        obs = read_observers_csv(problem.observers_path)
    except OSError as e:
        print(f"error: cannot read point sets: {e}", file=sys.stderr)
        return 3
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    cfg, box, params = problem.config(), problem.box(), problem.params()
    report = validate_problem(cfg, box, src, obs, params)
    if report:
        for msg in report.messages:
            print(f"validation: {msg}", file=sys.stderr)
        return 1
    try:
        t0 = time.perf_counter()
        plan = build_plan(cfg, box, src, obs, params,
                          kernel_cache=args.kernel_cache)
        t_build = time.perf_counter() - t0
        t0 = time.perf_counter()
        u = plan.evaluate(src.amplitudes)
        t_eval = time.perf_counter() - t0
    except (WoodAnomalyError, NotConvergedError, SeparationError) as e:
        print(f"kernel series failure: {e}", file=sys.stderr)
        return 2
    except ValidationError as e:
        print(f"validation: {e}", file=sys.stderr)
        return 1
    try:
        stream, close = _open_output(problem.output_path or args.output)
        write_potentials_csv(stream, obs.positions, u)
        if close:
            stream.close()
    except OSError as e:
        print(f"error: cannot write output: {e}", file=sys.stderr)
        return 3
    print(f"N={len(src)} M={len(obs)} "
          f"near_grid={plan.near.grid.dims} far_grid={plan.far.source_grid.dims} "
          f"build={t_build * 1e3:.1f}ms eval={t_eval * 1e3:.1f}ms "
          f"far_series_terms={plan.far.kernel_terms} "
          f"corrections={plan.near.pair_obs.size}", file=sys.stderr)
    return 0


def _apply_overrides(problem: ProblemFile, args) -> ProblemFile:
    updates = {}
    for f in fields(ProblemFile):
        v = getattr(args, f.name, None)
        if v is not None:
            updates[f.name] = v
    return replace(problem, **updates) if updates else problem


def cmd_convergence(args) -> int:
    problem = _apply_overrides(ProblemFile(), args)
    cfg = problem.config()
    point = _parse_triple_float(args.point)
    policy = TruncationPolicy(tol=1e-15, consecutive_small=4)
    deep = TruncationPolicy(tol=1e-15, consecutive_small=12)
    try:
        if cfg.regime is Regime.NPSP:
            trace = pgf_lattice_trace(point, cfg, policy)
            ref = pgf_lattice_trace(point, cfg, deep)[-1][1]
        else:
            trace = pgf_spectral_trace(point, cfg, policy)
            ref = pgf_spectral_trace(point, cfg, deep)[-1][1]
    except (WoodAnomalyError, NotConvergedError, SeparationError) as e:
        print(f"kernel series failure: {e}", file=sys.stderr)
        return 2
    stream, close = _open_output(args.output)
    stream.write("terms,rel_error\n")
    for terms, val in trace:
        err = abs(val - ref) / abs(ref)
        stream.write(f"{terms},{_FMT % err}\n")
    if close:
        stream.close()
    return 0


def cmd_error_study(args) -> int:
    problem = ProblemFile.load(args.problem) if args.problem else ProblemFile()
    problem = _apply_overrides(problem, args)
    try:
        src = read_sources_csv(problem.sources_path)
        obs = read_observers_csv(problem.observers_path)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    if len(src) > args.oracle_cap:
        print(f"error: N={len(src)} exceeds the oracle cap {args.oracle_cap}",
              file=sys.stderr)
        return 1
    cfg, box = problem.config(), problem.box()
    orders = [int(v) for v in args.orders.split(",")]
    grids = [int(v) for v in args.grids.split(",")]
    id_values = [int(v) for v in args.id_values.split(",")]
    try:
        oracle = eval_direct(cfg, src, obs,
                             TruncationPolicy(tol=problem.series_tol * 1e-2))
        if not oracle.ok():
            print(f"oracle failures on {len(oracle.failures)} pairs "
                  f"(first: {oracle.failures[0]})", file=sys.stderr)
            return 2
        scale = float(np.max(np.abs(oracle.values)))
        stream, close = _open_output(args.output)
        stream.write("order,grid,i_d,max_rel_error\n")
        for i_d in id_values:
            for grid in grids:
                for order in orders:
                    params = replace(problem.params(), far_order=order,
                                     far_grid=(grid, grid, grid), i_d=i_d)
                    near = build_near_plan(cfg, box, src, obs, params)
                    far = build_far_plan(cfg, box, src, obs, params)
                    u = eval_near(near, src.amplitudes) + eval_far(far, src.amplitudes)
                    err = float(np.max(np.abs(u - oracle.values))) / scale
                    stream.write(f"{order},{grid},{i_d},{_FMT % err}\n")
        if close:
            stream.close()
    except (WoodAnomalyError, NotConvergedError, SeparationError) as e:
        print(f"kernel series failure: {e}", file=sys.stderr)
        return 2
    return 0


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    d = args.box_size
    length = d + args.gap
    cfg = PeriodicityConfig(Periodicity(args.dim), (length, length, length))
    box = TargetBox((d, d, d))
    rng = np.random.default_rng(args.seed)
    stream, close = _open_output(args.output)
    stream.write("N,build_ms,eval_ms,periodic_overhead_ratio,build_overhead_ratio\n")
    for n in sizes:
        pos = rng.uniform(0.0, d, (n, 3))
        q = rng.uniform(-1.0, 1.0, n)
        q -= q.mean()
        src = SourcePointSet(pos, q)
        obs = ObserverPointSet(pos)
        params = SolverParams()

        t0 = time.perf_counter()
        near = build_near_plan(cfg, box, src, obs, params)
        far = build_far_plan(cfg, box, src, obs, params)
        build_p = time.perf_counter() - t0
        eval_p = _best_eval_time(lambda: eval_near(near, q) + eval_far(far, q),
                                 args.repeats)
        del near, far

        free_params = replace(params, i_d=0)
        t0 = time.perf_counter()
        near0 = build_near_plan(cfg, box, src, obs, free_params)
        build_f = time.perf_counter() - t0
        eval_f = _best_eval_time(lambda: eval_near(near0, q), args.repeats)
        del near0

        stream.write(f"{n},{build_p * 1e3:.3f},{eval_p * 1e3:.3f},"
                     f"{eval_p / eval_f:.4f},{build_p / build_f:.4f}\n")
        stream.flush()
    if close:
        stream.close()
    return 0


def _best_eval_time(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(max(repeats, 1)):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cmd_gen_coax(args) -> int:
    """Coaxial two-shell source cloud: uniform angular/axial discretization,
    charges scaled to exact neutrality."""
    cy, cz = (float(v) for v in args.center.split(","))
    length = args.length
    rows = []
    charges = []
    for radius, rho in ((args.r1, args.rho1), (args.r2, args.rho2)):
        nphi = max(3, int(round(args.nphi * radius / args.r1)))
        cell_q = rho * (2 * np.pi * radius / nphi) * (length / args.naxial)
        for i in range(args.naxial):
            x = (i + 0.5) * length / args.naxial
            for j in range(nphi):
                phi = 2 * np.pi * j / nphi
                rows.append((x, cy + radius * np.cos(phi), cz + radius * np.sin(phi)))
                charges.append(cell_q)
    pos = np.asarray(rows)
    q = np.asarray(charges, dtype=float)
    pos_total = q[q > 0].sum()
    neg_total = -q[q < 0].sum()
    if pos_total > 0:
        q[q > 0] *= neg_total / pos_total     # exact neutrality
    src = SourcePointSet(pos, q)
    write_sources_csv(args.output, src)
    print(f"wrote {len(src)} sources (net charge {abs(src.net_charge()):.3e})",
          file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_problem_flags(p: argparse.ArgumentParser) -> None:
    for f in fields(ProblemFile):
        if f.type in ("int", int):
            p.add_argument(f"--{f.name}", type=int, default=None)
        elif f.type in ("float", float):
            p.add_argument(f"--{f.name}", type=float, default=None)
        else:
            p.add_argument(f"--{f.name}", type=str, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="perisum",
        description="Fast periodic superposition sums in a periodic unit cell")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="evaluate potentials for a problem file")
    p.add_argument("problem", nargs="?", help="problem definition file")
    p.add_argument("--output", default="", help="output CSV (default stdout)")
    p.add_argument("--kernel-cache", default=None,
                   help="path for the far-kernel blob cache")
    _add_problem_flags(p)
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("convergence",
                       help="per-layer series convergence at one point")
    p.add_argument("--point", default="0.5,0.5,0.5")
    p.add_argument("--output", default="")
    _add_problem_flags(p)
    p.set_defaults(fn=cmd_convergence)

    p = sub.add_parser("error-study",
                       help="sweep far order/grid/images against the oracle")
    p.add_argument("problem", nargs="?")
    p.add_argument("--orders", default="1,3,6")
    p.add_argument("--grids", default="10")
    p.add_argument("--id-values", default="1")
    p.add_argument("--oracle-cap", type=int, default=20000)
    p.add_argument("--output", default="")
    _add_problem_flags(p)
    p.set_defaults(fn=cmd_error_study)

    p = sub.add_parser("bench", help="timing sweep over problem sizes")
    p.add_argument("--sizes", default="10000,20000,40000,80000")
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--box-size", type=float, default=100.0)
    p.add_argument("--gap", type=float, default=1.0,
                   help="period minus box extent")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", default="")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("gen-coax", help="generate a coaxial two-shell source CSV")
    p.add_argument("--r1", type=float, default=1.0)
    p.add_argument("--r2", type=float, default=2.0)
    p.add_argument("--rho1", type=float, default=-1.0)
    p.add_argument("--rho2", type=float, default=0.5)
    p.add_argument("--length", type=float, default=1.0)
    p.add_argument("--nphi", type=int, default=64)
    p.add_argument("--naxial", type=int, default=32)
    p.add_argument("--center", default="2.5,2.5")
    p.add_argument("--output", required=True)
    p.set_defaults(fn=cmd_gen_coax)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PerisumError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
