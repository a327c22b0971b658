"""Batch front end.

Subcommands: forward | invert | roundtrip | zeros | validate-bc.
All configuration comes from a single JSON file (--config); data goes to
files under --out, logs to stderr, and every run writes report.json with
input echo, stage timings, diagnostics, and a sha256 manifest of emitted
files.

JSON conventions: complex scalars as [re, im] pairs, matrices as
row-major nested arrays (entries either real numbers or [re, im]).

Exit codes: 0 success, 2 config error, 3 numerical failure (with stage
name), 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from . import boundary as bnd
from . import potentials
from .contour import Contour, ContourNode, build_contour
from .core import (
    BoundaryCondition,
    ConvergenceError,
    DataQualityError,
    DomainError,
    PoleProximityError,
    PotentialGrid,
    ReconstructionError,
    SpectralPoint,
    matnorm,
)
from .forward import Problem, scan_jost_zeros
from .inverse import InvertConfig, WeylData, generate_weyl_data, invert

__all__ = ["main", "run", "load_config"]

log = logging.getLogger("weylinv")

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_NUMERICAL_ERRORS = (
    ConvergenceError,
    PoleProximityError,
    DataQualityError,
    ReconstructionError,
    DomainError,
    np.linalg.LinAlgError,
)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# JSON value parsing
# ---------------------------------------------------------------------------

def _as_complex(v):
    if isinstance(v, (int, float)):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2:
        return complex(v[0], v[1])
    raise ConfigError(f"expected number or [re, im] pair, got {v!r}")


def _as_matrix(rows):
    try:
        return np.array([[_as_complex(v) for v in row] for row in rows])
    except (TypeError, ConfigError) as exc:
        raise ConfigError(f"bad matrix spec: {exc}") from exc


def _complex_out(z):
    z = complex(z)
    return [z.real, z.imag]


def _matrix_out(M):
    return [[_complex_out(v) for v in row] for row in np.atleast_2d(M)]


def load_config(path: str) -> dict:
    with open(path) as f:
        try:
            cfg = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


# ---------------------------------------------------------------------------
# Problem construction from config
# ---------------------------------------------------------------------------

def _build_boundary(spec: dict, n: int, rng) -> BoundaryCondition:
    form = spec.get("form")
    if form == "projector":
        return BoundaryCondition(A=_as_matrix(spec["A"]), h=_as_matrix(spec["h"]))
    if form == "unitary":
        return bnd.from_unitary(_as_matrix(spec["U"]))
    if form == "delta":
        return bnd.delta_condition(n, float(spec["coupling"]))
    if form == "dirichlet":
        return bnd.dirichlet(n)
    if form == "neumann":
        return bnd.neumann(n)
    if form == "random-unitary":
        X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        U, _ = np.linalg.qr(X)
        return bnd.from_unitary(U)
    raise ConfigError(f"unknown boundary form {form!r}")


def _build_potential(spec: dict, n: int) -> PotentialGrid:
    kind = spec.get("kind")
    x_max = float(spec.get("x_max", 0))
    nodes = int(spec.get("nodes", 201))
    if kind == "zero":
        return potentials.zero(n, x_max, nodes)
    if kind == "box":
        coupling = _as_matrix(spec["coupling"]) if n > 1 else _as_complex(spec["coupling"])
        return potentials.box(coupling, float(spec["x_cut"]), x_max, nodes)
    if kind == "gaussian":
        coupling = _as_matrix(spec["coupling"]) if n > 1 else _as_complex(spec["coupling"])
        return potentials.gaussian(coupling, float(spec["center"]),
                                   float(spec["width"]), x_max, nodes)
    if kind == "table":
        return potentials.from_table(
            np.asarray(spec["x"], dtype=float),
            np.array([_as_matrix(v) if n > 1 else _as_complex(v)
                      for v in spec["values"]]),
        )
    raise ConfigError(f"unknown potential kind {kind!r}")


def _build_problem(cfg: dict, rng) -> Problem:
    try:
        pspec = cfg["problem"]
        n = int(pspec["dim"])
        bc = _build_boundary(pspec["boundary"], n, rng)
        pot = _build_potential(pspec["potential"], n)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad problem spec: {exc}") from exc
    return Problem(potential=pot, bc=bc)


def _build_contour(cfg: dict) -> Contour:
    try:
        c = cfg["contour"]
        return build_contour(
            r0=float(c["r0"]),
            R=float(c["R"]),
            delta=None if c.get("delta") is None else float(c["delta"]),
            n_circle=int(c.get("n_circle", 64)),
            n_cut=int(c.get("n_cut", 128)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad contour spec: {exc}") from exc


def _invert_config(cfg: dict) -> InvertConfig:
    try:
        g = cfg["x_grid"]
        probes = tuple(float(p) for p in cfg.get("lambda_probes", (-2.0, -5.0)))
        return InvertConfig(x_max=float(g["x_max"]), x_nodes=int(g["nodes"]),
                            lambda_probes=probes)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad x_grid spec: {exc}") from exc


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def _weyl_header(n: int):
    cols = ["segment", "re_rho", "im_rho", "weight_re", "weight_im"]
    for i in range(n):
        for j in range(n):
            cols += [f"M{i}{j}_re", f"M{i}{j}_im"]
    return cols


def write_weyl_csv(path: str, weyl: WeylData) -> None:
    n = weyl.dim
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(_weyl_header(n))
        for node, M in zip(weyl.contour.nodes, weyl.M_samples):
            row = [node.segment, repr(node.point.rho.real),
                   repr(node.point.rho.imag),
                   repr(node.weight.real), repr(node.weight.imag)]
            row += [repr(float(v)) for z in M.ravel() for v in (z.real, z.imag)]
            w.writerow(row)


def write_tail_csv(path: str, weyl: WeylData) -> None:
    n = weyl.dim
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(_weyl_header(n))
        for pt, M in weyl.tail_samples:
            row = ["tail", repr(pt.rho.real), repr(pt.rho.imag), "0.0", "0.0"]
            row += [repr(float(v)) for z in np.asarray(M).ravel()
                    for v in (z.real, z.imag)]
            w.writerow(row)


def _rows_from_csv(path: str):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = list(reader)
    n_sq2 = len(header) - 5
    n = int(round((n_sq2 / 2) ** 0.5))
    if 2 * n * n != n_sq2:
        raise ConfigError(f"{path}: header implies non-square sample matrices")
    return header, rows, n


def read_weyl_csv(weyl_path: str, tail_path: str, contour_params: dict) -> WeylData:
    _, rows, n = _rows_from_csv(weyl_path)
    nodes = []
    samples = []
    for row in rows:
        seg = row[0]
        rho = complex(float(row[1]), float(row[2]))
        weight = complex(float(row[3]), float(row[4]))
        vals = np.array(row[5:], dtype=float)
        M = (vals[0::2] + 1j * vals[1::2]).reshape(n, n)
        nodes.append(ContourNode(point=SpectralPoint(rho), weight=weight,
                                 segment=seg))
        samples.append(M)
    contour = Contour(
        r0=float(contour_params["r0"]),
        R=float(contour_params["R"]),
        delta=float(contour_params.get("delta", 1e-3 * float(contour_params["r0"]))),
        nodes=tuple(nodes),
    )
    _, trows, tn = _rows_from_csv(tail_path)
    if tn != n:
        raise ConfigError("tail and contour samples disagree on dimension")
    tail = []
    for row in trows:
        rho = complex(float(row[1]), float(row[2]))
        vals = np.array(row[5:], dtype=float)
        tail.append((SpectralPoint(rho), (vals[0::2] + 1j * vals[1::2]).reshape(n, n)))
    return WeylData(contour=contour, M_samples=np.array(samples),
                    tail_samples=tuple(tail))


def write_potential_csv(path: str, grid: PotentialGrid) -> None:
    n = grid.values.shape[1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        cols = ["x"]
        for i in range(n):
            for j in range(n):
                cols += [f"Q{i}{j}_re", f"Q{i}{j}_im"]
        w.writerow(cols)
        for x, Q in zip(grid.x_nodes, grid.values):
            row = [repr(float(x))]
            row += [repr(float(v)) for z in Q.ravel() for v in (z.real, z.imag)]
            w.writerow(row)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Mode implementations
# ---------------------------------------------------------------------------

class _Report:
    def __init__(self, cfg, out_dir):
        self.data = {"inputs": cfg, "timings": {}, "diagnostics": {},
                     "error_norms": {}, "manifest": {}}
        self.out_dir = out_dir
        self._t0 = None
        self._stage = None

    def start(self, stage):
        self._stage = stage
        self._t0 = time.perf_counter()
        log.info("stage %s ...", stage)

    def stop(self):
        self.data["timings"][self._stage] = time.perf_counter() - self._t0
        self._stage = None

    def emit(self, name):
        path = os.path.join(self.out_dir, name)
        self.data["manifest"][name] = _sha256(path)
        return path

    def write(self):
        path = os.path.join(self.out_dir, "report.json")
        with open(path, "w") as f:
            json.dump(self.data, f, indent=2, sort_keys=True, default=str)
            f.write("\n")
        return path

    @property
    def stage(self):
        return self._stage


def _mode_forward(cfg, rep, rng):
    problem = _build_problem(cfg, rng)
    contour = _build_contour(cfg)
    tail_ts = cfg.get("tail", {}).get("ts")
    rep.start("forward")
    weyl = generate_weyl_data(problem, contour,
                              tail_ts=None if tail_ts is None else np.asarray(tail_ts))
    rep.stop()
    rep.start("emit")
    write_weyl_csv(os.path.join(rep.out_dir, "weyl.csv"), weyl)
    write_tail_csv(os.path.join(rep.out_dir, "tail.csv"), weyl)
    rep.emit("weyl.csv")
    rep.emit("tail.csv")
    rep.stop()
    rep.data["diagnostics"]["n_contour_nodes"] = len(contour)
    return weyl


def _mode_invert(cfg, rep, weyl=None):
    if weyl is None:
        inp = cfg.get("input", {})
        try:
            weyl = read_weyl_csv(inp["weyl"], inp["tail"], cfg["contour"])
        except KeyError as exc:
            raise ConfigError(f"invert mode needs input paths and contour: {exc}")
    icfg = _invert_config(cfg)
    rep.start("invert")
    result = invert(weyl, icfg)
    rep.stop()
    rep.start("emit")
    write_potential_csv(os.path.join(rep.out_dir, "q_recovered.csv"), result.Q)
    with open(os.path.join(rep.out_dir, "boundary_recovered.json"), "w") as f:
        json.dump({"A": _matrix_out(result.A), "h": _matrix_out(result.h)},
                  f, indent=2)
        f.write("\n")
    rep.emit("q_recovered.csv")
    rep.emit("boundary_recovered.json")
    rep.stop()
    for k, v in result.diagnostics.items():
        rep.data["diagnostics"][k] = float(v)
    return result


def _node_norms(values):
    return np.abs(values).sum(axis=-1).max(axis=-1)


def _l1_relative(q_rec: PotentialGrid, q_true: PotentialGrid) -> float:
    """Relative L1 distance, sampling the true Q on the recovered grid."""
    xs = q_rec.x_nodes
    n = q_true.values.shape[1]
    true_vals = np.zeros((xs.size, n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            col = q_true.values[:, i, j]
            true_vals[:, i, j] = (
                np.interp(xs, q_true.x_nodes, col.real, right=0.0)
                + 1j * np.interp(xs, q_true.x_nodes, col.imag, right=0.0)
            )
    err = np.trapezoid(_node_norms(q_rec.values - true_vals), xs)
    ref = np.trapezoid(_node_norms(true_vals), xs)
    return float(err / ref) if ref > 0 else float(err)


def _mode_roundtrip(cfg, rep, rng):
    problem = _build_problem(cfg, rng)
    weyl = _mode_forward(cfg, rep, rng)
    result = _mode_invert(cfg, rep, weyl=weyl)
    rep.start("compare")
    rep.data["error_norms"]["q_l1_relative"] = _l1_relative(result.Q,
                                                            problem.potential)
    rep.data["error_norms"]["h_error"] = float(matnorm(result.h - problem.bc.h))
    rep.data["error_norms"]["A_error"] = float(matnorm(result.A - problem.bc.A))
    rep.stop()
    return result


def _mode_zeros(cfg, rep, rng):
    problem = _build_problem(cfg, rng)
    radius = float(cfg.get("zeros", {}).get("radius", 10.0))
    density = int(cfg.get("zeros", {}).get("grid_density", 24))
    rep.start("zeros")
    zeros, r0 = scan_jost_zeros(problem, radius, grid_density=density)
    rep.stop()
    rep.start("emit")
    with open(os.path.join(rep.out_dir, "zeros.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["re_lambda", "im_lambda"])
        for z in zeros:
            w.writerow([repr(z.real), repr(z.imag)])
    rep.emit("zeros.csv")
    rep.stop()
    rep.data["diagnostics"]["n_zeros"] = len(zeros)
    rep.data["diagnostics"]["suggested_r0"] = float(r0)


def _mode_validate_bc(cfg, rep, rng):
    try:
        spec = cfg["problem"]["boundary"]
        n = int(cfg["problem"]["dim"])
    except KeyError as exc:
        raise ConfigError(f"validate-bc needs problem.dim and problem.boundary: {exc}")
    rep.start("validate")
    bc = _build_boundary(spec, n, rng)
    checks = bnd.validate(bc.A, bc.h)
    rep.stop()
    rep.start("emit")
    with open(os.path.join(rep.out_dir, "boundary.json"), "w") as f:
        json.dump({"A": _matrix_out(bc.A), "h": _matrix_out(bc.h)}, f, indent=2)
        f.write("\n")
    rep.emit("boundary.json")
    rep.stop()
    for k, v in checks.items():
        rep.data["diagnostics"][k] = float(v)


_MODES = {
    "forward": lambda cfg, rep, rng: _mode_forward(cfg, rep, rng),
    "invert": lambda cfg, rep, rng: _mode_invert(cfg, rep),
    "roundtrip": _mode_roundtrip,
    "zeros": _mode_zeros,
    "validate-bc": _mode_validate_bc,
}


def run(mode: str, cfg: dict, out_dir: str, seed=None) -> dict:
    """Execute one mode; returns the report dict (also written to disk)."""
    os.makedirs(out_dir, exist_ok=True)
    rep = _Report(cfg, out_dir)
    rng = np.random.default_rng(seed)
    _MODES[mode](cfg, rep, rng)
    rep.write()
    return rep.data


def _limit_threads(n: int) -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(n)
    except ImportError:
        log.debug("threadpoolctl unavailable; relying on environment variables")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="weylinv",
        description="Weyl-matrix forward evaluation and inverse reconstruction",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in _MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=".")
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)

    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    _limit_threads(args.threads)

    try:
        cfg = load_config(args.config)
    except OSError as exc:
        log.error("cannot read config: %s", exc)
        return EXIT_IO
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG

    try:
        run(args.mode, cfg, args.out, seed=args.seed)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except _NUMERICAL_ERRORS as exc:
        log.error("numerical failure in mode %s: %s", args.mode, exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
