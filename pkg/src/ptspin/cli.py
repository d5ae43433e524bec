"""Command-line front end: ``ptspin <command> --config cfg.json --out dir``.

Every run validates its configuration before computing anything and writes a
``manifest.json`` listing the resolved configuration, the package version
and a SHA-256 hash of each file produced.  Output is deterministic: the same
configuration yields byte-identical files.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, PtSpinError
from .evolution import Method, ModelParams, analytic_spectrum, disentangle, numerical_spectrum, propagator_diag
from .husimi import husimi_grid
from .observables import (DensityState, analytic_circle, evolve_density, evolve_series, integrate_ehrenfest,
                          moments_series)
from .spin_algebra import coherent_state, dicke_state, make_spin_system

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
COMMANDS = ("spectrum", "evolve", "husimi", "trajectory", "disentangle")
ARTIFACTS = ("csv", "grid", "heatmap", "circles")
MAX_SAMPLES = 2_000_000

_METHOD_ALIASES = {
    "direct": Method.DIRECT,
    "diag": Method.DIAG,
    "diagonalization": Method.DIAG,
    "disentangle": Method.DISENTANGLE,
    "disentangling": Method.DISENTANGLE,
}


@dataclass(frozen=True)
class InitialState:
    """Tagged union: coherent(theta, phi), dicke(m) or mixed (identity)."""

    kind: str = "coherent"
    theta: float = math.pi / 2
    phi: float = math.pi / 4
    m: float = 0.0

    def density(self, spin):
        sys = make_spin_system(spin)
        if self.kind == "coherent":
            return DensityState.from_pure(spin, coherent_state(sys, self.theta, self.phi))
        if self.kind == "dicke":
            return DensityState.from_pure(spin, dicke_state(sys, self.m))
        return DensityState.maximally_mixed(spin)

    def as_dict(self):
        if self.kind == "coherent":
            return {"kind": "coherent", "theta": self.theta, "phi": self.phi}
        if self.kind == "dicke":
            return {"kind": "dicke", "m": self.m}
        return {"kind": "mixed"}


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved scenario.  Angles in radians, times in units of 1/v."""

    spin: float = 10.0
    v: float = 1.0
    gamma: float = 0.0
    initial_state: InitialState = field(default_factory=InitialState)
    t_max: float = 30.0
    dt_out: float = 0.01
    grid: tuple = (128, 256)
    method: Method = Method.DIRECT
    gamma_sweep: tuple = (0.0, 1.4, 141)
    gammas: tuple = ()
    snapshots: tuple = (0.0,)
    normalize_heatmap: bool = False
    outputs: tuple = ARTIFACTS

    @property
    def params(self):
        return ModelParams(self.v, self.gamma, self.spin)

    @property
    def n_steps(self):
        return int(round(self.t_max / self.dt_out))

    @property
    def times(self):
        return self.dt_out * np.arange(self.n_steps + 1)

    def as_dict(self):
        out = dataclasses.asdict(self)
        out["initial_state"] = self.initial_state.as_dict()
        out["method"] = self.method.value
        out["grid"] = list(self.grid)
        out["gamma_sweep"] = {"start": self.gamma_sweep[0], "stop": self.gamma_sweep[1],
                              "num": self.gamma_sweep[2]}
        for key in ("gammas", "snapshots", "outputs"):
            out[key] = list(out[key])
        return out


def _number(raw, key, positive=False, nonneg=False):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(f"{key} must be a number, got {raw!r}")
    x = float(raw)
    if not math.isfinite(x):
        raise ConfigError(f"{key} must be finite")
    if positive and not x > 0:
        raise ConfigError(f"{key} must be positive, got {x}")
    if nonneg and x < 0:
        raise ConfigError(f"{key} must be non-negative, got {x}")
    return x


def _initial_state(raw, spin):
    if not isinstance(raw, dict):
        raise ConfigError("initial_state must be an object with a 'kind'")
    kind = raw.get("kind")
    allowed = {"coherent": {"kind", "theta", "phi"}, "dicke": {"kind", "m"}, "mixed": {"kind"}}
    if kind not in allowed:
        raise ConfigError(f"initial_state.kind must be one of {sorted(allowed)}, got {kind!r}")
    extra = set(raw) - allowed[kind]
    if extra:
        raise ConfigError(f"unexpected initial_state keys for {kind}: {sorted(extra)}")
    if kind == "coherent":
        theta = _number(raw.get("theta", math.pi / 2), "initial_state.theta")
        phi = _number(raw.get("phi", math.pi / 4), "initial_state.phi")
        if not 0 <= theta <= math.pi:
            raise ConfigError("initial_state.theta must lie in [0, pi]")
        return InitialState("coherent", theta, phi)
    if kind == "dicke":
        if "m" not in raw:
            raise ConfigError("dicke initial state needs m")
        m = _number(raw["m"], "initial_state.m")
        try:
            make_spin_system(spin).index(m)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return InitialState("dicke", m=m)
    return InitialState("mixed")


def resolve_config(raw, overrides=None):
    """Validate a JSON-like mapping (plus CLI overrides) into a ScenarioConfig."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    raw = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")

    spin = _number(raw.get("spin", 10), "spin", positive=True)
    try:
        make_spin_system(spin)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    v = _number(raw.get("v", 1.0), "v", positive=True)
    gamma = _number(raw.get("gamma", 0.0), "gamma", nonneg=True)
    t_max = _number(raw.get("t_max", 30.0), "t_max", positive=True)
    dt_out = _number(raw.get("dt_out", 0.01), "dt_out", positive=True)
    if t_max / dt_out > MAX_SAMPLES:
        raise ConfigError(f"t_max / dt_out exceeds {MAX_SAMPLES} samples")

    method_raw = raw.get("method", "direct")
    if method_raw not in _METHOD_ALIASES:
        raise ConfigError(f"method must be one of {sorted(_METHOD_ALIASES)}, got {method_raw!r}")
    method = _METHOD_ALIASES[method_raw]
    if method is Method.DIAG and abs(gamma - v) <= 1e-14 * v:
        raise ConfigError("the diagonalization method is undefined at gamma = v")

    grid = raw.get("grid", [128, 256])
    if (not isinstance(grid, (list, tuple)) or len(grid) != 2
            or not all(isinstance(n, int) and not isinstance(n, bool) and n >= 8 for n in grid)):
        raise ConfigError("grid must be [n_theta, n_phi] with integers >= 8")

    sweep = raw.get("gamma_sweep", {"start": 0.0, "stop": 1.4, "num": 141})
    if not isinstance(sweep, dict) or set(sweep) - {"start", "stop", "num"}:
        raise ConfigError("gamma_sweep must be an object with start, stop, num")
    g0 = _number(sweep.get("start", 0.0), "gamma_sweep.start", nonneg=True)
    g1 = _number(sweep.get("stop", 1.4), "gamma_sweep.stop", nonneg=True)
    num = sweep.get("num", 141)
    if not isinstance(num, int) or isinstance(num, bool) or not 1 <= num <= 100_000:
        raise ConfigError("gamma_sweep.num must be an integer in [1, 100000]")

    gammas = raw.get("gammas", [])
    if not isinstance(gammas, (list, tuple)):
        raise ConfigError("gammas must be a list")
    gammas = tuple(_number(g, "gammas[]", nonneg=True) for g in gammas)
    snapshots = raw.get("snapshots", [0.0])
    if not isinstance(snapshots, (list, tuple)) or not snapshots:
        raise ConfigError("snapshots must be a non-empty list")
    snapshots = tuple(sorted(_number(t, "snapshots[]", nonneg=True) for t in snapshots))

    normalize = raw.get("normalize_heatmap", False)
    if not isinstance(normalize, bool):
        raise ConfigError("normalize_heatmap must be true or false")
    outputs = raw.get("outputs", list(ARTIFACTS))
    if not isinstance(outputs, (list, tuple)) or set(outputs) - set(ARTIFACTS):
        raise ConfigError(f"outputs must be a subset of {list(ARTIFACTS)}")

    return ScenarioConfig(
        spin=spin, v=v, gamma=gamma,
        initial_state=_initial_state(raw.get("initial_state", {"kind": "coherent"}), spin),
        t_max=t_max, dt_out=dt_out, grid=tuple(grid), method=method,
        gamma_sweep=(g0, g1, num), gammas=gammas, snapshots=snapshots,
        normalize_heatmap=normalize, outputs=tuple(o for o in ARTIFACTS if o in outputs),
    )


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


class RunWriter:
    """Collects output files in order and records their hashes."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.files = []
        self.extras = {}

    def _write(self, name, data):
        path = self.out_dir / name
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            path.write_bytes(data)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
        self.files.append({"path": name, "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()})

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
        self._write(name, buf.getvalue().encode("ascii"))

    def ppm(self, name, values):
        """P6 grayscale heatmap; rows are theta (north at the top), columns phi."""
        vmax = float(np.max(values))
        scaled = np.zeros_like(values) if vmax <= 0 else values / vmax
        gray = np.clip(np.rint(scaled * 255), 0, 255).astype(np.uint8)
        rgb = np.repeat(gray[:, :, None], 3, axis=2)
        head = f"P6\n{values.shape[1]} {values.shape[0]}\n255\n".encode("ascii")
        self._write(name, head + rgb.tobytes())

    def manifest(self, command, cfg):
        doc = {"tool": "ptspin", "version": __version__, "command": command,
               "config": cfg.as_dict(), "files": self.files}
        doc.update(self.extras)
        text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
        self._write("manifest.json", text.encode("ascii"))


def run_spectrum(cfg, writer):
    g0, g1, num = cfg.gamma_sweep
    rows, uncertified = [], []
    for g in np.linspace(g0, g1, num):
        p = ModelParams(cfg.v, float(g), cfg.spin)
        ana = analytic_spectrum(p)
        num_ev, bound = numerical_spectrum(p)
        if not math.isfinite(bound):
            uncertified.append(float(g))
        for m, ea, en in zip(p.system.m, ana, num_ev):
            rows.append((g, m, ea.real, ea.imag, en.real, en.imag))
    if "csv" in cfg.outputs:
        writer.csv("spectrum.csv", ["gamma", "m", "re_E", "im_E", "re_E_num", "im_E_num"], rows)
    writer.extras["uncertified_gammas"] = uncertified


def _evolve_matrices(cfg, times):
    p = cfg.params
    rho0 = cfg.initial_state.density(cfg.spin)
    factors = None
    if cfg.method is Method.DIRECT:
        series = evolve_series(rho0, p, times)
    elif cfg.method is Method.DISENTANGLE:
        factors = disentangle(p, max(times[-1], cfg.dt_out), cfg.dt_out)
        series = evolve_series(rho0, p, times, route="disentangled", factors=factors)
    else:
        series = np.array([evolve_density(rho0, propagator_diag(p, t)).matrix for t in times])
    return series, factors


def run_evolve(cfg, writer):
    times = cfg.times
    series, factors = _evolve_matrices(cfg, times)
    tr, s, var = moments_series(series, cfg.spin)
    header = ["t", "trace", "sx", "sy", "sz", "var_x", "var_y", "var_z"]
    cols = [times, tr, *s.T, *var.T]
    if factors is not None:
        header += ["f", "g", "h"]
        cols += list(factors.at(times))
    if "csv" in cfg.outputs:
        writer.csv("evolve.csv", header, zip(*cols))


def run_husimi(cfg, writer):
    times = np.array(cfg.snapshots)
    p = cfg.params
    series = evolve_series(cfg.initial_state.density(cfg.spin), p, times)
    summary = []
    for k, (t, rho) in enumerate(zip(times, series)):
        grid = husimi_grid(DensityState(cfg.spin, rho), *cfg.grid)
        values = grid.values
        scale = float(values.max()) if cfg.normalize_heatmap else 1.0
        values = values / scale if scale > 0 else values
        tag = f"{k:03d}_t{t:g}"
        if "grid" in cfg.outputs:
            th, ph = np.meshgrid(grid.theta_nodes, grid.phi_nodes, indexing="ij")
            writer.csv(f"husimi_{tag}.csv", ["theta", "phi", "Q"], zip(th.ravel(), ph.ravel(), values.ravel()))
        if "heatmap" in cfg.outputs:
            writer.ppm(f"husimi_{tag}.ppm", values)
        summary.append({"t": float(t), "trace": float(np.trace(rho).real), "integral": grid.integral,
                        "scale": scale})
    writer.extras["snapshots"] = summary
    writer.extras["normalized_to_max"] = cfg.normalize_heatmap


def _speed(times, pts):
    return np.linalg.norm(np.gradient(pts, times, axis=0), axis=1)


def run_trajectory(cfg, writer):
    init = cfg.initial_state
    if init.kind == "mixed":
        raise ConfigError("trajectory needs a coherent or Dicke initial state")
    S = cfg.spin
    rows, circles = [], []
    for g in cfg.gammas or (cfg.gamma,):
        p = ModelParams(cfg.v, g, S)
        if init.kind == "coherent":
            s0 = S * np.array([math.sin(init.theta) * math.cos(init.phi),
                               math.sin(init.theta) * math.sin(init.phi), math.cos(init.theta)])
            traj = integrate_ehrenfest(s0, p, cfg.t_max, cfg.dt_out)
            times, pts, speed = traj.times, traj.points / S, traj.speed / S
            if g > 0:
                c = analytic_circle(init.theta, init.phi, p)
                circles.append((g, c.xc, c.yc, c.dx, c.dy, c.degenerate))
        else:
            times = cfg.times
            _, s, _ = moments_series(evolve_series(init.density(S), p, times), S)
            pts = s / S
            speed = _speed(times, pts)
        rows += [(g, t, *x, sp) for t, x, sp in zip(times, pts, speed)]
    if "csv" in cfg.outputs:
        writer.csv("trajectory.csv", ["gamma", "t", "x", "y", "z", "speed"], rows)
    if circles and "circles" in cfg.outputs:
        writer.csv("circles.csv", ["gamma", "xc", "yc", "dx", "dy", "degenerate"], circles)


def run_disentangle(cfg, writer):
    fac = disentangle(cfg.params, cfg.t_max, cfg.dt_out)
    if "csv" in cfg.outputs:
        writer.csv("factors.csv", ["t", "f", "g", "h"], zip(fac.times, fac.f, fac.g, fac.h))


RUNNERS = {"spectrum": run_spectrum, "evolve": run_evolve, "husimi": run_husimi,
           "trajectory": run_trajectory, "disentangle": run_disentangle}


def build_parser():
    ap = argparse.ArgumentParser(prog="ptspin", description="PT-symmetric spin dynamics scenarios.")
    ap.add_argument("--version", action="version", version=f"ptspin {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path, help="JSON scenario file (defaults apply when omitted)")
    ap.add_argument("--out", type=Path, required=True, help="output directory")
    ap.add_argument("--spin", type=float)
    ap.add_argument("--v", type=float)
    ap.add_argument("--gamma", type=float)
    ap.add_argument("--tmax", type=float)
    ap.add_argument("--dt", type=float)
    ap.add_argument("--method", choices=sorted(_METHOD_ALIASES))
    return ap


def _thread_limit():
    raw = os.environ.get("PTSPIN_THREADS")
    if raw is None:
        return None
    try:
        n = int(raw)
    except ValueError:
        n = 0
    if n < 1:
        raise ConfigError(f"PTSPIN_THREADS must be a positive integer, got {raw!r}")
    return n


def _load(path):
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {"spin": args.spin, "v": args.v, "gamma": args.gamma, "t_max": args.tmax,
                 "dt_out": args.dt, "method": args.method}
    try:
        threads = _thread_limit()
        cfg = resolve_config(_load(args.config), overrides)
        writer = RunWriter(args.out)
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=threads):
            RUNNERS[args.command](cfg, writer)
        writer.manifest(args.command, cfg)
    except ConfigError as exc:
        print(f"ptspin: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (PtSpinError, ValueError, FloatingPointError) as exc:
        print(f"ptspin: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"ptspin: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
