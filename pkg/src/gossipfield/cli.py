"""Command-line front end: JSON run-config in, CSV artifacts out.

Subcommands: simulate, meanfield, moments, concentrate, compare. Every
artifact starts with a comment line carrying the sha-256 of the canonical
config and the seed, so outputs are traceable to their inputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import agent_sim, experiments, meanfield, moments
from .kernels import (BoundedConfidence, Constant, EnvAtom, EnvBump, EnvGrid,
                      EnvUniform, FiniteMixture, Gaussian, KernelSpec,
                      env_moment, env_support)
from .measures import AtomicMeasure, GridMeasure1D, wasserstein1_1d


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


_TOP_KEYS = {"seed", "output_dir", "kernel", "initial", "simulate",
             "meanfield", "moments", "concentrate"}

_DEFAULTS = {
    "seed": 0,
    "output_dir": ".",
    "simulate": {"n": 1000, "horizon": 10.0, "snapshot_times": None,
                 "symmetric": False, "allow_self": False},
    "meanfield": {"lo": None, "hi": None, "m": 1000, "dt": 0.01,
                  "horizon": 10.0, "snapshot_times": None, "scheme": "euler"},
    "moments": {"K": 8, "T": 10.0, "dt": 0.005},
    "concentrate": {"tau": 5.0, "n_list": [100, 300, 1000, 3000],
                    "replicas": 100, "eps_list": [], "sample_times": []},
}


@dataclass(frozen=True)
class RunConfig:
    """Validated, default-filled run configuration."""

    data: dict

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.data == other.data

    def __hash__(self):
        return hash(serialize(self))

    @property
    def seed(self) -> int:
        return self.data["seed"]

    def config_hash(self) -> str:
        return hashlib.sha256(serialize(self).encode()).hexdigest()[:16]


def _check_range(errs, section, key, v, lo=None, hi=None, integer=False,
                 positive=False):
    name = f"{section}.{key}" if section else key
    if integer and not isinstance(v, int):
        errs.append(f"{name}: expected integer, got {v!r}")
        return
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        errs.append(f"{name}: expected number, got {v!r}")
        return
    if positive and v <= 0:
        errs.append(f"{name}: must be positive, got {v}")
    if lo is not None and v < lo:
        errs.append(f"{name}: must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        errs.append(f"{name}: must be <= {hi}, got {v}")


def _validate_law(errs, name, law):
    if not isinstance(law, dict) or "type" not in law:
        errs.append(f"{name}: expected object with 'type'")
        return
    t = law["type"]
    known = {
        "constant": {"omega"},
        "bounded_confidence": {"omega0", "radius"},
        "gaussian": {"omega0", "sigma"},
        "mixture": {"omegas", "probs"},
    }
    if t not in known:
        errs.append(f"{name}.type: unknown weight law {t!r}")
        return
    extra = set(law) - known[t] - {"type"}
    if extra:
        errs.append(f"{name}: unknown keys {sorted(extra)}")
    if t == "constant":
        _check_range(errs, name, "omega", law.get("omega", -1), 0.0, 1.0)
    elif t == "bounded_confidence":
        _check_range(errs, name, "omega0", law.get("omega0", -1), 0.0, 1.0)
        _check_range(errs, name, "radius", law.get("radius", -1),
                     positive=True)
    elif t == "gaussian":
        _check_range(errs, name, "omega0", law.get("omega0", -1), 0.0, 1.0)
        _check_range(errs, name, "sigma", law.get("sigma", -1), positive=True)
    elif t == "mixture":
        om = law.get("omegas")
        pr = law.get("probs")
        if not isinstance(om, list) or not isinstance(pr, list) \
                or len(om) != len(pr) or not om:
            errs.append(f"{name}: omegas/probs must be equal-length "
                        "nonempty lists")
        else:
            for i, w in enumerate(om):
                _check_range(errs, name, f"omegas[{i}]", w, 0.0, 1.0)
            for i, p in enumerate(pr):
                _check_range(errs, name, f"probs[{i}]", p, 0.0, 1.0)
            if abs(sum(pr) - 1.0) > 1e-12:
                errs.append(f"{name}.probs: must sum to 1")


def _validate_env(errs, env):
    if env is None:
        return
    if not isinstance(env, dict) or "type" not in env:
        errs.append("kernel.environment: expected object with 'type' or null")
        return
    t = env["type"]
    known = {"atom": {"z"}, "uniform": {"a", "b"}, "bump": set(),
             "grid": {"lo", "hi", "cells"}}
    if t not in known:
        errs.append(f"kernel.environment.type: unknown environment {t!r}")
        return
    extra = set(env) - known[t] - {"type"}
    if extra:
        errs.append(f"kernel.environment: unknown keys {sorted(extra)}")
    if t == "atom" and not isinstance(env.get("z"), (int, float)):
        errs.append("kernel.environment.z: expected number")
    if t == "uniform":
        a, b = env.get("a"), env.get("b")
        if not (isinstance(a, (int, float)) and isinstance(b, (int, float))
                and b > a):
            errs.append("kernel.environment: needs numbers b > a")
    if t == "grid":
        cells = env.get("cells")
        if not isinstance(cells, list) or len(cells) < 2 \
                or any(not isinstance(c, (int, float)) or c < 0 for c in cells):
            errs.append("kernel.environment.cells: expected list of "
                        "nonnegative numbers, length >= 2")


def parse_config(text) -> RunConfig:
    """Parse and validate a JSON run-config, collecting all violations."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError([f"malformed JSON at byte {e.pos}: {e.msg}"])
    errs: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a JSON object"])
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        errs.append(f"unknown top-level keys {sorted(unknown)}")

    data = {"seed": raw.get("seed", _DEFAULTS["seed"]),
            "output_dir": raw.get("output_dir", _DEFAULTS["output_dir"])}
    if not isinstance(data["seed"], int):
        errs.append("seed: expected integer")
    if not isinstance(data["output_dir"], str):
        errs.append("output_dir: expected string")

    kernel = raw.get("kernel")
    if not isinstance(kernel, dict):
        errs.append("kernel: required object")
        kernel = {}
    extra = set(kernel) - {"alpha", "internal", "external", "environment"}
    if extra:
        errs.append(f"kernel: unknown keys {sorted(extra)}")
    alpha = kernel.get("alpha", 1.0)
    _check_range(errs, "kernel", "alpha", alpha, 0.0, 1.0)
    internal = kernel.get("internal")
    if internal is None and (not isinstance(alpha, (int, float)) or alpha > 0):
        errs.append("kernel.internal: required when alpha > 0")
    if internal is not None:
        _validate_law(errs, "kernel.internal", internal)
    env = kernel.get("environment")
    _validate_env(errs, env)
    external = kernel.get("external")
    if external is not None:
        _validate_law(errs, "kernel.external", external)
    if isinstance(alpha, (int, float)) and alpha < 1.0:
        if env is None:
            errs.append("kernel.environment: environment required "
                        "(alpha < 1)")
        if external is None:
            errs.append("kernel.external: required when alpha < 1")
    data["kernel"] = {
        "alpha": float(alpha) if isinstance(alpha, (int, float)) else alpha,
        "internal": internal if internal is not None
        else {"type": "constant", "omega": 0.5},
        "external": external, "environment": env}

    initial = raw.get("initial")
    if not isinstance(initial, dict) or "type" not in initial:
        errs.append("initial: required object with 'type'")
        initial = {"type": "uniform", "a": 0.0, "b": 1.0}
    t = initial.get("type")
    known = {"uniform": {"a", "b"}, "atoms": {"points"},
             "grid": {"lo", "hi", "cells"}}
    if t not in known:
        errs.append(f"initial.type: unknown initial law {t!r}")
    else:
        extra = set(initial) - known[t] - {"type"}
        if extra:
            errs.append(f"initial: unknown keys {sorted(extra)}")
        if t == "uniform":
            a, b = initial.get("a"), initial.get("b")
            if not (isinstance(a, (int, float)) and isinstance(b, (int, float))
                    and b > a):
                errs.append("initial: needs numbers b > a")
    data["initial"] = initial

    for section in ("simulate", "meanfield", "moments", "concentrate"):
        sec = dict(_DEFAULTS[section])
        given = raw.get(section, {})
        if not isinstance(given, dict):
            errs.append(f"{section}: expected object")
            given = {}
        extra = set(given) - set(sec)
        if extra:
            errs.append(f"{section}: unknown keys {sorted(extra)}")
        sec.update({k: v for k, v in given.items() if k in sec})
        data[section] = sec

    _check_range(errs, "simulate", "n", data["simulate"]["n"], lo=2,
                 integer=True)
    _check_range(errs, "simulate", "horizon", data["simulate"]["horizon"],
                 positive=True)
    _check_range(errs, "meanfield", "dt", data["meanfield"]["dt"],
                 positive=True, hi=0.1)
    _check_range(errs, "meanfield", "m", data["meanfield"]["m"], lo=2,
                 integer=True)
    _check_range(errs, "moments", "K", data["moments"]["K"], lo=1,
                 integer=True)
    _check_range(errs, "concentrate", "replicas",
                 data["concentrate"]["replicas"], lo=20, integer=True)

    if errs:
        raise ConfigError(errs)
    return RunConfig(_normalize(data))


def _normalize(obj):
    if isinstance(obj, dict):
        return {k: _normalize(obj[k]) for k in sorted(obj)}
    if isinstance(obj, list):
        return [_normalize(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, float):
        return int(obj) if obj.is_integer() and abs(obj) < 2 ** 53 else obj
    return obj


def serialize(cfg: RunConfig) -> str:
    return json.dumps(cfg.data, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# config -> domain objects


def build_weight_law(law: dict):
    t = law["type"]
    if t == "constant":
        return Constant(law["omega"])
    if t == "bounded_confidence":
        return BoundedConfidence(law["omega0"], law["radius"])
    if t == "gaussian":
        return Gaussian(law["omega0"], law["sigma"])
    return FiniteMixture(tuple(law["omegas"]), tuple(law["probs"]))


def build_environment(env):
    if env is None:
        return None
    t = env["type"]
    if t == "atom":
        return EnvAtom(float(env["z"]))
    if t == "uniform":
        return EnvUniform(float(env["a"]), float(env["b"]))
    if t == "bump":
        return EnvBump()
    cells = np.asarray(env["cells"], dtype=float)
    return EnvGrid(GridMeasure1D(float(env["lo"]), float(env["hi"]),
                                 cells / cells.sum()))


def build_kernel(cfg: RunConfig) -> KernelSpec:
    k = cfg.data["kernel"]
    external = build_weight_law(k["external"]) if k["external"] else \
        Constant(0.0)
    return KernelSpec(alpha=float(k["alpha"]),
                      internal=build_weight_law(k["internal"]),
                      external=external,
                      environment=build_environment(k["environment"]))


def build_initial(cfg: RunConfig):
    init = cfg.data["initial"]
    t = init["type"]
    if t == "uniform":
        return agent_sim.InitUniform(float(init["a"]), float(init["b"]))
    if t == "atoms":
        return agent_sim.InitAtoms(
            AtomicMeasure.from_points([(p, w) for p, w in init["points"]]))
    cells = np.asarray(init["cells"], dtype=float)
    return agent_sim.InitGrid(GridMeasure1D(float(init["lo"]),
                                            float(init["hi"]),
                                            cells / cells.sum()))


def _solver_domain(cfg: RunConfig) -> tuple[float, float]:
    mf = cfg.data["meanfield"]
    if mf["lo"] is not None and mf["hi"] is not None:
        return float(mf["lo"]), float(mf["hi"])
    initial = build_initial(cfg)
    lo, hi = agent_sim.initial_support(initial)
    kernel = build_kernel(cfg)
    if kernel.alpha < 1.0 and kernel.environment is not None:
        elo, ehi = env_support(kernel.environment)
        lo, hi = min(lo, elo), max(hi, ehi)
    return lo, hi


def _initial_grid(cfg: RunConfig, lo, hi, m) -> GridMeasure1D:
    return experiments._initial_grid(build_initial(cfg), lo, hi, m)


def _artifact(path: Path, cfg: RunConfig):
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="\n")
    fh.write(f"# config_hash={cfg.config_hash()} seed={cfg.seed}\n")
    return fh


def _default_snaps(times, horizon):
    if times is None:
        return tuple(np.linspace(0.0, horizon, 11))
    return tuple(float(t) for t in times)


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(cfg: RunConfig, out_dir: Path, threads: int) -> list[Path]:
    sec = cfg.data["simulate"]
    sim = agent_sim.SimConfig(
        n=sec["n"], kernel=build_kernel(cfg), initial=build_initial(cfg),
        horizon=float(sec["horizon"]),
        snapshot_times=_default_snaps(sec["snapshot_times"], sec["horizon"]),
        seed=cfg.seed, symmetric=bool(sec["symmetric"]),
        allow_self=bool(sec["allow_self"]))
    snaps = agent_sim.run(sim)
    path = out_dir / "trajectory.csv"
    with _artifact(path, cfg) as fh:
        fh.write("t,position,mass\n")
        for t, m in snaps:
            for x, w in zip(m.positions[:, 0], m.weights):
                fh.write("%.17g,%.17g,%.17g\n" % (t, x, w))
    return [path]


def _run_meanfield(cfg: RunConfig):
    sec = cfg.data["meanfield"]
    lo, hi = _solver_domain(cfg)
    m = sec["m"]
    g0 = _initial_grid(cfg, lo, hi, m)
    solver = meanfield.SolverConfig(
        lo, hi, m=m, dt=float(sec["dt"]), horizon=float(sec["horizon"]),
        snapshot_times=_default_snaps(sec["snapshot_times"], sec["horizon"]),
        scheme=sec["scheme"])
    return meanfield.integrate(g0, build_kernel(cfg), solver)


def cmd_meanfield(cfg: RunConfig, out_dir: Path, threads: int) -> list[Path]:
    snaps = _run_meanfield(cfg)
    paths = []
    for t, g in snaps:
        path = out_dir / f"meanfield_t{t:g}.csv"
        with _artifact(path, cfg) as fh:
            fh.write("t,position,mass\n")
            for x, w in zip(g.centers, g.cells):
                fh.write("%.17g,%.17g,%.17g\n" % (t, x, w))
        paths.append(path)
    return paths


def _moment_params(cfg: RunConfig) -> moments.MomentParams:
    sec = cfg.data["moments"]
    kernel = build_kernel(cfg)
    K = sec["K"]
    if not isinstance(kernel.internal, Constant):
        raise ValueError("moments: internal law must be constant-weight")
    upsilon = kernel.external.omega if isinstance(kernel.external, Constant) \
        else None
    if kernel.alpha < 1.0 and upsilon is None:
        raise ValueError("moments: external law must be constant-weight")
    lo, hi = _solver_domain(cfg)
    g0 = _initial_grid(cfg, lo, hi, cfg.data["meanfield"]["m"])
    init = [float(np.dot(g0.cells, g0.centers ** k))
            for k in range(1, K + 1)]
    env = [env_moment(kernel.environment, k) for k in range(1, K + 1)] \
        if kernel.alpha < 1.0 else [0.0] * K
    return moments.MomentParams(alpha=kernel.alpha,
                                omega=kernel.internal.omega,
                                upsilon=upsilon if upsilon is not None else 0.0,
                                env_moments=tuple(env),
                                initial_moments=tuple(init), K=K)


def cmd_moments(cfg: RunConfig, out_dir: Path, threads: int) -> list[Path]:
    sec = cfg.data["moments"]
    params = _moment_params(cfg)
    traj = moments.integrate_moments(params, float(sec["T"]),
                                     float(sec["dt"]))
    paths = []
    path = out_dir / "moments.csv"
    with _artifact(path, cfg) as fh:
        fh.write("t,k,value\n")
        stride = max(1, traj.times.size // 2000)
        for i in range(0, traj.times.size, stride):
            for k in range(1, params.K + 1):
                fh.write("%.17g,%d,%.17g\n"
                         % (traj.times[i], k, traj.values[k - 1, i]))
    paths.append(path)
    if params.alpha < 1.0:
        lpath = out_dir / "limits.csv"
        lim = moments.limit_moments(params)
        with _artifact(lpath, cfg) as fh:
            fh.write("k,value\n")
            for k, v in enumerate(lim, start=1):
                fh.write("%d,%.17g\n" % (k, v))
        paths.append(lpath)
    return paths


def cmd_concentrate(cfg: RunConfig, out_dir: Path, threads: int) -> list[Path]:
    sec = cfg.data["concentrate"]
    ccfg = experiments.ConcentrationConfig(
        kernel=build_kernel(cfg), initial=build_initial(cfg),
        tau=float(sec["tau"]), sample_times=tuple(sec["sample_times"]),
        n_list=tuple(sec["n_list"]), replicas=sec["replicas"],
        eps_list=tuple(sec["eps_list"]), base_seed=cfg.seed)
    table = experiments.run_concentration(ccfg, threads=threads)
    dpath = out_dir / "deviations.csv"
    with _artifact(dpath, cfg) as fh:
        fh.write("n,replica,D\n")
        for n, r, d in table.rows:
            fh.write("%d,%d,%.17g\n" % (n, r, d))
    eps_list = list(ccfg.eps_list)
    if not eps_list:
        mid_n = ccfg.n_list[len(ccfg.n_list) // 2]
        eps_list = [float(np.median(table.for_n(mid_n)))]
    rpath = out_dir / "rates.csv"
    with _artifact(rpath, cfg) as fh:
        fh.write("eps,n,tail_prob\n")
        summaries = []
        for eps in eps_list:
            try:
                points, slope, stderr = experiments.tail_rates(table, eps)
            except experiments.ExperimentError as e:
                summaries.append(f"# eps={eps:.17g} error={e}")
                continue
            for n, p in points:
                fh.write("%.17g,%d,%.17g\n" % (eps, n, p))
            summaries.append(f"# eps={eps:.17g} slope={slope:.17g} "
                             f"stderr={stderr:.17g}")
        for line in summaries:
            fh.write(line + "\n")
    return [dpath, rpath]


def cmd_compare(cfg: RunConfig, out_dir: Path, threads: int) -> list[Path]:
    mf_snaps = _run_meanfield(cfg)
    sec = cfg.data["simulate"]
    times = tuple(t for t, _ in mf_snaps)
    sim = agent_sim.SimConfig(
        n=sec["n"], kernel=build_kernel(cfg), initial=build_initial(cfg),
        horizon=max(times) if times else float(sec["horizon"]),
        snapshot_times=times, seed=cfg.seed,
        symmetric=bool(sec["symmetric"]), allow_self=bool(sec["allow_self"]))
    sim_snaps = agent_sim.run(sim)
    path = out_dir / "compare.csv"
    with _artifact(path, cfg) as fh:
        fh.write("t,w1\n")
        for (t, emp), (_, ref) in zip(sim_snaps, mf_snaps):
            fh.write("%.17g,%.17g\n" % (t, wasserstein1_1d(emp, ref)))
    return [path]


_COMMANDS = {"simulate": cmd_simulate, "meanfield": cmd_meanfield,
             "moments": cmd_moments, "concentrate": cmd_concentrate,
             "compare": cmd_compare}


def dispatch(cfg: RunConfig, command: str, out_dir=None,
             threads: int = 1) -> list[Path]:
    if command not in _COMMANDS:
        raise ValueError(f"unknown subcommand {command!r}")
    out = Path(out_dir) if out_dir is not None else Path(cfg.data["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return _COMMANDS[command](cfg, out, threads)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gossipfield",
        description="Gossip opinion dynamics: simulation, mean-field "
                    "integration, moment analysis, concentration experiments")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run-config path")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="parallel workers (concentrate only)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code else 0
    try:
        cfg = parse_config(Path(args.config).read_bytes())
        if args.seed is not None:
            data = dict(cfg.data)
            data["seed"] = args.seed
            cfg = RunConfig(_normalize(data))
    except ConfigError as e:
        for v in e.violations:
            print(f"config error: {v}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        paths = dispatch(cfg, args.command, args.out, args.threads)
    except Exception as e:
        print(f"{args.command} error [{type(e).__module__}]: {e}",
              file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
