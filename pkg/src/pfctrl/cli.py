"""Scenario runner: ``pfctrl run <config>`` and ``pfctrl list``.

Config files are INI-style (``[section]`` headers, ``key = value`` lines,
``#`` comments).  See ``README.md`` for the grammar.  Exit codes: 0 ok,
2 config error, 3 numeric failure, 4 runtime assertion failed.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .controller import AdaptiveController, PersistenceController
from .errors import ConfigError, PFCtrlError
from .gains import check_pe, make_gain, PESpec
from .lti_model import PlantModel, canonical_from_coefficients, read_plant_file
from .observer import observer_transform, simulate_observer
from .simulator import fit_decay_rate, lyapunov_trace, write_csv, write_manifest
from .spacecraft import SpacecraftParams, reference_initial_state, run_paper_scenario

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSERT = 0, 2, 3, 4
MODES = ("theorem1", "adaptive", "observer", "spacecraft")

_TWO_BLOCK_A = [[1.0, 1.0, 0.5, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0],
                [0.0, 0.0, 0.0, 0.0]]
BUILTIN_PLANTS = {
    "double-integrator": (np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([[0.0], [1.0]])),
    "two-block-coupled": (np.array(_TWO_BLOCK_A),
                          np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])),
}

BUILTINS = {
    "double-integrator-sine": ("double integrator, sinusoidal gain", """
[scenario]
mode = theorem1
plant = double-integrator
horizon = 40
dt = 0.005
slack = 0.5
record_every = 10
[gains]
g1 = sinusoid amplitude=1 omega=1
[initial]
x0 = 1 0
"""),
    "two-block-coupled": ("4-state, 2-input coupled plant with drift eigenvalue +1, "
                          "sinusoid and bump gains", """
[scenario]
mode = theorem1
plant = two-block-coupled
horizon = 40
dt = 0.005
slack = 0.5
record_every = 10
[gains]
g1 = sinusoid amplitude=1 omega=1
g2 = bump-schedule start=2.2 width=1.8 period=4
[initial]
x0 = 1 -1 1 0.5
"""),
    "adaptive-scalar": ("unstable scalar plant with unknown coefficient", """
[scenario]
mode = adaptive
horizon = 200
dt = 0.01
record_every = 20
[gains]
g1 = sinusoid amplitude=1 omega=1
[adaptive]
r = 1
alpha = -1
nu = 0.5
eta = 0.5
lam0 = 1
[initial]
x0 = 1
"""),
    "adaptive-two-state": ("two-state companion plant with unknown coefficients", """
[scenario]
mode = adaptive
horizon = 200
dt = 0.01
record_every = 20
[gains]
g1 = bump-schedule start=0 width=1.8 period=4
[adaptive]
r = 2
alpha = -1 -0.5
nu = 0.5
eta = 0.5
lam0 = 1
[initial]
x0 = 1 0.5
"""),
    "observer-two-block": ("two-output observer with orthogonal bump measurement gains", """
[scenario]
mode = observer
plant = two-block-oscillator
horizon = 16
dt = 0.005
record_every = 4
[gains]
g1 = bump-schedule start=0 width=1.8 period=4
g2 = bump-schedule start=2.2 width=1.8 period=4
[observer]
design = information
xhat0 = 0 0 0 0
[initial]
x0 = 1 0.5 -1 0.2
"""),
    "paper-spacecraft": ("two-actuator spacecraft stabilisation, 1.8/0.4/1.8 s schedule", """
[scenario]
mode = spacecraft
horizon = 200
dt = 0.01
record_every = 10
[spacecraft]
J1 = 3
J2 = 2
J3 = 2
lam1 = 2
gamma = 0.01
third_axis_unity = false
"""),
}


def _oscillator_observer_plant():
    cd = canonical_from_coefficients([2, 2], [[1.0, 0.0], [2.0, 0.1]], {(1, 2): [0.3, -0.2]})
    S = np.random.default_rng(1).normal(size=(4, 4))
    Si = np.linalg.inv(S)
    return S @ cd.structured_A().T @ Si, cd.structured_B().T @ Si


@dataclass
class ScenarioConfig:
    mode: str
    horizon: float
    dt: float
    values: dict
    text: str
    base_dir: Path
    name: str = "scenario"
    out: Path | None = None
    seed: int = 0
    record_every: int = 1
    lines: dict = field(default_factory=dict)

    def get(self, section, key, default=None):
        return self.values.get(section, {}).get(key, default)

    def require(self, section, key):
        val = self.get(section, key)
        if val is None:
            raise ConfigError(f"missing [{section}] {key}", None)
        return val

    def error(self, section, key, msg):
        return ConfigError(f"[{section}] {key}: {msg}", self.lines.get((section, key)))

    def number(self, section, key, default=None):
        raw = self.get(section, key, default)
        if raw is None:
            raise ConfigError(f"missing [{section}] {key}", None)
        try:
            return float(raw)
        except ValueError:
            raise self.error(section, key, f"not a number: {raw!r}") from None

    def vector(self, section, key):
        raw = self.require(section, key)
        try:
            return np.array([float(v) for v in raw.split()])
        except ValueError:
            raise self.error(section, key, f"not a list of numbers: {raw!r}") from None


def _key_lines(text):
    lines, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip()
        elif "=" in s and section and not s.startswith(("#", ";")):
            lines[(section, s.split("=", 1)[0].strip().lower())] = no
    return lines


def parse_config(text: str, base_dir=".", name="scenario", overrides=None) -> ScenarioConfig:
    """Parse and validate a scenario description.

    ``overrides`` maps ``"section.key"`` to replacement strings (CLI flags).
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"malformed line: {exc.errors[0][1].strip() if exc.errors else exc}",
                          lineno) from None
    except configparser.Error as exc:
        raise ConfigError(str(exc), getattr(exc, "lineno", None)) from None
    values = {s: dict(cp[s]) for s in cp.sections()}
    for dotted, val in (overrides or {}).items():
        sec, _, key = dotted.partition(".")
        values.setdefault(sec, {})[key.lower()] = str(val)
    cfg = ScenarioConfig("", 0.0, 0.0, values, text, Path(base_dir), name, lines=_key_lines(text))
    mode = cfg.require("scenario", "mode").strip().lower()
    if mode not in MODES:
        raise cfg.error("scenario", "mode", f"unknown mode {mode!r}; expected one of {MODES}")
    cfg.mode = mode
    cfg.horizon = cfg.number("scenario", "horizon")
    cfg.dt = cfg.number("scenario", "dt", "0.001")
    if cfg.dt <= 0:
        raise cfg.error("scenario", "dt", "must be positive")
    if cfg.horizon <= 0:
        raise cfg.error("scenario", "horizon", "must be positive")
    cfg.seed = int(cfg.number("scenario", "seed", "0"))
    cfg.record_every = max(1, int(cfg.number("scenario", "record_every", "1")))
    if cfg.get("scenario", "out"):
        cfg.out = Path(cfg.get("scenario", "out"))
    if mode in ("theorem1", "observer"):
        cfg.require("scenario", "plant")
    return cfg


def load_config(path, overrides=None) -> ScenarioConfig:
    path = Path(path)
    if not path.exists():
        if str(path) in BUILTINS:
            return parse_config(BUILTINS[str(path)][1], ".", str(path), overrides)
        raise ConfigError(f"no such config file or builtin: {path}", None)
    return parse_config(path.read_text(), path.parent, path.stem, overrides)


def parse_gain(cfg: ScenarioConfig, key):
    decl = cfg.require("gains", key).split()
    params = {}
    for item in decl[1:]:
        if "=" not in item:
            raise cfg.error("gains", key, f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        params[k] = str(cfg.base_dir / v) if k == "file" else v
    try:
        return make_gain(decl[0], **params)
    except (ValueError, KeyError, TypeError) as exc:
        raise cfg.error("gains", key, str(exc)) from None


def gains_from(cfg, count):
    return [parse_gain(cfg, f"g{i}") for i in range(1, count + 1)]


def plant_from(cfg):
    src = cfg.require("scenario", "plant").strip()
    if src.startswith("file:"):
        path = cfg.base_dir / src[5:].strip()
        try:
            return read_plant_file(path)
        except (OSError, ValueError) as exc:
            raise cfg.error("scenario", "plant", str(exc)) from None
    if src == "two-block-oscillator":
        A, C = _oscillator_observer_plant()
        return PlantModel(A, C.T)
    if src not in BUILTIN_PLANTS:
        raise cfg.error("scenario", "plant", f"unknown builtin plant {src!r}")
    return PlantModel(*BUILTIN_PLANTS[src])


def initial_state(cfg, n, key="x0", section="initial"):
    raw = cfg.get(section, key)
    if raw is None or raw.strip() == "random":
        return np.random.default_rng(cfg.seed).normal(size=n)
    x0 = cfg.vector(section, key)
    if x0.size != n:
        raise cfg.error(section, key, f"expected {n} values, got {x0.size}")
    return x0


@dataclass
class RunResult:
    traj: object
    summary: dict
    assertions: dict
    manifest: dict
    columns: dict


def _pe_line(gains, horizon):
    parts = []
    for i, g in enumerate(gains, start=1):
        T = g.period if g.period else min(horizon / 4, 10.0)
        ok, eps = check_pe(g, PESpec(T, 1e-6))
        parts.append(f"g{i}: T={T:.4g} eps={eps:.6g} {'PE' if ok else 'NOT-PE'}")
    return "; ".join(parts)


def run_theorem1(cfg):
    plant = plant_from(cfg)
    gains = gains_from(cfg, plant.m)
    slack = cfg.number("scenario", "slack", "0.5")
    ctrl = PersistenceController(plant, gains, slack=slack)
    traj = ctrl.simulate(initial_state(cfg, plant.n), cfg.horizon, cfg.dt, cfg.record_every)
    nx = np.linalg.norm(traj.states[:, :plant.n], axis=1)
    _, V, Vo = lyapunov_trace(traj, ctrl)
    rate, r2 = fit_decay_rate(traj.times, nx)
    sig = ctrl.config.sigma
    asserts = {"finite controls": bool(np.isfinite(traj.outputs["u"]).all())}
    if sig is not None:
        asserts["fitted rate >= 0.375 sigma"] = rate >= 0.375 * sig
        ok = V[1:] <= V[:-1] * np.exp(-sig * np.diff(traj.times)) * (1 + 1e-3) + 1e-300
        asserts["Lyapunov decrease"] = bool(ok.all())
    summary = {"sigma": sig, "fitted_rate": rate, "fit_r2": r2, "r": ctrl.cd.r,
               "lambdas": ctrl.config.lambdas, "lambda_star": ctrl.config.lambda_star,
               "gamma": ctrl.config.gamma, "pe": _pe_line(gains, cfg.horizon)}
    extra = {"V": V, "norm_x": nx}
    for j in range(ctrl.p):
        extra[f"Vo{j + 1}"] = Vo[:, j]
    traj.outputs.update(extra)
    cols = {"x*": "plant state", "R*": "persistence filter per block", "u*": "control input",
            "V": "amalgamated Lyapunov function", "Vo*": "block energy R_j |Omega_j|^2"}
    return RunResult(traj, summary, asserts, {"k": ctrl.k}, cols)


def run_adaptive(cfg):
    r = [int(v) for v in cfg.vector("adaptive", "r")]
    alpha_flat = cfg.vector("adaptive", "alpha")
    if alpha_flat.size != sum(r):
        raise cfg.error("adaptive", "alpha", f"need {sum(r)} values")
    alpha, o = [], 0
    for rj in r:
        alpha.append(alpha_flat[o:o + rj])
        o += rj
    beta = {}
    if cfg.get("adaptive", "beta"):
        b = cfg.vector("adaptive", "beta")
        o = 0
        for k in range(1, len(r) + 1):
            for j in range(k + 1, len(r) + 1):
                beta[(k, j)] = b[o:o + r[k - 1]]
                o += r[k - 1]
    cd = canonical_from_coefficients(r, alpha, beta)
    gains = gains_from(cfg, len(r))
    ac = AdaptiveController(cd, gains, nu=cfg.number("adaptive", "nu"),
                            eta=cfg.number("adaptive", "eta"), lam0=cfg.number("adaptive", "lam0", "1"))
    z0 = initial_state(cfg, cd.n)
    traj = ac.simulate(z0, cfg.horizon, cfg.dt, cfg.record_every)
    nz = np.linalg.norm(traj.states[:, :cd.n], axis=1)
    lam = traj.select("lam")
    asserts = {"finite controls": bool(np.isfinite(traj.outputs["u"]).all()),
               "lambda nondecreasing": bool((np.diff(lam, axis=0) >= -1e-12).all()),
               "lambda finite": bool(np.isfinite(lam).all()),
               "final norm < 1e-3 initial": bool(nz[-1] < 1e-3 * nz[0])}
    summary = {"final_norm_ratio": nz[-1] / nz[0], "final_lambda": list(lam[-1]),
               "pe": _pe_line(gains, cfg.horizon)}
    traj.outputs["norm_z"] = nz
    cols = {"z*": "canonical state", "R*": "filter", "lam*": "adaptive decay rate",
            "alpha*": "coefficient estimates", "u*": "control per block"}
    return RunResult(traj, summary, asserts, {"k": ac.k}, cols)


def run_observer(cfg):
    # observer plants store C^T in the input-matrix slot
    plant = plant_from(cfg)
    A, C = plant.A, plant.B.T
    gains = gains_from(cfg, C.shape[0])
    design = cfg.get("observer", "design", "information").strip()
    od = observer_transform(A, C, gains=gains, design=design)
    x0 = initial_state(cfg, plant.n)
    xh0 = initial_state(cfg, plant.n, "xhat0", "observer")
    traj = simulate_observer(od, x0, xh0, cfg.horizon, cfg.dt, record_every=cfg.record_every)
    e = traj.outputs["err"]
    rate, r2 = fit_decay_rate(traj.times, e)
    asserts = {"error tail slope negative": rate > 0,
               "final error < 1e-4 initial": bool(e[-1] < 1e-4 * e[0])}
    summary = {"fitted_rate": rate, "fit_r2": r2, "final_error_ratio": e[-1] / e[0],
               "design": design, "r": od.cd.r, "pe": _pe_line(gains, cfg.horizon)}
    cols = {"x*": "plant state", "xhat*": "estimate", "R*/S*": "observer filters",
            "err": "|x - xhat|"}
    return RunResult(traj, summary, asserts, {}, cols)


def _truthy(s):
    return str(s).strip().lower() in ("1", "true", "yes", "on")


def run_spacecraft(cfg):
    P = SpacecraftParams(J1=cfg.number("spacecraft", "j1", "3"), J2=cfg.number("spacecraft", "j2", "2"),
                         J3=cfg.number("spacecraft", "j3", "2"),
                         lam1=cfg.number("spacecraft", "lam1", "2"),
                         gamma=cfg.number("spacecraft", "gamma", "0.01"),
                         third_axis_unity=_truthy(cfg.get("spacecraft", "third_axis_unity", "false")))
    traj = run_paper_scenario(cfg.horizon, cfg.dt, P, reference_initial_state(), cfg.record_every)
    qv = np.linalg.norm(traj.states[:, 1:4], axis=1)
    w = np.linalg.norm(traj.states[:, 4:7], axis=1)
    lam = traj.column("lam2")
    off = np.asarray(P.g1.eval(traj.times, 0)) == 0.0
    beta, _ = fit_decay_rate(traj.times, np.abs(traj.column("w1")))
    asserts = {"quaternion norm drift < 1e-6": traj.meta["max_norm_violation"] < 1e-6,
               "|qv| below 1e-2 initial": bool(qv[-1] < 1e-2 * qv[0]),
               "|w| below 1e-2 initial": bool(w[-1] < 1e-2 * w[0]),
               "w1 tail slope negative": beta > 0,
               "lam2 nondecreasing": bool((np.diff(lam) >= 0).all()),
               "axis-1 torque zero while g1 off": bool((traj.outputs["u"][off, 0] == 0).all())}
    summary = {"max_norm_violation": traj.meta["max_norm_violation"], "qv_ratio": qv[-1] / qv[0],
               "w_ratio": w[-1] / w[0], "w1_rate": beta, "final_lam2": lam[-1]}
    cols = {"q0..q3": "Euler parameters", "w1..w3": "body rates rad/s", "R1, R2": "filters",
            "lam2": "adaptive decay rate", "u1..u3": "delivered torque N m",
            "v1..v3": "commanded accelerations"}
    return RunResult(traj, summary, asserts, {"J": (P.J1, P.J2, P.J3)}, cols)


RUNNERS = {"theorem1": run_theorem1, "adaptive": run_adaptive, "observer": run_observer,
           "spacecraft": run_spacecraft}


def run_scenario(cfg: ScenarioConfig, out_dir: Path):
    """Run ``cfg`` and write ``trajectory.csv``, ``manifest.txt``, ``summary.txt`` and
    ``columns.txt`` into ``out_dir``.  Returns ``(exit_code, RunResult)``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    res = RUNNERS[cfg.mode](cfg)
    write_csv(res.traj, out_dir / "trajectory.csv")
    manifest = {"version": __version__, "name": cfg.name, "mode": cfg.mode,
                "horizon": cfg.horizon, "dt": cfg.dt, "seed": cfg.seed,
                "record_every": cfg.record_every}
    for sec, kv in cfg.values.items():
        for k, v in kv.items():
            manifest[f"{sec}.{k}"] = v
    for k in ("sigma", "lambdas", "lambda_star", "gamma"):
        if k in res.summary:
            manifest[k] = res.summary[k]
    manifest.update(res.manifest)
    write_manifest(out_dir / "manifest.txt", manifest)
    lines = [f"{k} = {v}" for k, v in res.summary.items()]
    lines += [f"assert {name}: {'PASS' if ok else 'FAIL'}" for name, ok in res.assertions.items()]
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")
    with open(out_dir / "trajectory.csv") as fh:
        header = fh.readline().strip().split(",")
    (out_dir / "columns.txt").write_text("".join(f"{i}\t{h}\n" for i, h in enumerate(header))
                                         + "".join(f"# {k}: {v}\n" for k, v in res.columns.items()))
    code = EXIT_OK if all(res.assertions.values()) else EXIT_ASSERT
    return code, res


def _run_one(config, out_dir, overrides):
    try:
        cfg = load_config(config, overrides)
        out_dir = Path(out_dir) if out_dir else cfg.out or Path("pfctrl-out") / cfg.name
        code, res = run_scenario(cfg, out_dir)
        msg = "; ".join(f"{k}={v}" for k, v in res.summary.items() if k != "pe")
        return code, f"{cfg.name}: {'ok' if code == 0 else 'assertion failed'} ({msg})"
    except ConfigError as exc:
        return EXIT_CONFIG, f"config error: {exc}"
    except PFCtrlError as exc:
        return EXIT_NUMERIC, f"numeric failure in {type(exc).__module__}: {type(exc).__name__}: {exc}"


def parse_sweep(spec):
    try:
        param, lo, hi, n = spec.rsplit(":", 3)
        return param, np.linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise ConfigError(f"--sweep expects section.key:lo:hi:n, got {spec!r}", None) from None


def list_builtins():
    return "\n".join(f"{name:24s} {desc}" for name, (desc, _) in BUILTINS.items())


def main(argv=None):
    ap = argparse.ArgumentParser(prog="pfctrl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    run = sub.add_parser("run", help="run a config file or builtin scenario")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--dt", type=float)
    run.add_argument("--horizon", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--sweep", help="section.key:lo:hi:n")
    run.add_argument("--workers", type=int, default=None)
    sub.add_parser("list", help="list builtin scenarios")
    args = ap.parse_args(argv)
    if args.cmd == "list":
        print(list_builtins())
        return EXIT_OK
    overrides = {}
    for key in ("dt", "horizon", "seed"):
        if getattr(args, key) is not None:
            overrides[f"scenario.{key}"] = getattr(args, key)
    out = Path(args.out) if args.out else None
    if not args.sweep:
        code, msg = _run_one(args.config, out, overrides)
        print(msg, file=sys.stderr if code else sys.stdout)
        return code
    try:
        param, values = parse_sweep(args.sweep)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    root = out or Path("pfctrl-out") / Path(args.config).stem
    jobs = [(args.config, root / f"sweep_{i:03d}", {**overrides, param: repr(float(v))})
            for i, v in enumerate(values)]
    with ProcessPoolExecutor(max_workers=args.workers) as pool:
        results = list(pool.map(_run_one, *zip(*jobs)))
    for (_, d, ov), (code, msg) in zip(jobs, results):
        print(f"{d.name} {param}={ov[param]}: {msg}")
    return max(code for code, _ in results)


if __name__ == "__main__":
    sys.exit(main())
