"""Config-driven experiment runner.

    fracspde run CONFIG
    fracspde sweep CONFIG --axis dt --factors 1,0.5,0.25
    fracspde list-experiments

Exit status: 0 when every hard check passes, 1 when one fails, 2 for an
invalid configuration and 3 when Picard iteration diverges.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import io
import json
import logging
import math
import platform
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
import yaml

from .errors import ConfigError, PicardDivergenceError
from .integrator import CoefficientSet, SolverConfig, picard_solve, contraction_ratio, sample_diffusivity
from .integrator import solve_deterministic
from .levy import LevyMeasureSpec, LevyTriplet, sample_ensemble
from .spectral import Field, FieldStack, Grid
from .verify import (
    check_linear_estimate,
    fitted_order,
    make_report,
    run_suite,
    time_change_error,
    with_refinement,
    write_reports_csv,
)
from .whitenoise import WhiteNoiseConfig, check_lemma_l_last1, solve_white_noise, validate_exponents

log = logging.getLogger("fracspde")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

EXPERIMENTS = {
    "deterministic": "deterministic solve; single-mode eigen check and time-change cross-check",
    "linear_wiener": "linear equation with Wiener noise; a-priori estimate ratio",
    "linear_levy": "linear equation with compensated jump noise; a-priori estimate ratio",
    "nonlinear_picard": "Picard iteration for affine nonlinearities; contraction history",
    "whitenoise": "1-d space-time white noise; kernel bound check and solve",
    "verify_suite": "battery of inequality checks with default data",
}

SWEEP_AXES = ("dt", "grid", "K", "K_basis", "mc_paths")

TOP_KEYS = {
    "experiment", "seed", "output_dir", "mc_paths", "refinement_levels", "solver", "data",
    "diffusivity", "coefficients", "jumps", "whitenoise", "verify", "name",
}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    output_dir: str = "out"
    mc_paths: int = 200
    refinement_levels: int = 2
    name: str = ""
    solver: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)
    diffusivity: object = 1.0
    coefficients: dict = field(default_factory=dict)
    jumps: dict = field(default_factory=dict)
    whitenoise: dict = field(default_factory=dict)
    verify: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {sorted(EXPERIMENTS)}")
        if int(self.mc_paths) != self.mc_paths or self.mc_paths < 1:
            raise ConfigError("mc_paths must be a positive integer")
        if self.refinement_levels < 1:
            raise ConfigError("refinement_levels must be >= 1")
        self.name = self.name or self.experiment

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        unknown = set(raw) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment" not in raw:
            raise ConfigError("config needs an 'experiment' key")
        return cls(**raw)


def load_config(path) -> tuple:
    """Parse a YAML config; returns (ExperimentConfig, raw dict)."""
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    return ExperimentConfig.from_dict(raw), raw


# -- builders ------------------------------------------------------------------


def build_grid(spec) -> Grid:
    spec = dict(spec or {})
    length = spec.get("length", 2 * math.pi)
    if isinstance(length, str):
        length = _parse_length(length)
    return Grid(int(spec.get("dim", 1)), int(spec.get("n", 64)), float(length))


def _parse_length(text: str) -> float:
    """Accept plain numbers and multiples of pi such as "2pi" or "2*pi"."""
    m = re.fullmatch(r"\s*([0-9.eE+-]*)\s*\*?\s*pi\s*", text)
    try:
        return float(m.group(1) or 1.0) * math.pi if m else float(text)
    except ValueError as err:
        raise ConfigError(f"bad torus length {text!r}") from err


def build_solver(spec, seed) -> SolverConfig:
    spec = dict(spec or {})
    allowed = {"alpha", "gamma", "p", "T", "dt", "grid", "K", "eps1", "picard_tol", "picard_max_iters"}
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigError(f"unknown solver keys: {sorted(unknown)}")
    if "alpha" not in spec:
        raise ConfigError("solver.alpha is required")
    grid = build_grid(spec.pop("grid", None))
    return SolverConfig(grid=grid, seed=seed, **spec)


def build_field(spec, grid: Grid, rng):
    """None, a number, {mode, kind, amplitude}, {modes: [...]} or {random: scale}."""
    if spec is None:
        return None
    if isinstance(spec, (int, float)):
        return Field.constant(grid, float(spec))
    if not isinstance(spec, dict):
        raise ConfigError(f"cannot build a field from {spec!r}")
    if "modes" in spec:
        total = np.zeros(grid.shape)
        for m in spec["modes"]:
            total = total + build_field(m, grid, rng).values
        return Field(grid, total)
    if "mode" in spec:
        return Field.mode(grid, spec["mode"], spec.get("kind", "sin"), float(spec.get("amplitude", 1.0)))
    if "random" in spec:
        return Field(grid, float(spec["random"]) * grid.random_values(rng))
    raise ConfigError(f"unrecognised field spec {spec!r}")


def build_stack(spec, grid, rng):
    if spec is None:
        return None
    if not isinstance(spec, list):
        spec = [spec]
    return FieldStack.from_fields([build_field(s, grid, rng) for s in spec])


def build_diffusivity(spec, cfg: SolverConfig, n_paths):
    """Number, {kind: sine, mean, amplitude} or {kind: ou, delta}. Returns (a, callable or None)."""
    if isinstance(spec, (int, float)):
        return float(spec), None
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"unrecognised diffusivity {spec!r}")
    if spec["kind"] == "sine":
        mean, amp = float(spec.get("mean", 1.0)), float(spec.get("amplitude", 0.5))
        fn = lambda t: mean + amp * math.sin(t)
        clock = lambda t: mean * t + amp * (1 - math.cos(t))
        return fn, (fn, clock)
    if spec["kind"] == "ou":
        return sample_diffusivity(float(spec.get("delta", 0.5)), cfg.T, cfg.dt, cfg.seed, n_paths), None
    raise ConfigError(f"unknown diffusivity kind {spec['kind']!r}")


def build_jumps(spec) -> LevyMeasureSpec:
    spec = dict(spec or {"kind": "symmetric"})
    kind = spec.pop("kind", "symmetric")
    if kind == "symmetric":
        return LevyMeasureSpec.symmetric(float(spec.get("size", 1.0)), float(spec.get("rate", 1.0)))
    if kind == "radial_tail":
        return LevyMeasureSpec.radial_tail(float(spec.get("c", 1.0)), float(spec.get("alpha_l", 1.0)),
                                           eps=float(spec.get("eps", 1e-2)), radius=float(spec.get("radius", 10.0)))
    raise ConfigError(f"unknown jump measure kind {kind!r}")


def _rng(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(7,))))


# -- experiments ---------------------------------------------------------------


@dataclass
class Outcome:
    reports: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)  # relative path -> text


def _solution_artifacts(sol, out: Outcome, prefix="solution"):
    buf = io.StringIO()
    sol.write_csv(buf)
    out.artifacts[f"{prefix}.csv"] = buf.getvalue()
    buf = io.StringIO()
    sol.write_json(buf)
    out.artifacts[f"{prefix}_diagnostics.json"] = buf.getvalue()


def run_deterministic(ec: ExperimentConfig) -> Outcome:
    cfg = build_solver(ec.solver, ec.seed)
    rng = _rng(ec.seed)
    grid = cfg.grid
    u0 = build_field(ec.data.get("u0"), grid, rng) or Field.zeros(grid)
    f = build_field(ec.data.get("f"), grid, rng)
    a, sine = build_diffusivity(ec.diffusivity, cfg, 1)
    sol = solve_deterministic(u0, f, a, cfg)
    out = Outcome()
    _solution_artifacts(sol, out)
    mode = ec.data.get("u0")
    if f is None and isinstance(a, float) and isinstance(mode, dict) and "mode" in mode:
        k = np.atleast_1d(np.asarray(mode["mode"], dtype=float))
        lam = float(np.linalg.norm(2 * np.pi / grid.length * k)) ** cfg.alpha
        exact = np.exp(-a * lam * cfg.T) * u0.values
        err = float(np.abs(sol.final[0] - exact).max())
        rep = make_report("eigenmode", err, 1.0, dict(cfg=cfg, u0=u0, a=a), details={"max_error": err})
        rep.passed = err <= 1e-12
        out.reports.append(rep)
    if sine is not None:
        fn, clock = sine
        err = time_change_error(u0, f, fn, cfg, clock=clock)
        ref = float(grid.lp_norm(sol.final[0], 2))
        rep = make_report("time_change", err, ref, dict(cfg=cfg, u0=u0, f=f, a=ec.diffusivity),
                          details={"dt": cfg.dt})
        out.reports.append(rep)
    finite = bool(np.isfinite(sol.norm_top).all() and np.isfinite(sol.states).all())
    out.reports.append(make_report("finite_norms", 0.0 if finite else 1.0, 1.0, dict(cfg=cfg), passed=finite))
    return out


def _linear(ec: ExperimentConfig, jumps: bool) -> Outcome:
    cfg = build_solver(ec.solver, ec.seed)
    rng = _rng(ec.seed)
    grid = cfg.grid
    u0 = build_field(ec.data.get("u0"), grid, rng)
    f = build_field(ec.data.get("f"), grid, rng)
    stack = build_stack(ec.data.get("g" if jumps else "h", {"random": 1.0}), grid, rng)
    a, _ = build_diffusivity(ec.diffusivity, cfg, ec.mc_paths)
    kw = dict(u0=u0, f=f, a=a, n_paths=ec.mc_paths)
    if jumps:
        kw.update(g=stack, jump_spec=build_jumps(ec.jumps))
    else:
        kw.update(h=stack)
    reps = []
    c = cfg
    for _ in range(ec.refinement_levels):
        if isinstance(a, np.ndarray):
            kw["a"] = sample_diffusivity(float(ec.diffusivity.get("delta", 0.5)), c.T, c.dt, c.seed, ec.mc_paths)
        reps.append(check_linear_estimate(c, **kw))
        c = c.with_(dt=c.dt / 2)

    rep = with_refinement(reps, float(ec.verify.get("max_drift", 0.25)))
    rep.name = "linear_levy" if jumps else "linear_wiener"
    return Outcome(reports=[rep])


def run_linear_wiener(ec):
    return _linear(ec, False)


def run_linear_levy(ec):
    return _linear(ec, True)


def build_coefficients(spec, grid: Grid, rng, a) -> CoefficientSet:
    spec = dict(spec or {})
    spec.pop("a", None)
    out = {"a": a, "delta": float(spec.pop("delta", 0.5))}
    for name in ("b", "dcoef"):
        if name in spec:
            out[name] = build_field(spec.pop(name), grid, rng).values
    if "c" in spec:
        out["c"] = [build_field(s, grid, rng).values for s in spec.pop("c")]
    for name in ("eta", "ell", "h0"):
        if name in spec:
            out[name] = build_stack(spec.pop(name), grid, rng).components
    for name in ("sigma", "nu", "g0"):
        if name in spec:
            out[name] = build_stack(spec.pop(name), grid, rng).components[:, None]
    if "f0" in spec:
        out["f0"] = build_field(spec.pop("f0"), grid, rng).values
    for name in ("beta1", "beta2", "beta3", "K_bound"):
        if name in spec:
            out[name] = spec.pop(name)
    if spec:
        raise ConfigError(f"unknown coefficient keys: {sorted(spec)}")
    return CoefficientSet(**out)


def run_nonlinear_picard(ec: ExperimentConfig) -> Outcome:
    cfg = build_solver(ec.solver, ec.seed)
    rng = _rng(ec.seed)
    grid = cfg.grid
    u0 = build_field(ec.data.get("u0"), grid, rng)
    a, _ = build_diffusivity(ec.diffusivity, cfg, ec.mc_paths)
    coeffs = build_coefficients(ec.coefficients, grid, rng, a)
    coeffs.validate(cfg)
    wiener = jumps = None
    n_eta = 0 if coeffs.eta is None and coeffs.ell is None and coeffs.h0 is None else \
        next(np.shape(x)[0] for x in (coeffs.eta, coeffs.ell, coeffs.h0) if x is not None)
    n_sig = 0 if coeffs.sigma is None and coeffs.nu is None and coeffs.g0 is None else \
        next(np.shape(x)[0] for x in (coeffs.sigma, coeffs.nu, coeffs.g0) if x is not None)
    if n_eta:
        wiener = sample_ensemble([LevyTriplet.wiener()] * n_eta, cfg.T, cfg.dt, cfg.seed, ec.mc_paths)
    if n_sig:
        trip = LevyTriplet.pure_jump(build_jumps(ec.jumps))
        jumps = sample_ensemble([trip] * n_sig, cfg.T, cfg.dt, cfg.seed, ec.mc_paths, first_driver=1000)
    sol = picard_solve(u0, coeffs, cfg, wiener_paths=wiener, jump_paths=jumps)
    out = Outcome()
    _solution_artifacts(sol, out)
    ratio = contraction_ratio(sol.picard_history)
    rep = make_report("picard_contraction", ratio, 1.0, dict(cfg=cfg, coefficients=ec.coefficients),
                      details={"history": sol.picard_history, "iterations": sol.meta.get("iterations")})
    rep.passed = ratio < 1
    out.reports.append(rep)
    return out


def run_whitenoise(ec: ExperimentConfig) -> Outcome:
    spec = dict(ec.whitenoise)
    grid = build_grid(spec.pop("grid", {"n": 256}))
    solve = spec.pop("solve", None)
    wcfg = WhiteNoiseConfig(grid=grid, **spec)
    ok, problems = validate_exponents(wcfg)
    if not ok:
        raise ConfigError("; ".join(problems), problems[0])
    rng = _rng(ec.seed)
    h0 = build_field(ec.data.get("h0", {"modes": [{"mode": 0, "kind": "cos"}, {"mode": 1, "amplitude": 0.5}]}), grid, rng)
    xi0 = build_field(ec.data.get("xi0", 1.0), grid, rng)
    out = Outcome()
    reps = []
    for k in ec.verify.get("K_basis_levels", [16, 32, 64]):
        reps.append(check_lemma_l_last1(h0, xi0, WhiteNoiseConfig(grid=grid, **{**spec, "K_basis": k})))
    gaps = [abs(r.ratio - 1) for r in reps]
    rep = reps[-1]
    rep.refinement_series = [r.ratio for r in reps]
    rep.passed = all(r.passed for r in reps) and all(b < a for a, b in zip(gaps[:-1], gaps[1:]))
    out.reports.append(rep)
    if solve:
        solver = build_solver({**solve, "alpha": wcfg.alpha, "gamma": wcfg.gamma, "p": wcfg.p,
                               "grid": {"n": grid.n, "length": grid.length}}, ec.seed)
        u0 = build_field(ec.data.get("u0"), grid, rng)
        sol = solve_white_noise(u0, xi0, wcfg, solver, h_slope=float(ec.data.get("h_slope", 0.0)), h0=h0,
                                n_paths=ec.mc_paths)
        _solution_artifacts(sol, out)
        finite = bool(np.isfinite(sol.norm_gamma).all())
        out.reports.append(make_report("whitenoise_solve", float(np.mean(sol.norm_gamma[:, -1] ** 2)), 1.0,
                                       dict(cfg=wcfg, solver=solver), passed=finite))
    return out


def run_verify_suite(ec: ExperimentConfig) -> Outcome:
    return Outcome(reports=run_suite(seed=ec.seed, mc_paths=ec.mc_paths, refinement_levels=ec.refinement_levels))


RUNNERS = {
    "deterministic": run_deterministic,
    "linear_wiener": run_linear_wiener,
    "linear_levy": run_linear_levy,
    "nonlinear_picard": run_nonlinear_picard,
    "whitenoise": run_whitenoise,
    "verify_suite": run_verify_suite,
}


def run_experiment(ec: ExperimentConfig) -> Outcome:
    return RUNNERS[ec.experiment](ec)


# -- output --------------------------------------------------------------------


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_experiment(out_dir: Path, name: str, outcome: Outcome) -> dict:
    """Write one experiment's artifacts into its own subdirectory; return its manifest entry."""
    sub = out_dir / name
    sub.mkdir(parents=True, exist_ok=True)
    files = dict(outcome.artifacts)
    for i, rep in enumerate(outcome.reports):
        files[f"report_{i:02d}_{rep.name}.json"] = rep.to_json() + "\n"
    buf = io.StringIO()
    write_reports_csv(outcome.reports, buf)
    files["reports.csv"] = buf.getvalue()
    listing = []
    for rel, text in sorted(files.items()):
        (sub / rel).write_text(text)
        listing.append({"path": f"{name}/{rel}", "sha256": _digest(text)})
    return {
        "name": name,
        "reports": [
            {"name": r.name, "config_digest": r.config_digest, "passed": bool(r.passed)} for r in outcome.reports
        ],
        "artifacts": listing,
    }


def write_manifest(out_dir: Path, raw: dict, experiments: list, extra_files=None, **extra) -> dict:
    """manifest.json listing every artifact with its sha256 digest."""
    artifacts = [a for e in experiments for a in e["artifacts"]]
    for rel, text in sorted((extra_files or {}).items()):
        (out_dir / rel).write_text(text)
        artifacts.append({"path": rel, "sha256": _digest(text)})
    manifest = {
        "config_sha256": _digest(json.dumps(raw, sort_keys=True, default=str)),
        "experiments": [{k: v for k, v in e.items() if k != "artifacts"} for e in experiments],
        "artifacts": artifacts,
        "environment": {
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "machine": platform.machine(),
        },
        **extra,
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


# -- commands ------------------------------------------------------------------


def cmd_run(args) -> int:
    ec, raw = load_config(args.config)
    out_dir = Path(args.output_dir or ec.output_dir)
    outcome = run_experiment(ec)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(out_dir, raw, [write_experiment(out_dir, ec.name, outcome)], seed=ec.seed)
    for r in outcome.reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: ratio={r.ratio:.6g}")
    return EXIT_OK if all(r.passed for r in outcome.reports) else EXIT_FAIL


def _scaled(raw: dict, axis: str, factor: float) -> dict:
    cfg = copy.deepcopy(raw)
    if axis == "dt":
        cfg.setdefault("solver", {})
        if cfg["experiment"] == "whitenoise":
            cfg["whitenoise"].setdefault("solve", {})
            cfg["whitenoise"]["solve"]["dt"] = cfg["whitenoise"]["solve"].get("dt", 0.01) * factor
        else:
            cfg["solver"]["dt"] = cfg["solver"].get("dt", 0.01) * factor
    elif axis == "grid":
        grid = cfg.setdefault("solver", {}).setdefault("grid", {})
        grid["n"] = int(round(grid.get("n", 64) * factor))
    elif axis == "K":
        key = "g" if cfg["experiment"] == "linear_levy" else "h"
        data = cfg.setdefault("data", {})
        base = data.get(key, {"random": 1.0})
        base = base if isinstance(base, list) else [base]
        data[key] = (base * int(math.ceil(factor)))[: max(1, int(round(len(base) * factor)))]
    elif axis == "K_basis":
        wn = cfg.setdefault("whitenoise", {})
        wn["K_basis"] = int(round(wn.get("K_basis", 16) * factor))
        cfg.setdefault("verify", {})["K_basis_levels"] = [wn["K_basis"]]
    elif axis == "mc_paths":
        cfg["mc_paths"] = max(1, int(round(cfg.get("mc_paths", 200) * factor)))
    return cfg


def _axis_value(raw, axis):
    if axis == "dt":
        return raw.get("solver", {}).get("dt", 0.01)
    if axis == "grid":
        return raw.get("solver", {}).get("grid", {}).get("n", 64)
    if axis == "mc_paths":
        return raw.get("mc_paths", 200)
    if axis == "K_basis":
        return raw.get("whitenoise", {}).get("K_basis", 16)
    return 1


def cmd_sweep(args) -> int:
    if args.axis not in SWEEP_AXES:
        raise ConfigError(f"axis must be one of {SWEEP_AXES}")
    try:
        factors = [float(x) for x in args.factors.split(",")]
    except ValueError as err:
        raise ConfigError(f"bad factors {args.factors!r}") from err
    if not factors or any(f <= 0 for f in factors):
        raise ConfigError("factors must be positive")
    ec, raw = load_config(args.config)
    out_dir = Path(args.output_dir or ec.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    series = {}
    values = []
    entries = []
    for i, fac in enumerate(factors):
        cfg_i = _scaled(raw, args.axis, fac)
        ec_i = ExperimentConfig.from_dict(cfg_i)
        outcome = run_experiment(ec_i)
        values.append(_axis_value(cfg_i, args.axis) * (fac if args.axis == "K" else 1))
        for r in outcome.reports:
            series.setdefault(r.name, []).append(r)
        entries.append(write_experiment(out_dir, f"{ec.name}_{args.axis}_{i}", outcome))
    summary = []
    final = []
    for name, reps in series.items():
        last = reps[-1]
        last.refinement_series = [r.ratio for r in reps]
        entry = {"name": name, "axis": args.axis, "values": values, "ratios": last.refinement_series,
                 "mc_std_errors": [r.mc_std_error for r in reps]}
        positive = [(v, r) for v, r in zip(values, last.refinement_series) if r > 0 and v > 0]
        if len(positive) >= 2:
            entry["slope"] = fitted_order([v for v, _ in positive], [r for _, r in positive])
        se = [(v, r.mc_std_error) for v, r in zip(values, reps) if r.mc_std_error > 0]
        if len(se) >= 2:
            entry["std_error_slope"] = fitted_order([v for v, _ in se], [s for _, s in se])
        entry["passed"] = all(r.passed for r in reps)
        summary.append(entry)
        final.append(last)
    buf = io.StringIO()
    write_reports_csv(final, buf)
    extra = {"sweep.json": json.dumps(summary, indent=2, default=float) + "\n", "sweep.csv": buf.getvalue()}
    write_manifest(out_dir, raw, entries, extra, seed=ec.seed, sweep={"axis": args.axis, "factors": factors})
    for e in summary:
        slope = f" slope={e['slope']:.3f}" if "slope" in e else ""
        print(f"{'PASS' if e['passed'] else 'FAIL'}  {e['name']}: ratios={e['ratios']}{slope}")
    return EXIT_OK if all(e["passed"] for e in summary) else EXIT_FAIL


def cmd_list(args) -> int:
    for name, desc in EXPERIMENTS.items():
        print(f"{name:18s} {desc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracspde", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir")
    p_run.set_defaults(func=cmd_run)
    p_sweep = sub.add_parser("sweep", help="rerun a config with one parameter scaled")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--factors", required=True, help="comma-separated scale factors")
    p_sweep.add_argument("--output-dir")
    p_sweep.set_defaults(func=cmd_sweep)
    p_list = sub.add_parser("list-experiments", help="list available experiments")
    p_list.set_defaults(func=cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        cond = f" (violates: {err.condition})" if err.condition else ""
        print(f"config error: {err}{cond}", file=sys.stderr)
        return EXIT_CONFIG
    except PicardDivergenceError as err:
        print(f"Picard iteration diverged: {err}", file=sys.stderr)
        print(f"difference norms: {err.history}", file=sys.stderr)
        print(f"ratios: {err.ratios}", file=sys.stderr)
        return EXIT_DIVERGED
    except TypeError as err:
        # bad keyword in a nested config section
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
