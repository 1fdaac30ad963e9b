"""Command-line front end.

Subcommands: ``eigen``, ``cone``, ``fm``, ``solve``, ``regularize`` and
``verify-suite``.  Every run reads one JSON config, writes its artifacts
into the output directory together with a manifest carrying the resolved
defaults and a content hash of the config, and exits with 0 on success,
2 on config parse errors, 3 on validation errors, 4 on solver or pipeline
failures and 5 on internal invariant violations.
"""

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cones import is_m_semipositive, strong_positivity_oracle
from .curvature import verify_bound_regime
from .errors import ConfigError, MHessianError
from .fm import concavity_probe, fm_gradient_diagonal, fm_product_bound, \
    fm_value, fm_via_determinant
from .grids import GridDomain, GridFunction, MetricField
from .hermitian import HermitianMatrix, MetricMatrix, matrix_from_json, \
    relative_eigenvalues
from .multiindex import multi_indices, subset_sums
from .regularize import ApproximationSchedule, global_regularize, \
    local_regularize, upper_smooth_sequence, verify_monotone_convergence
from .serialize import domain_from_config, gridfunction_to_binary, \
    gridfunction_to_csv, write_csv_rows, write_json
from .solver import RightHandSide, SolverConfig, continuity_path, \
    max_principle_check, solve_dirichlet, solve_torus

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4
EXIT_INVARIANT = 5


# ---------------------------------------------------------------------------
# config helpers

FIELD_KINDS = {}


def field_kind(name):
    def wrap(fn):
        FIELD_KINDS[name] = fn
        return fn
    return wrap


@field_kind("constant")
def _field_constant(cfg, coords):
    return np.full(coords.shape[0], float(cfg.get("value", 0.0)))


@field_kind("squared_norm")
def _field_squared_norm(cfg, coords):
    scale = float(cfg.get("scale", 1.0))
    offset = float(cfg.get("offset", 0.0))
    return scale * (coords ** 2).sum(axis=-1) + offset


@field_kind("quadratic_plus_exp")
def _field_quadratic_plus_exp(cfg, coords):
    scale = float(cfg.get("scale", 0.05))
    offset = float(cfg.get("offset", 0.0))
    return (coords ** 2).sum(axis=-1) + scale * np.exp(coords[:, 0]) + offset


@field_kind("max_re")
def _field_max_re(cfg, coords):
    if coords.shape[1] < 4:
        raise ConfigError("max_re needs complex dimension >= 2")
    offset = float(cfg.get("offset", 0.0))
    return np.maximum(coords[:, 0], coords[:, 2]) + offset


@field_kind("cos_wave")
def _field_cos_wave(cfg, coords):
    amplitude = float(cfg.get("amplitude", 1.0))
    offset = float(cfg.get("offset", 0.0))
    axis = int(cfg.get("axis", 0))
    return amplitude * np.cos(2.0 * np.pi * coords[:, axis]) + offset


def field_from_config(cfg: dict):
    kind = cfg.get("kind")
    if kind not in FIELD_KINDS:
        raise ConfigError(f"unknown field kind {kind!r}; "
                          f"expected one of {sorted(FIELD_KINDS)}")
    return lambda coords: FIELD_KINDS[kind](cfg, coords)


def metric_from_config(cfg, n: int) -> MetricMatrix:
    if cfg is None:
        return MetricMatrix.identity(n)
    return MetricMatrix(matrix_from_json(cfg))


def solver_config_from(config: dict) -> SolverConfig:
    """Solver settings, read from a nested "solver" table or flat keys."""
    config = config or {}
    nested = config.get("solver", {})

    def pick(key, default):
        return nested.get(key, config.get(key, default))

    return SolverConfig(
        tolerance=float(pick("tolerance", 1e-9)),
        max_iterations=int(pick("max_iterations", 100)),
        t_steps=int(pick("t_steps", 8)),
        cone_floor=float(pick("cone_floor", 1e-10)),
        damping_min_step=float(pick("damping_min_step", 2.0 ** -20)),
    )


def rhs_from_config(cfg: dict, m: int, reference: GridFunction) -> RightHandSide:
    kind = cfg.get("kind")
    if kind == "manufactured_quadratic":
        return RightHandSide.manufactured_quadratic(m)
    if kind == "scaled_exponential":
        amplitude = field_from_config(cfg["amplitude"])
        shift = field_from_config(cfg["shift"])
        return RightHandSide.scaled_exponential(amplitude, shift)
    if kind == "penalized_distance":
        return RightHandSide.penalized_distance(float(cfg["beta"]), reference)
    raise ConfigError(f"unknown rhs kind {kind!r}")


# ---------------------------------------------------------------------------
# commands

def run_eigen(config: dict, out: Path, rng) -> None:
    T = matrix_from_json(config["T"])
    omega = metric_from_config(config.get("omega"), T.dim)
    spec = relative_eigenvalues(T, omega)
    write_csv_rows(out / "eigenvalues.csv", ["index", "lambda"],
                   [(k, v) for k, v in enumerate(spec.lambdas)])
    write_json({"lambdas": spec.lambdas.tolist(),
                "trace": float(spec.lambdas.sum())}, out / "report.json")
    return {"eigenvalues.csv": ["hermitian", "relative_eigenvalues"],
            "report.json": ["hermitian", "relative_eigenvalues"]}


def run_cone(config: dict, out: Path, rng) -> None:
    T = matrix_from_json(config["T"])
    omega = metric_from_config(config.get("omega"), T.dim)
    m = int(config["m"])
    verdict = is_m_semipositive(T, omega, m)
    oracle = strong_positivity_oracle(T, omega, m)
    data = {"verdict": verdict.to_json(), "oracle": oracle.to_json(),
            "agreement": verdict.member == oracle.member}
    write_json(data, out / "report.json")
    write_csv_rows(out / "cone.csv", ["member", "margin", "witness"],
                   [(verdict.member, verdict.margin,
                     " ".join(map(str, verdict.witness)))])
    return {"report.json": ["cones", "is_m_semipositive"],
            "cone.csv": ["cones", "strong_positivity_oracle"]}


def run_fm(config: dict, out: Path, rng) -> None:
    T = matrix_from_json(config["T"])
    omega = metric_from_config(config.get("omega"), T.dim)
    m = int(config["m"])
    fv = fm_value(T, omega, m)
    det_route = fm_via_determinant(T, omega, m) if fv.value > 0 else None
    write_json({"value": fv.value, "msums": fv.msums.tolist(),
                "determinant_route": det_route}, out / "report.json")
    rows = [(k, "_".join(str(i + 1) for i in J), s)
            for k, (J, s) in enumerate(zip(multi_indices(T.dim, m), fv.msums))]
    write_csv_rows(out / "msums.csv", ["index", "multi_index", "sum"], rows)
    return {"report.json": ["fm", "fm_value"], "msums.csv": ["fm", "fm_value"]}


def run_solve(config: dict, out: Path, rng) -> None:
    problem = config.get("problem", "dirichlet")
    domain = domain_from_config(config["grid"])
    m = int(config["m"])
    g = MetricField(domain=domain,
                    constant=metric_from_config(config.get("metric"), domain.n))
    cfg = solver_config_from(config)
    if problem == "dirichlet":
        boundary = GridFunction.from_callable(
            domain, field_from_config(config["boundary"])
        )
        rhs = rhs_from_config(config["rhs"], m, boundary)
        if config.get("homotopy", True):
            report = continuity_path(boundary, rhs, g, m, cfg)
        else:
            report = solve_dirichlet(boundary, rhs, g, m, cfg)
        gap = max_principle_check(report, boundary)
    elif problem == "torus":
        chi = matrix_from_json(config["chi"])
        reference = GridFunction.from_callable(
            domain, field_from_config(config["reference"])
        )
        rhs = rhs_from_config(config["rhs"], m, reference)
        report = solve_torus(chi, rhs, g, m, cfg)
        gap = None
    else:
        raise ConfigError(f"unknown problem {problem!r}")
    payload = report.to_json()
    payload["max_principle_gap"] = gap
    write_json(payload, out / "report.json")
    gridfunction_to_csv(report.solution, out / "solution.csv")
    gridfunction_to_binary(report.solution, out / "solution.bin")
    op = "solve_torus" if problem == "torus" else (
        "continuity_path" if config.get("homotopy", True) else "solve_dirichlet")
    return {name: ["solver", op]
            for name in ("report.json", "solution.csv", "solution.bin")}


def run_regularize(config: dict, out: Path, rng) -> None:
    mode = config.get("mode", "local")
    domain = domain_from_config(config["grid"])
    m = int(config["m"])
    g = MetricField(domain=domain,
                    constant=metric_from_config(config.get("metric"), domain.n))
    target = GridFunction.from_callable(
        domain, field_from_config(config["target"])
    )
    cfg = solver_config_from(config)
    sched_cfg = config.get("schedule", {})
    count = int(sched_cfg.get("count", 6))
    if "approximants" in sched_cfg and sched_cfg["approximants"] == "smooth":
        fs = upper_smooth_sequence(target, count)
    else:
        eta0 = float(sched_cfg.get("eta_start", 0.5))
        decay = float(sched_cfg.get("eta_decay", 0.25))
        fs = [GridFunction(domain, target.flat + eta0 * decay ** k)
              for k in range(count)]
    schedule = ApproximationSchedule.geometric(
        fs,
        beta_start=float(sched_cfg.get("beta_start", 10.0)),
        growth=float(sched_cfg.get("growth", 2.0)),
    )
    iterates = int(config.get("iterates", 3))
    if mode == "local":
        result = local_regularize(target, g, m, schedule, cfg, iterates)
    elif mode == "global":
        chi = matrix_from_json(config["chi"])
        result = global_regularize(target, chi, g, m, schedule, cfg, iterates)
    else:
        raise ConfigError(f"unknown regularization mode {mode!r}")
    report = verify_monotone_convergence(result, target)
    summary = {
        "mode": mode,
        "indices": list(result.indices),
        "monotone_gap": result.monotone_gap,
        "lower_gap": result.lower_gap,
        "sup_deviation": list(result.sup_deviation),
        "cone_margins": list(result.cone_margins),
        "passed": report.passed,
    }
    write_json(summary, out / "summary.json")
    for k, u in enumerate(result.u_sequence):
        gridfunction_to_csv(u, out / f"iterate_{k:02d}.csv")
        gridfunction_to_binary(u, out / f"iterate_{k:02d}.bin")
    if not report.passed:
        raise MHessianError("regularization run failed its convergence report")
    op = "local_regularize" if mode == "local" else "global_regularize"
    artifacts = {"summary.json": ["regularize", op]}
    for k in range(len(result.u_sequence)):
        artifacts[f"iterate_{k:02d}.csv"] = ["regularize", op]
        artifacts[f"iterate_{k:02d}.bin"] = ["regularize", op]
    return artifacts


def run_verify_suite(config: dict, out: Path, rng) -> None:
    rows = []

    def record(name, cases, failures):
        rows.append((name, cases, failures, "pass" if failures == 0 else "FAIL"))

    def random_hermitian(n, scale=1.0):
        X = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        return HermitianMatrix(scale * 0.5 * (X + X.conj().T))

    def random_metric(n):
        Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        Q, _ = np.linalg.qr(Z)
        vals = rng.uniform(0.5, 2.0, size=n)
        return MetricMatrix(HermitianMatrix(Q @ np.diag(vals) @ Q.conj().T))

    def interior_spectrum(n, m):
        lam = np.sort(rng.uniform(-1.0, 2.0, size=n))
        smallest = lam[:m].sum()
        if smallest < 0.1:
            lam = lam + (0.1 - smallest) / m
        return lam

    # oracle equivalence and monotonicity on one seeded corpus
    fails_eq = fails_mono = 0
    n_cases = int(config.get("corpus_size", 1000))
    for _ in range(n_cases):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, n + 1))
        T, omega = random_hermitian(n), random_metric(n)
        a = is_m_semipositive(T, omega, m)
        b = strong_positivity_oracle(T, omega, m)
        if a.member != b.member or abs(a.margin - b.margin) > 1e-12:
            fails_eq += 1
        if m < n and a.member and not is_m_semipositive(T, omega, m + 1).member:
            fails_mono += 1
    record("oracle_equivalence", n_cases, fails_eq)
    record("membership_monotonicity", n_cases, fails_mono)

    # gradient versus finite differences
    fails = 0
    for _ in range(200):
        n = int(rng.integers(1, 6))
        m = int(rng.integers(1, n + 1))
        lam = interior_spectrum(n, m)
        grad = fm_gradient_diagonal(lam, m)
        h = 1e-5
        for p in range(n):
            up, dn = lam.copy(), lam.copy()
            up[p] += h
            dn[p] -= h
            from .fm import fm_from_lambdas
            fd = (fm_from_lambdas(up, m).value
                  - fm_from_lambdas(dn, m).value) / (2 * h)
            if abs(fd - grad[p]) > 1e-6 * max(1.0, abs(fd)):
                fails += 1
    record("gradient_finite_differences", 200, fails)

    # determinant route equivalence
    fails = 0
    for _ in range(500):
        n = int(rng.integers(2, 5))
        m = int(rng.integers(1, n + 1))
        g = random_metric(n)
        lam = interior_spectrum(n, m)
        Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        Q, _ = np.linalg.qr(Z)
        B = g.cholesky @ Q
        T = HermitianMatrix(B @ np.diag(lam) @ B.conj().T)
        a = fm_via_determinant(T, g, m)
        b = fm_value(T, g, m).value
        if abs(a - b) > 1e-9 * abs(b):
            fails += 1
    record("determinant_route", 500, fails)

    # concavity probe
    fails = 0
    for _ in range(500):
        n = int(rng.integers(2, 5))
        m = int(rng.integers(1, n + 1))
        g = random_metric(n)

        def sample():
            lam = interior_spectrum(n, m)
            Z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            Q, _ = np.linalg.qr(Z)
            B = g.cholesky @ Q
            return HermitianMatrix(B @ np.diag(lam) @ B.conj().T)

        if not concavity_probe(sample(), sample(), g, m, steps=7):
            fails += 1
    record("concavity_probe", 500, fails)

    # curvature bound regimes
    for case in ("p0", "0q", "nq", "pn"):
        fails = 0
        for _ in range(500):
            n = int(rng.integers(2, 6))
            c = float(rng.uniform(0.2, 1.5))
            if case in ("nq", "pn"):
                level = int(rng.integers(1, n + 1))
            else:
                level = int(rng.integers(0, n))
            while True:
                lam = rng.uniform(-3.0, 3.0, size=n)
                k = n - level if case in ("p0", "0q") else level
                if case in ("p0", "0q"):
                    if k == 0 or subset_sums(lam + c, k).max() <= 0.0:
                        break
                elif k == 0 or subset_sums(lam - c, k).min() >= 0.0:
                    break
            if not verify_bound_regime(case, lam, c, level):
                fails += 1
        record(f"bound_regime_{case}", 500, fails)

    # product lower bound
    fails = 0
    for n in (2, 3, 4):
        for m in range(1, n + 1):
            lam = np.sort(rng.uniform(-1.0, 2.0, size=(10000, n)), axis=-1)
            smallest = lam[:, :m].sum(axis=-1)
            lam += (np.maximum(0.0, 1e-3 - smallest) / m)[:, None]
            prods = np.prod(fm_gradient_diagonal(lam, m), axis=-1)
            fails += int((prods < fm_product_bound(n, m) - 1e-12).sum())
    record("gradient_product_bound", 90000, fails)

    write_csv_rows(out / "suite_summary.csv",
                   ["suite", "cases", "failures", "status"], rows)
    width = max(len(r[0]) for r in rows)
    for name, cases, failures, status in rows:
        print(f"{name:<{width}}  {cases:>6}  {failures:>3}  {status}")
    if any(r[2] for r in rows):
        raise MHessianError("verify-suite found property violations")
    return {"suite_summary.csv": ["cli", "verify_suite"]}


COMMANDS = {
    "eigen": run_eigen,
    "cone": run_cone,
    "fm": run_fm,
    "solve": run_solve,
    "regularize": run_regularize,
    "verify-suite": run_verify_suite,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mhessian",
        description="eigenvalue-sum cones, the F_m operator, grid solvers "
                    "and monotone smoothing pipelines",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=False, help="JSON config path")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=0,
                        help="seed for randomized suites")
    parser.add_argument("--grid-override", type=int, default=None,
                        help="override points_per_axis in the config grid")
    parser.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {}
    config_hash = None
    if args.config:
        try:
            raw = Path(args.config).read_bytes()
            config_hash = hashlib.sha256(raw).hexdigest()
            config = json.loads(raw)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    if args.grid_override is not None and "grid" in config:
        config["grid"]["points_per_axis"] = args.grid_override
    manifest = {
        "command": args.command,
        "config_path": args.config,
        "output_dir": str(out),
        "seed": args.seed,
        "config_sha256": config_hash,
        "resolved_config": config,
        "package_version": __version__,
    }
    write_json(manifest, out / "manifest.json")
    rng = np.random.default_rng(args.seed)
    try:
        artifacts = COMMANDS[args.command](config, out, rng)
        manifest["artifacts"] = artifacts or {}
        write_json(manifest, out / "manifest.json")
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except KeyError as exc:
        print(f"validation error: missing config key {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MHessianError as exc:
        module = type(exc).__module__ + "." + type(exc).__name__
        report = {"error": str(exc), "type": module}
        write_json(report, out / "error.json")
        print(f"run failed: {exc}", file=sys.stderr)
        from .errors import (ChiNotPositive, ConeBoundaryError, ConeEscape,
                             DimensionMismatchError, DirichletFailure,
                             HypothesisViolatedError, IllPosedRHS,
                             NewtonDiverged, NotHermitianError,
                             NotPositiveDefiniteError, ScheduleExhausted,
                             TargetNotAdmissible)
        if isinstance(exc, (ConfigError, DimensionMismatchError,
                            NotHermitianError, NotPositiveDefiniteError,
                            ConeBoundaryError, HypothesisViolatedError,
                            ChiNotPositive, TargetNotAdmissible)):
            return EXIT_VALIDATION
        if isinstance(exc, (NewtonDiverged, ConeEscape, DirichletFailure,
                            ScheduleExhausted, IllPosedRHS)):
            return EXIT_RUNTIME
        return EXIT_INVARIANT
    if not args.quiet:
        print(f"{args.command}: artifacts written to {out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
