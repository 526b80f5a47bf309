"""Command-line front end: configuration, dispatch and report files.

Exit codes: 0 = pass, 1 = fail (including numerical failures), 2 = bad
configuration, parameters outside the existence regime, or unusable inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bubbles import (
    SCAN_COLUMNS,
    BubbleSpec,
    bubble,
    bubble_critical_norm,
    bubble_scan,
    default_s_exponent,
    instanton,
    scan_slopes,
)
from .constants import (
    ProblemParams,
    choquard_constant,
    constants_report,
    hls_sharp_constant,
    riesz_normalization,
    sobolev_constant,
)
from .errors import (
    ChoquardError,
    ConfigError,
    DataError,
    DegenerateInputError,
    DomainError,
    UnsupportedParameterError,
)
from .levels import (
    SolverOptions,
    minimize_constraint,
    minimize_nehari,
    verify_constraint_level,
    verify_nehari_level,
)
from .radial import (
    RadialGrid,
    dirichlet_energy,
    load_field_csv,
    make_grid,
    random_smooth_profile,
    save_field_csv,
)
from .riesz import (
    KernelMatrix,
    apply_riesz,
    build_kernel,
    choquard_energy,
    load_kernel,
    newton_oracle,
    save_kernel,
)
from .variational import fibering_root

__all__ = ["RunConfig", "parse_config", "run_command", "write_report", "main", "COMMANDS"]

COMMANDS = ("constants", "bubble-scan", "fibering", "level-check", "constraint-check", "solve", "oracle")
ORACLE_TESTS = ("newton", "hls", "sobolev")

DEFAULT_EPS = (0.1, 0.05, 0.025, 0.0125)
# smaller eps for the N = 4 family and for the constraint bracket (see README)
DEFAULT_EPS_N4 = (0.025, 0.0125, 0.00625, 0.003125)
DEFAULT_EPS_CONSTRAINT = (0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


@dataclass(frozen=True)
class RunConfig:
    N: int = 5
    alpha: float = 2.0
    q: float = 3.0
    grid: tuple = (1e-6, 1e4, 2048)
    eps_list: tuple | None = None  # None: per-command default
    s_exponent: float | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    output_dir: Path = Path(".")
    seed: int = 0
    input_path: Path | None = None
    test: str = "all"
    problem: str = "nehari"
    kernel_cache: Path | None = None

    @property
    def params(self) -> ProblemParams:
        return ProblemParams(self.N, self.alpha, self.q)

    def eps_for(self, command: str) -> tuple:
        if self.eps_list is not None:
            return self.eps_list
        if command == "constraint-check" or (command == "solve" and self.problem == "constraint"):
            return DEFAULT_EPS_CONSTRAINT
        if self.N == 4:
            return DEFAULT_EPS_N4
        return DEFAULT_EPS

    def s_for_scan(self) -> float | None:
        if self.N != 4:
            return None
        if self.s_exponent is not None:
            return self.s_exponent
        return default_s_exponent(self.q) if 3.0 < self.q < 4.0 else None


# -- configuration ----------------------------------------------------------

_SOLVER_KEYS = {"maxIter": "max_iter", "tolI": "tol_I", "tolResidual": "tol_residual", "eta0": "eta0"}
_TOP_KEYS = {"N", "alpha", "q", "grid", "epsList", "sExponent", "solver", "outputDir", "seed"}


def _number(path: str, value, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    if integer:
        if int(value) != value:
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if not math.isfinite(value):
        raise ConfigError(f"{path}: must be finite, got {value!r}")
    return float(value)


def _grid_from(path: str, value) -> tuple:
    if isinstance(value, dict):
        try:
            value = [value["rMin"], value["rMax"], value["M"]]
        except KeyError as exc:
            raise ConfigError(f"{path}: missing key {exc.args[0]!r}") from None
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ConfigError(f"{path}: expected [rMin, rMax, M]")
    r_min = _number(f"{path}.rMin", value[0])
    r_max = _number(f"{path}.rMax", value[1])
    M = _number(f"{path}.M", value[2], integer=True)
    if not 0 < r_min < r_max:
        raise ConfigError(f"{path}: need 0 < rMin < rMax, got {r_min}, {r_max}")
    if M < 16:
        raise ConfigError(f"{path}.M: must be >= 16, got {M}")
    return (r_min, r_max, M)


def _eps_from(path: str, value) -> tuple:
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(f"{path}: expected a nonempty list of numbers")
    eps = tuple(_number(f"{path}[{i}]", v) for i, v in enumerate(value))
    if any(e <= 0 for e in eps):
        raise ConfigError(f"{path}: eps values must be positive")
    return eps


def _parse_list(text: str, flag: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"{flag}: expected comma-separated numbers, got {text!r}") from None


def _apply_document(cfg: RunConfig, doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config: top level must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"config: unknown key(s) {sorted(unknown)}")
    upd = {}
    if "N" in doc:
        upd["N"] = _number("N", doc["N"], integer=True)
    if "alpha" in doc:
        upd["alpha"] = _number("alpha", doc["alpha"])
    if "q" in doc:
        upd["q"] = _number("q", doc["q"])
    if "grid" in doc:
        upd["grid"] = _grid_from("grid", doc["grid"])
    if "epsList" in doc:
        upd["eps_list"] = _eps_from("epsList", doc["epsList"])
    if "sExponent" in doc and doc["sExponent"] is not None:
        upd["s_exponent"] = _number("sExponent", doc["sExponent"])
    if "seed" in doc:
        upd["seed"] = _number("seed", doc["seed"], integer=True)
    if "outputDir" in doc:
        if not isinstance(doc["outputDir"], str):
            raise ConfigError("outputDir: expected a string")
        upd["output_dir"] = Path(doc["outputDir"])
    if "solver" in doc:
        sv = doc["solver"]
        if not isinstance(sv, dict):
            raise ConfigError("solver: expected an object")
        bad = set(sv) - set(_SOLVER_KEYS)
        if bad:
            raise ConfigError(f"solver: unknown key(s) {sorted(bad)}")
        kw = {}
        for key, attr in _SOLVER_KEYS.items():
            if key in sv:
                kw[attr] = _number(f"solver.{key}", sv[key], integer=(key == "maxIter"))
        try:
            upd["solver"] = replace(cfg.solver, **kw)
        except ConfigError as exc:
            raise ConfigError(f"solver: {exc}") from None
    return replace(cfg, **upd)


def parse_config(document: str | dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Build a validated RunConfig from a JSON document and flag overrides (flags win)."""
    cfg = RunConfig()
    if document is not None:
        if isinstance(document, str):
            try:
                document = json.loads(document) if document.strip() else {}
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config: malformed JSON ({exc})") from None
        cfg = _apply_document(cfg, document)
    ov = overrides or {}
    upd = {}
    if ov.get("n") is not None:
        upd["N"] = ov["n"]
    if ov.get("alpha") is not None:
        upd["alpha"] = ov["alpha"]
    if ov.get("q") is not None:
        upd["q"] = ov["q"]
    if ov.get("eps") is not None:
        upd["eps_list"] = _eps_from("--eps", _parse_list(ov["eps"], "--eps"))
    if ov.get("s") is not None:
        upd["s_exponent"] = ov["s"]
    if ov.get("grid") is not None:
        upd["grid"] = _grid_from("--grid", _parse_list(ov["grid"], "--grid"))
    if ov.get("out") is not None:
        upd["output_dir"] = Path(ov["out"])
    if ov.get("in_path") is not None:
        upd["input_path"] = Path(ov["in_path"])
    if ov.get("seed") is not None:
        upd["seed"] = ov["seed"]
    if ov.get("test") is not None:
        upd["test"] = ov["test"]
    if ov.get("problem") is not None:
        upd["problem"] = ov["problem"]
    if ov.get("kernel_cache") is not None:
        upd["kernel_cache"] = Path(ov["kernel_cache"])
    if ov.get("max_iter") is not None:
        upd["solver"] = replace(cfg.solver, max_iter=ov["max_iter"])
    cfg = replace(cfg, **upd)
    cfg.params  # validates N, alpha, q
    return cfg


# -- reports ----------------------------------------------------------------


def _jsonable(obj):
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_report(report, path) -> Path:
    """JSON (2-space indent, UTF-8, LF) for scalar reports; CSV rows for scans.

    CSV input is a list of dicts sharing the same keys.
    """
    path = Path(path)
    if path.suffix == ".csv":
        rows = [r.to_row() if hasattr(r, "to_row") else r for r in report]
        if not rows:
            raise DataError(f"{path}: refusing to write an empty table")
        cols = list(rows[0])
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\r\n")
                writer.writerow(cols)
                for row in rows:
                    writer.writerow([_fmt(row[c]) for c in cols])
        except OSError as exc:
            raise DataError(f"{path}: cannot write report ({exc.strerror})") from None
        return path
    text = json.dumps(_jsonable(report), indent=2, allow_nan=False) + "\n"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise DataError(f"{path}: cannot write report ({exc.strerror})") from None
    return path


def read_scan_csv(path) -> list[dict]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


# -- commands ---------------------------------------------------------------


def _grid(cfg: RunConfig) -> RadialGrid:
    r_min, r_max, M = cfg.grid
    return make_grid(cfg.N, r_min, r_max, M)


def _kernel(cfg: RunConfig, grid: RadialGrid, alpha: float | None = None) -> KernelMatrix:
    alpha = cfg.alpha if alpha is None else alpha
    cache = cfg.kernel_cache
    if cache is not None and cache.exists():
        return load_kernel(cache, grid, alpha)
    K = build_kernel(grid, alpha)
    if cache is not None:
        save_kernel(K, cache)
    return K


def _cmd_constants(cfg: RunConfig) -> int:
    rep = constants_report(cfg.params)
    write_report(rep, cfg.output_dir / "constants.json")
    return EXIT_PASS


def _cmd_bubble_scan(cfg: RunConfig) -> int:
    grid = _grid(cfg)
    K = _kernel(cfg, grid)
    rows = bubble_scan(grid, K, cfg.params, cfg.eps_for("bubble-scan"), cfg.s_for_scan())
    write_report([{c: r.to_row()[c] for c in SCAN_COLUMNS} for r in rows], cfg.output_dir / "scan.csv")
    write_report(scan_slopes(rows), cfg.output_dir / "slopes.json")
    return EXIT_PASS


def _cmd_fibering(cfg: RunConfig) -> int:
    if cfg.input_path is None:
        raise ConfigError("fibering: --in field.csv is required")
    grid = _grid(cfg)
    u = load_field_csv(cfg.input_path, grid)
    res = fibering_root(u, _kernel(cfg, grid), cfg.params)
    summary = {k: v for k, v in res.to_dict().items() if k != "gSamples"}
    write_report(summary, cfg.output_dir / "fibering.json")
    write_report([{"t": t, "g": g} for t, g in res.g_samples], cfg.output_dir / "g_samples.csv")
    return EXIT_PASS


def _cmd_level_check(cfg: RunConfig) -> int:
    params = cfg.params
    params.require_regime()
    grid = _grid(cfg)
    rep = verify_nehari_level(params, grid, _kernel(cfg, grid), cfg.eps_for("level-check"), cfg.s_exponent)
    write_report(rep, cfg.output_dir / "level_report.json")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _cmd_constraint_check(cfg: RunConfig) -> int:
    params = cfg.params
    params.require_regime()
    grid = _grid(cfg)
    rep = verify_constraint_level(
        params, grid, _kernel(cfg, grid), cfg.eps_for("constraint-check"), cfg.s_exponent
    )
    write_report(rep, cfg.output_dir / "constraint_report.json")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _cmd_solve(cfg: RunConfig) -> int:
    params = cfg.params
    params.require_regime()
    if cfg.problem not in ("nehari", "constraint"):
        raise ConfigError(f"--problem must be 'nehari' or 'constraint', got {cfg.problem!r}")
    grid = _grid(cfg)
    K = _kernel(cfg, grid)
    eps = cfg.eps_for("solve")
    if cfg.problem == "nehari":
        if cfg.input_path is not None:
            start = load_field_csv(cfg.input_path, grid)
        else:
            s = cfg.s_for_scan()
            start = bubble(grid, BubbleSpec.for_scan(cfg.N, eps[0], cfg.q, s))
        u, rep = minimize_nehari(params, grid, K, start, cfg.solver)
    else:
        if cfg.input_path is not None:
            start = load_field_csv(cfg.input_path, grid)
        else:
            check = verify_constraint_level(params, grid, K, eps, cfg.s_exponent)
            if not check.passed:
                raise DataError("solve: no feasible eps to build a start on the constraint set")
            spec = BubbleSpec.for_scan(cfg.N, check.eps_used, cfg.q, cfg.s_for_scan())
            t = next(r["tEps"] for r in check.details["rows"] if r["eps"] == check.eps_used)
            start = bubble(grid, spec).scaled(t / bubble_critical_norm(grid, spec))
        u, rep = minimize_constraint(params, grid, K, start, cfg.solver)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    save_field_csv(u, cfg.output_dir / "minimizer.csv")
    write_report(rep, cfg.output_dir / "solve_report.json")
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _oracle_newton(cfg: RunConfig, grid: RadialGrid) -> dict:
    K = _kernel(cfg, grid, alpha=2.0) if cfg.alpha == 2.0 else build_kernel(grid, 2.0)
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for _ in range(10):
        f = random_smooth_profile(grid, rng)
        a = apply_riesz(K, f).values
        b = newton_oracle(f).values
        worst = max(worst, float(np.linalg.norm(a - b) / np.linalg.norm(b)))
    return {"value": worst, "tolerance": 1e-6, "passed": worst < 1e-6}


def _oracle_hls(cfg: RunConfig, grid: RadialGrid) -> dict:
    N, alpha = cfg.N, cfg.alpha
    K = _kernel(cfg, grid)
    p = (N + alpha) / (N - 2)
    target = choquard_constant(N, alpha) * sobolev_constant(N) ** ((N + alpha) / 2)
    b = choquard_energy(K, instanton(grid), p)
    rel = abs(b - target) / target
    product = hls_sharp_constant(N, N - alpha) * riesz_normalization(N, alpha)
    ident = abs(product - choquard_constant(N, alpha)) / choquard_constant(N, alpha)
    return {
        "value": rel,
        "tolerance": 5e-3,
        "constantIdentity": ident,
        "passed": rel < 5e-3 and ident < 1e-12,
    }


def _oracle_sobolev(cfg: RunConfig, grid: RadialGrid) -> dict:
    N = cfg.N
    target = sobolev_constant(N) ** (N / 2)
    U = instanton(grid)
    grad = abs(dirichlet_energy(U) - target) / target
    crit = abs(bubble_critical_norm(grid, BubbleSpec(N, 1.0)) ** (2 * N / (N - 2)) - target) / target
    return {
        "value": max(grad, crit),
        "gradient": grad,
        "criticalNorm": crit,
        "tolerance": 5e-3,
        "passed": max(grad, crit) < 5e-3,
    }


def _cmd_oracle(cfg: RunConfig) -> int:
    tests = ORACLE_TESTS if cfg.test == "all" else (cfg.test,)
    if any(t not in ORACLE_TESTS for t in tests):
        raise ConfigError(f"--test must be one of {', '.join(ORACLE_TESTS)} or all, got {cfg.test!r}")
    grid = _grid(cfg)
    runners = {"newton": _oracle_newton, "hls": _oracle_hls, "sobolev": _oracle_sobolev}
    results = {t: runners[t](cfg, grid) for t in tests}
    write_report(results, cfg.output_dir / "oracle.json")
    return EXIT_PASS if all(r["passed"] for r in results.values()) else EXIT_FAIL


_DISPATCH = {
    "constants": _cmd_constants,
    "bubble-scan": _cmd_bubble_scan,
    "fibering": _cmd_fibering,
    "level-check": _cmd_level_check,
    "constraint-check": _cmd_constraint_check,
    "solve": _cmd_solve,
    "oracle": _cmd_oracle,
}


def run_command(cmd: str, cfg: RunConfig) -> int:
    if cmd not in _DISPATCH:
        raise ConfigError(f"unknown command {cmd!r}")
    return _DISPATCH[cmd](cfg)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="choquard",
        description="Energy levels, bubbles and ground states of the critical Choquard problem.",
    )
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON configuration file")
    ap.add_argument("--n", type=int, help="dimension N")
    ap.add_argument("--alpha", type=float, help="Riesz order alpha")
    ap.add_argument("--q", type=float, help="local exponent q")
    ap.add_argument("--eps", help="comma-separated eps list, decreasing")
    ap.add_argument("--s", type=float, help="N = 4 exponent s in sigma = eps^s")
    ap.add_argument("--grid", help="rMin,rMax,M")
    ap.add_argument("--in", dest="in_path", help="input field CSV (r,value)")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, help="seed for synthetic profiles")
    ap.add_argument("--max-iter", type=int, help="solver iteration cap")
    ap.add_argument("--test", help="oracle test: newton, hls, sobolev or all")
    ap.add_argument("--problem", help="solve: nehari (default) or constraint")
    ap.add_argument("--kernel-cache", help="binary kernel cache file (read if present, else written)")
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    try:
        doc = None
        if args.config:
            try:
                doc = Path(args.config).read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"{args.config}: cannot read config ({exc.strerror})") from None
        cfg = parse_config(doc, vars(args))
        return run_command(args.command, cfg)
    except (ConfigError, DomainError, DataError, UnsupportedParameterError, DegenerateInputError) as exc:
        print(f"choquard: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ChoquardError as exc:
        print(f"choquard: failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
