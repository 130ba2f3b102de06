"""Command line front end: ``quadgrad <scenario> --config FILE [--out DIR] [--seed N]``.

Exit codes: 0 success, 1 usage, 2 validation, 3 solver, 4 assertion.
Artifacts are deterministic for a given config and seed; wall time goes
to stdout only.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from . import __version__
from . import timemap as tm
from .branch import (Branch, ContinuationConfig, continue_lambda, find_second_solution,
                     first_solution, sweep_k, sweep_nonexistence_a)
from .eigen import coercivity_check, gamma1, nu1, nu_tilde1, xi1
from .errors import (CertificateError, ClassificationError, ConvergenceError, DefinitenessError,
                     DomainError, GridMismatchError, InputError, QuadgradError,
                     SingularOperatorError, TransformRangeError, UnboundedOrbitError)
from .grid import Grid, Interval, Rectangle, format_float, read_grid_function, write_grid_function
from .problem import ProblemSpec
from .solve import (SolverConfig, construct_lower_solution, construct_negative_upper_solution,
                    construct_upper_solution_P0, multistart_family, solve, solve_multistart)

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_SOLVER, EXIT_ASSERTION = 0, 1, 2, 3, 4
SCENARIOS = ("eigen", "solve", "branch", "timemap", "verify_suite")
FIXTURE_DIR = Path(__file__).parent / "fixtures"

SOLVER_ERRORS = (ConvergenceError, SingularOperatorError, DefinitenessError, CertificateError,
                 ClassificationError, UnboundedOrbitError, DomainError, TransformRangeError)


class ConfigError(QuadgradError, ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, message: str, field: Optional[str] = None):
        super().__init__(message)
        self.field = field


class UsageError(QuadgradError):
    pass


# ----------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    scenario: str
    problem: Optional[dict]
    params: dict
    tolerances: dict
    output_dir: str
    seed: int
    base_dir: Path = field(default=Path("."), compare=False)

    def echo(self) -> dict:
        """Validated config with defaults; output_dir is left out so reports do not
        depend on where they were written."""
        return {"scenario": self.scenario, "problem": self.problem, "params": self.params,
                "tolerances": self.tolerances, "seed": self.seed}


def _keys(obj, where: str, allowed, required=()) -> dict:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object", where)
    for k in obj:
        if k not in allowed:
            raise ConfigError(f"unknown key {k!r} in {where}", f"{where}.{k}")
    for k in required:
        if k not in obj:
            raise ConfigError(f"missing required key {k!r} in {where}", f"{where}.{k}")
    return obj


def _num(value, name: str, *, positive=False, nonneg=False, integer=False, minimum=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}", name)
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite", name)
    if integer and int(value) != value:
        raise ConfigError(f"{name} must be an integer, got {value!r}", name)
    if positive and not value > 0:
        raise ConfigError(f"{name} must be positive, got {value!r}", name)
    if nonneg and value < 0:
        raise ConfigError(f"{name} must be nonnegative, got {value!r}", name)
    if minimum is not None and value < minimum:
        raise ConfigError(f"{name} must be at least {minimum}, got {value!r}", name)
    return int(value) if integer else float(value)


def _choice(value, name: str, options):
    if value not in options:
        raise ConfigError(f"{name} must be one of {sorted(options)}, got {value!r}", name)
    return value


def _bool(value, name: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{name} must be true or false", name)
    return value


def _ref(value, name: str, refs):
    """A number, or {"<eigenvalue>": factor} for a multiple of a computed eigenvalue."""
    if isinstance(value, dict):
        if len(value) != 1:
            raise ConfigError(f"{name} must have exactly one key from {sorted(refs)}", name)
        (k, f), = value.items()
        _choice(k, f"{name} key", refs)
        return {k: _num(f, f"{name}.{k}")}
    return _num(value, name)


def _field(value, name: str, *, nonneg=False, positive=False, extra=()):
    if isinstance(value, dict):
        _keys(value, name, ("csv",) + tuple(extra), ("csv",))
        if not isinstance(value["csv"], str):
            raise ConfigError(f"{name}.csv must be a path string", f"{name}.csv")
        return dict(value)
    return _num(value, name, nonneg=nonneg, positive=positive)


def _problem(obj) -> dict:
    _keys(obj, "problem", ("domain", "n", "c", "h", "mu"), ("domain", "n"))
    dom = obj["domain"]
    if not isinstance(dom, dict):
        raise ConfigError("problem.domain must be a JSON object", "problem.domain")
    kind = _choice(dom.get("type"), "problem.domain.type", ("interval", "rectangle"))
    if kind == "interval":
        _keys(dom, "problem.domain", ("type", "T"), ("T",))
        domain = {"type": "interval", "T": _num(dom["T"], "problem.domain.T", positive=True)}
    else:
        _keys(dom, "problem.domain", ("type", "lx", "ly"), ("lx", "ly"))
        domain = {"type": "rectangle", "lx": _num(dom["lx"], "problem.domain.lx", positive=True),
                  "ly": _num(dom["ly"], "problem.domain.ly", positive=True)}
    out = {"domain": domain, "n": _num(obj["n"], "problem.n", integer=True, minimum=3)}
    out["c"] = _field(obj.get("c", 1.0), "problem.c", nonneg=True)
    out["h"] = _field(obj.get("h", 0.0), "problem.h")
    out["mu"] = _field(obj.get("mu", 1.0), "problem.mu", positive=True, extra=("mu1", "mu2"))
    if isinstance(out["mu"], dict):
        for k in ("mu1", "mu2"):
            if k in out["mu"]:
                out["mu"][k] = _num(out["mu"][k], f"problem.mu.{k}", positive=True)
    return out


EXPECT_KEYS = {
    "eigen": ("value", "rel_tol"),
    "solve": ("converged", "solutions", "second", "ordered"),
    "branch": ("terminated_by", "fold_below_gamma1", "fold_above_gamma1", "min_decreasing",
               "crosses_zero_at_gamma1"),
    "timemap": ("counts", "min_turns"),
    "verify_suite": (),
}

PARAM_KEYS = {
    "eigen": ("operator", "expect"),
    "solve": ("lambda", "formulation", "start", "start_file", "second", "multistart", "n_random",
              "expect"),
    "branch": ("family", "lambda", "start", "end", "seed", "stop_at_fold", "figure", "expect"),
    "timemap": ("lambda", "mu", "h", "c", "T", "s_lo", "s_hi", "n_samples", "n_steps", "spacing",
                "a_lo", "a_hi", "n_a", "expect"),
    "verify_suite": ("checks",),
}

TOLERANCE_KEYS = ("tol", "step_tol", "max_iters", "monotone_max_iters", "min_distance", "scheme",
                  "fold_tol", "blowup_guard")

EIGEN_REFS = ("gamma1", "nu1")


def _params(scenario: str, obj) -> dict:
    where = "params"
    _keys(obj, where, PARAM_KEYS[scenario])
    p = dict(obj)
    if "expect" in p:
        _keys(p["expect"], "params.expect", EXPECT_KEYS[scenario])
    if scenario == "eigen":
        p["operator"] = _choice(p.get("operator", "gamma1"), "params.operator",
                                ("gamma1", "nu1", "nu_tilde1", "xi1", "coercivity"))
    elif scenario == "solve":
        _keys(p, where, PARAM_KEYS[scenario], ("lambda",))
        p["lambda"] = _ref(p["lambda"], "params.lambda", EIGEN_REFS)
        p["formulation"] = _choice(p.get("formulation", "direct"), "params.formulation",
                                   ("direct", "transformed"))
        p["start"] = _choice(p.get("start", "zero"), "params.start",
                             ("zero", "lower", "upper", "file"))
        if p["start"] == "file" and not isinstance(p.get("start_file"), str):
            raise ConfigError("params.start_file is required with start = file", "params.start_file")
        p["second"] = _bool(p.get("second", False), "params.second")
        p["multistart"] = _bool(p.get("multistart", False), "params.multistart")
        p["n_random"] = _num(p.get("n_random", 0), "params.n_random", integer=True, nonneg=True)
    elif scenario == "branch":
        p["family"] = _choice(p.get("family", "lambda"), "params.family", ("lambda", "a", "k"))
        if p["family"] != "lambda":
            if "lambda" not in p:
                raise ConfigError(f"params.lambda is required for family {p['family']}",
                                  "params.lambda")
            p["lambda"] = _ref(p["lambda"], "params.lambda", EIGEN_REFS)
        elif "lambda" in p:
            raise ConfigError("params.lambda is not used by family lambda (use start)",
                              "params.lambda")
        if "start" in p:
            p["start"] = _ref(p["start"], "params.start", EIGEN_REFS)
        if "end" in p:
            p["end"] = _ref(p["end"], "params.end", EIGEN_REFS)
        p["seed"] = _choice(p.get("seed", "first"), "params.seed",
                            ("first", "second", "zero", "negative"))
        p["stop_at_fold"] = _bool(p.get("stop_at_fold", True), "params.stop_at_fold")
        p["figure"] = _choice(p.get("figure", "single"), "params.figure", ("single", "cash0"))
    elif scenario == "timemap":
        _keys(p, where, PARAM_KEYS[scenario], ("lambda", "h", "T"))
        p["lambda"] = _num(p["lambda"], "params.lambda", nonneg=True)
        p["mu"] = _num(p.get("mu", 1.0), "params.mu", positive=True)
        p["h"] = _num(p["h"], "params.h")
        p["c"] = _num(p.get("c", 1.0), "params.c", positive=True)
        p["T"] = _ref(p["T"], "params.T", ("T0", "T1"))
        if not isinstance(p["T"], dict) and not p["T"] > 0:
            raise ConfigError("params.T must be positive", "params.T")
        p["s_lo"] = _num(p.get("s_lo", -1e3), "params.s_lo")
        p["s_hi"] = _num(p.get("s_hi", 1e3), "params.s_hi")
        if not p["s_lo"] < p["s_hi"]:
            raise ConfigError("params.s_lo must be below params.s_hi", "params.s_lo")
        p["n_samples"] = _num(p.get("n_samples", 2001), "params.n_samples", integer=True, minimum=2)
        p["n_steps"] = _num(p.get("n_steps", 10_000), "params.n_steps", integer=True, minimum=10)
        p["spacing"] = _choice(p.get("spacing", "asinh"), "params.spacing", ("asinh", "linear"))
        p["a_lo"] = _num(p.get("a_lo", 1e-4), "params.a_lo", positive=True)
        p["a_hi"] = _num(p.get("a_hi", 1e4), "params.a_hi", positive=True)
        p["n_a"] = _num(p.get("n_a", 161), "params.n_a", integer=True, minimum=2)
        exp = p.get("expect", {})
        if "counts" in exp:
            _keys(exp["counts"], "params.expect.counts",
                  ("positive", "negative", "sign_changing", "trivial", "total"))
    elif scenario == "verify_suite":
        from .scenarios import CHECKS
        checks = p.get("checks", list(CHECKS))
        if not isinstance(checks, list) or not checks:
            raise ConfigError("params.checks must be a non-empty list", "params.checks")
        for i, c in enumerate(checks):
            _choice(c, f"params.checks[{i}]", tuple(CHECKS))
        p["checks"] = checks
    return p


def _tolerances(obj) -> dict:
    _keys(obj, "tolerances", TOLERANCE_KEYS)
    out = {}
    for k, v in obj.items():
        name = f"tolerances.{k}"
        if k == "scheme":
            out[k] = _choice(v, name, ("fitted", "central"))
        elif k in ("max_iters", "monotone_max_iters"):
            out[k] = _num(v, name, integer=True, minimum=1)
        else:
            out[k] = _num(v, name, positive=True)
    return out


def validate_config(raw, base_dir: Path = Path(".")) -> RunConfig:
    _keys(raw, "config", ("scenario", "problem", "params", "tolerances", "output_dir", "seed"),
          ("scenario",))
    scenario = _choice(raw["scenario"], "scenario", SCENARIOS)
    problem = None
    if scenario in ("eigen", "solve", "branch"):
        if "problem" not in raw:
            raise ConfigError(f"scenario {scenario} needs a problem", "problem")
        problem = _problem(raw["problem"])
    elif "problem" in raw:
        raise ConfigError(f"scenario {scenario} takes no problem", "problem")
    params = _params(scenario, raw.get("params", {}))
    tolerances = _tolerances(raw.get("tolerances", {}))
    out = raw.get("output_dir", "quadgrad-out")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir must be a non-empty string", "output_dir")
    seed = _num(raw.get("seed", 0), "seed", integer=True, nonneg=True)
    cfg = RunConfig(scenario, problem, params, tolerances, out, seed, base_dir)
    for path in _referenced_paths(cfg):
        if not path.is_file():
            raise ConfigError(f"referenced file not found: {path}", "path")
    return cfg


def _referenced_paths(cfg: RunConfig) -> List[Path]:
    paths = []
    if cfg.problem:
        for k in ("c", "h", "mu"):
            if isinstance(cfg.problem[k], dict):
                paths.append(cfg.base_dir / cfg.problem[k]["csv"])
    if cfg.scenario == "solve" and cfg.params["start"] == "file":
        paths.append(cfg.base_dir / cfg.params["start_file"])
    return paths


def parse_config(path) -> RunConfig:
    """Read and validate a JSON run configuration.

    Malformed JSON raises ConfigError with the line number; every other
    problem raises ConfigError naming the offending field.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}",
                          "json") from exc
    return validate_config(raw, path.parent)


def fixture_path(name: str) -> Path:
    path = FIXTURE_DIR / f"{name}.json"
    if not path.is_file():
        known = sorted(p.stem for p in FIXTURE_DIR.glob("*.json"))
        raise UsageError(f"unknown fixture {name!r}; available: {', '.join(known)}")
    return path


# ----------------------------------------------------------------------------
# building blocks


def build_problem(cfg: RunConfig) -> ProblemSpec:
    p = cfg.problem
    dom = p["domain"]
    domain = Interval(dom["T"]) if dom["type"] == "interval" else Rectangle(dom["lx"], dom["ly"])
    grid = Grid(domain, p["n"])

    def load(value):
        if isinstance(value, dict):
            return read_grid_function(grid, cfg.base_dir / value["csv"])
        return value

    mu = p["mu"]
    if isinstance(mu, dict):
        return ProblemSpec(grid, load(p["c"]), load(p["h"]), load(mu), mu.get("mu1"), mu.get("mu2"))
    return ProblemSpec(grid, load(p["c"]), load(p["h"]), mu)


def solver_config(cfg: RunConfig) -> SolverConfig:
    keys = ("tol", "step_tol", "max_iters", "monotone_max_iters", "min_distance", "scheme")
    return SolverConfig(**{k: v for k, v in cfg.tolerances.items() if k in keys})


def continuation_config(cfg: RunConfig, stop_at_fold: bool = True) -> ContinuationConfig:
    base = ContinuationConfig()
    solver = replace(base.solver, **{k: v for k, v in cfg.tolerances.items()
                                     if k in ("tol", "step_tol", "max_iters", "scheme")})
    extra = {k: cfg.tolerances[k] for k in ("fold_tol", "blowup_guard") if k in cfg.tolerances}
    return replace(base, solver=solver, stop_at_fold=stop_at_fold, **extra)


def resolve(value, problem: ProblemSpec) -> float:
    if not isinstance(value, dict):
        return float(value)
    (k, f), = value.items()
    base = gamma1(problem).value if k == "gamma1" else nu1(problem).value
    return f * base


def _clean(x):
    """JSON-safe copy: non-finite floats become null, numpy scalars become Python ones."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    return x


def write_json(path: Path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def signed_sup(point) -> float:
    return point.max_val if abs(point.max_val) >= abs(point.min_val) else point.min_val


def emit_figures_data(branch: Branch, path) -> None:
    """Figure data ``param,signed_sup`` up to and including the fold point.

    signed_sup is max u when |max u| >= |min u| and min u otherwise, so
    branches of either sign read off one column.
    """
    points = branch.points
    cut = next((i for i, p in enumerate(points) if p.fold_flag), None)
    if cut is not None:
        points = points[:cut + 1]
    with open(path, "w", newline="") as fh:
        fh.write("param,signed_sup\n")
        for p in points:
            fh.write(f"{format_float(p.param)},{format_float(signed_sup(p))}\n")


class Outcomes:
    def __init__(self):
        self.items: List[dict] = []

    def check(self, name: str, expected, observed, passed: bool) -> None:
        self.items.append({"assertion": name, "expected": expected, "observed": observed,
                           "passed": bool(passed)})

    @property
    def passed(self) -> bool:
        return all(i["passed"] for i in self.items)


# ----------------------------------------------------------------------------
# scenarios


def run_eigen(cfg: RunConfig, out: Path, outcomes: Outcomes) -> dict:
    problem = build_problem(cfg)
    op = cfg.params["operator"]
    if op == "coercivity":
        res = coercivity_check(problem)
        summary = {"operator": op, "coercive": res.coercive, "margin": res.margin,
                   "value": res.margin, "n": problem.grid.n}
    else:
        fn = {"gamma1": gamma1, "nu1": nu1, "nu_tilde1": nu_tilde1, "xi1": xi1}[op]
        pair = fn(problem)
        write_grid_function(problem.grid, pair.function, out / "eigenfunction.csv")
        summary = {"operator": op, "value": pair.value, "residual": pair.residual,
                   "n": problem.grid.n}
    write_json(out / "eigen.json", summary)
    exp = cfg.params.get("expect", {})
    if "value" in exp:
        tol = exp.get("rel_tol", 1e-3)
        rel = abs(summary["value"] - exp["value"]) / max(abs(exp["value"]), 1e-300)
        outcomes.check("value", exp["value"], summary["value"], rel <= tol)
    return summary


def _upper_start(problem: ProblemSpec, lam: float, scheme: str) -> np.ndarray:
    if lam == 0 and problem.constant_mu:
        beta = construct_upper_solution_P0(problem, scheme)
        if beta is not None:
            return beta
    if np.all(problem.h <= 0):
        return np.zeros(problem.grid.size)
    neg = construct_negative_upper_solution(problem, lam, scheme=scheme)
    if neg is not None and neg.k == 1.0:
        return neg.beta
    raise CertificateError(f"no upper solution available at lambda={lam:.6g}")


def _start(cfg: RunConfig, problem: ProblemSpec, lam: float, scfg: SolverConfig) -> np.ndarray:
    kind = cfg.params["start"]
    if kind == "zero":
        return np.zeros(problem.grid.size)
    if kind == "lower":
        return construct_lower_solution(problem, lam, scfg.scheme, scfg)
    if kind == "upper":
        return _upper_start(problem, lam, scfg.scheme)
    return read_grid_function(problem.grid, cfg.base_dir / cfg.params["start_file"])


def run_solve(cfg: RunConfig, out: Path, outcomes: Outcomes) -> dict:
    problem = build_problem(cfg)
    p = cfg.params
    scfg = solver_config(cfg)
    lam = resolve(p["lambda"], problem)
    form = p["formulation"]
    u0 = _start(cfg, problem, lam, scfg)
    exp = p.get("expect", {})
    summary: Dict[str, Any] = {"lambda": lam, "start": p["start"], "formulation": form}
    if p["multistart"]:
        starts = multistart_family(problem, lam, extra=[u0], n_random=p["n_random"], seed=cfg.seed)
        found = solve_multistart(problem, lam, starts, scfg, form)
        summary.update({"starts": len(starts), "solutions": len(found),
                        "reports": [r.summary() for r in found]})
        converged = bool(found)
        for i, rep in enumerate(found):
            write_grid_function(problem.grid, rep.solution, out / f"solution_{i}.csv")
        if "solutions" in exp:
            outcomes.check("solutions", exp["solutions"], len(found), len(found) == exp["solutions"])
    else:
        rep = solve(problem, lam, u0, scfg, form)
        converged = rep.converged
        summary["report"] = rep.summary()
        write_grid_function(problem.grid, rep.solution, out / "solution.csv")
        if p["second"] and converged:
            sec = find_second_solution(problem, lam, rep.solution, scfg,
                                       n_random=p["n_random"], seed=cfg.seed)
            summary["second"] = sec.summary()
            if sec.converged:
                cert = sec.info["certificate"]
                summary["certificate"] = {"epsilon": cert.epsilon,
                                          "max_violation": cert.max_violation,
                                          "holds": cert.holds}
                write_grid_function(problem.grid, sec.solution, out / "second.csv")
            if "second" in exp:
                outcomes.check("second", exp["second"], sec.converged,
                               sec.converged == exp["second"])
            if "ordered" in exp:
                holds = bool(sec.converged and sec.info["certificate"].holds)
                outcomes.check("ordered", exp["ordered"], holds, holds == exp["ordered"])
    summary["converged"] = converged
    if "converged" in exp:
        outcomes.check("converged", exp["converged"], converged, converged == exp["converged"])
    if not (converged or exp):
        summary["solver_failure"] = True
    write_json(out / "solve.json", summary)
    return summary


def _negative_seed(problem, lam, scfg):
    found = solve_multistart(problem, lam, multistart_family(problem, lam), scfg, "direct")
    neg = [r for r in found if np.max(r.solution) <= 0]
    if not neg:
        raise ConvergenceError(f"no nonpositive solution found at lambda={lam:.6g}")
    return min(neg, key=lambda r: float(np.mean(r.solution))).solution


def _lambda_seed(problem, lam, kind, scfg):
    if kind == "zero":
        return np.zeros(problem.grid.size)
    if kind == "negative":
        return _negative_seed(problem, lam, scfg)
    upper = None
    if lam == 0 and problem.constant_mu:
        upper = construct_upper_solution_P0(problem, scfg.scheme)
    elif np.all(problem.h <= 0):
        upper = np.zeros(problem.grid.size)
    first = first_solution(problem, lam, scfg, upper=upper)
    if not first.converged:
        raise ConvergenceError(f"no starting solution at lambda={lam:.6g}: {first.message}")
    if kind == "first":
        return first.solution
    sec = find_second_solution(problem, lam, first.solution, scfg)
    if not sec.converged:
        raise ConvergenceError(f"no second solution at lambda={lam:.6g}: {sec.message}")
    return sec.solution


def run_branch(cfg: RunConfig, out: Path, outcomes: Outcomes) -> dict:
    problem = build_problem(cfg)
    p = cfg.params
    ccfg = continuation_config(cfg, p["stop_at_fold"])
    g1 = gamma1(problem).value
    fam = p["family"]
    summary: Dict[str, Any] = {"gamma1": g1}
    if fam == "lambda":
        start = resolve(p.get("start", 0.0), problem)
        end = resolve(p["end"], problem) if "end" in p else start + 2.0 * g1
        seed = _lambda_seed(problem, start, p["seed"], ccfg.solver)
        br = continue_lambda(problem, start, seed, 1.0 if end > start else -1.0, ccfg,
                             lambda_end=end)
    elif fam == "a":
        lam = resolve(p["lambda"], problem)
        end = resolve(p["end"], problem) if "end" in p else None
        br = sweep_nonexistence_a(problem, lam, ccfg, a_max=end).branch
        summary["lambda"] = lam
    else:
        lam = resolve(p["lambda"], problem)
        end = resolve(p["end"], problem) if "end" in p else None
        sw = sweep_k(problem, lam, ccfg, k_max=end)
        br = sw.lower_branch
        summary.update({"lambda": lam, "k_start": sw.k_start})
    summary.update(br.summary())
    br.write_csv(out / "branch.csv")
    br.write_summary(out / "branch.json")
    if p["figure"] == "cash0":
        zero = continue_lambda(problem, 0.0, np.zeros(problem.grid.size), 1.0, ccfg,
                               lambda_end=max(2.0 * g1, br.params.max() if br.points else 0.0))
        emit_figures_data(zero, out / "figure_zero.csv")
        emit_figures_data(br, out / "figure_signed.csv")
        summary["zero_branch"] = zero.summary()
    else:
        emit_figures_data(br, out / "figure.csv")

    exp = p.get("expect", {})
    fold = None if br.fold is None else br.fold.param_estimate
    if "terminated_by" in exp:
        outcomes.check("terminated_by", exp["terminated_by"], br.terminated_by,
                       br.terminated_by == exp["terminated_by"])
    if "fold_below_gamma1" in exp:
        ok = fold is not None and 0 < fold < g1
        outcomes.check("fold_below_gamma1", exp["fold_below_gamma1"], fold, ok == exp["fold_below_gamma1"])
    if "fold_above_gamma1" in exp:
        ok = fold is not None and fold > g1
        outcomes.check("fold_above_gamma1", exp["fold_above_gamma1"], fold, ok == exp["fold_above_gamma1"])
    if "min_decreasing" in exp:
        mins = [q.min_val for q in br.points]
        ok = len(mins) > 1 and all(b < a for a, b in zip(mins, mins[1:]))
        outcomes.check("min_decreasing", exp["min_decreasing"], ok, ok == exp["min_decreasing"])
    if "crosses_zero_at_gamma1" in exp:
        pts = br.points
        ok = any(a.param <= g1 <= b.param and signed_sup(a) > 0 > signed_sup(b)
                 for a, b in zip(pts, pts[1:]))
        outcomes.check("crosses_zero_at_gamma1", exp["crosses_zero_at_gamma1"], ok,
                       ok == exp["crosses_zero_at_gamma1"])
    if br.terminated_by == "solver_failure" and "terminated_by" not in exp:
        summary["solver_failure"] = True
    write_json(out / "summary.json", summary)
    return summary


def run_timemap(cfg: RunConfig, out: Path, outcomes: Outcomes) -> dict:
    p = cfg.params
    params = tm.PhaseParams(lam=p["lambda"], mu=p["mu"], h=p["h"], c=p["c"])
    kind = tm.case_classify(params)
    summary: Dict[str, Any] = {"case": kind, "lambda": p["lambda"], "c": p["c"], "lc": params.lc,
                               "mu": p["mu"], "h": p["h"], "T0": None, "T1": None}
    table = None
    try:
        table = tm.time_map_table(params, p["a_lo"], p["a_hi"], p["n_a"])
    except (UnboundedOrbitError, ClassificationError) as exc:
        summary["table_error"] = str(exc)
    if kind == "Case1" and table is not None:
        summary["T0"] = tm.find_T0(params, table=table)
    if kind == "Case3" and params.lc > 0:
        summary["T1"] = tm.find_T1(params)
    if table is not None:
        table.write_csv(out / "timemap_table.csv")
    T = p["T"]
    if isinstance(T, dict):
        (ref, f), = T.items()
        if summary[ref] is None:
            raise ClassificationError(f"{ref} is not defined for {kind}")
        T = f * summary[ref]
    summary["T"] = T
    results = tm.count_solutions(params.with_T(T), p["s_lo"], p["s_hi"], p["n_samples"],
                                 n_steps=p["n_steps"], spacing=p["spacing"])
    tm.write_solutions_csv(results, out / "solutions.csv")
    counts = {"positive": 0, "negative": 0, "sign_changing": 0, "trivial": 0}
    for r in results:
        counts[r.classification] += 1
    counts["total"] = len(results)
    summary["counts"] = counts
    summary["max_turns"] = max((r.turns for r in results), default=0)
    summary["resolution_limited"] = sum(r.resolution_limited for r in results)
    write_json(out / "timemap.json", summary)
    exp = p.get("expect", {})
    for k, v in exp.get("counts", {}).items():
        outcomes.check(f"counts.{k}", v, counts[k], counts[k] == v)
    if "min_turns" in exp:
        outcomes.check("min_turns", exp["min_turns"], summary["max_turns"],
                       summary["max_turns"] >= exp["min_turns"])
    return summary


def run_verify_suite(cfg: RunConfig, out: Path, outcomes: Outcomes) -> dict:
    from .scenarios import run_check
    records = []
    for name in cfg.params["checks"]:
        chk = run_check(name)
        print(f"{chk.line()}  ({chk.seconds:.1f} s)")
        records.append(chk.record())
        outcomes.check(name, True, chk.passed, chk.passed)
    write_json(out / "verify_suite.json", {"checks": records})
    return {"checks": len(records), "passed": sum(r["passed"] for r in records)}


RUNNERS = {"eigen": run_eigen, "solve": run_solve, "branch": run_branch,
           "timemap": run_timemap, "verify_suite": run_verify_suite}


@dataclass
class RunReport:
    config: dict
    version: str
    summary: dict
    outcomes: List[dict]
    exit_code: int
    wall_time: float = 0.0

    def record(self) -> dict:
        return {"config": self.config, "version": self.version, "summary": self.summary,
                "outcomes": self.outcomes, "exit_code": self.exit_code}


def run(cfg: RunConfig) -> RunReport:
    """Dispatch to the scenario runner and write artifacts plus report.json."""
    t0 = time.perf_counter()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    outcomes = Outcomes()
    summary = RUNNERS[cfg.scenario](cfg, out, outcomes)
    if not outcomes.passed:
        code = EXIT_ASSERTION
    elif summary.get("solver_failure"):
        code = EXIT_SOLVER
    else:
        code = EXIT_OK
    report = RunReport(cfg.echo(), f"quadgrad {__version__}", summary, outcomes.items, code)
    write_json(out / "report.json", report.record())
    report.wall_time = time.perf_counter() - t0
    return report


# ----------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="quadgrad", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"quadgrad {__version__}")
    sub = parser.add_subparsers(dest="scenario", required=True, parser_class=_Parser)
    for name in SCENARIOS:
        sp = sub.add_parser(name, help=f"run the {name} scenario")
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="JSON run configuration")
        src.add_argument("--fixture", help="name of a packaged fixture (e.g. thm1)")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--seed", type=int, help="seed for random multistarts")
        if name == "solve":
            sp.add_argument("--lambda", dest="lam", type=float, help="override params.lambda")
            sp.add_argument("--formulation", choices=("direct", "transformed"))
            sp.add_argument("--start", choices=("zero", "lower", "upper", "file"))
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    params = dict(cfg.params)
    if args.scenario == "solve":
        if args.lam is not None:
            params["lambda"] = args.lam
        if args.formulation:
            params["formulation"] = args.formulation
        if args.start:
            if args.start == "file" and not isinstance(params.get("start_file"), str):
                raise ConfigError("--start file needs params.start_file in the config",
                                  "params.start_file")
            params["start"] = args.start
    seed = cfg.seed
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative", "seed")
        seed = args.seed
    return replace(cfg, params=params, seed=seed,
                   output_dir=args.out if args.out else cfg.output_dir)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        path = Path(args.config) if args.config else fixture_path(args.fixture)
        cfg = parse_config(path)
        if cfg.scenario != args.scenario:
            raise ConfigError(f"config is for scenario {cfg.scenario!r}, not {args.scenario!r}",
                              "scenario")
        cfg = _apply_overrides(cfg, args)
        report = run(cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, InputError, GridMismatchError) as exc:
        where = getattr(exc, "field", None)
        print(f"validation error{f' [{where}]' if where else ''}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SOLVER_ERRORS as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    for item in report.outcomes:
        status = "ok" if item["passed"] else "FAILED"
        print(f"assert {item['assertion']}: expected {item['expected']!r}, "
              f"observed {item['observed']!r} ... {status}")
    print(f"{cfg.scenario}: exit {report.exit_code}; artifacts in {cfg.output_dir}")
    print(f"wall time {report.wall_time:.2f} s")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
