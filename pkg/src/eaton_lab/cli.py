"""Command-line experiment runner.

    eaton-lab <command> --config run.toml [--seed N] [--out DIR] [--force]

Exit codes: 0 success, 2 a check failed, 3 numerical failure, 4 bad
configuration or refused overwrite.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import dirichlet, kernels, model, recurrence
from .config import ConfigError, RunConfig, load_config
from .dist import SeriesError
from .quadrature import QuadratureError, QuadratureSpec
from .sampling import TableError, substream

EXIT_OK, EXIT_CHECK, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4
COMMANDS = ("validate", "moments", "drift", "simulate", "capacity", "example1", "risk")
STOCHASTIC = {"simulate", "example1", "risk"}


class CheckFailed(Exception):
    pass


# ---------------------------------------------------------------------------
# deterministic output

def fmt(x) -> str:
    return format(float(x), ".17g")


def _json(obj, indent=0) -> str:
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f'{pad}{_json(str(k))}: {_json(v, indent + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + _json(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    s = str(obj)
    import json
    return json.dumps(s)


def dump_json(results, cfg: RunConfig, warnings) -> str:
    return _json({"config_hash": cfg.hash(), "results": results, "warnings": list(warnings)}) + "\n"


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for row in rows:
        wr.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


class Outputs:
    """Collects files and writes them at the end; refuses to overwrite without ``force``."""

    def __init__(self, out_dir: Path, force: bool):
        self.dir, self.force = out_dir, force
        self.files: dict = {}

    def add(self, name, text):
        self.files[name] = text

    def check(self, names):
        if self.force:
            return
        existing = [n for n in names if (self.dir / n).exists()]
        if existing:
            raise ConfigError(f"refusing to overwrite {', '.join(existing)} in {self.dir} (use --force)")

    def write(self):
        self.dir.mkdir(parents=True, exist_ok=True)
        for name, text in self.files.items():
            (self.dir / name).write_text(text, encoding="utf-8")


def _threads():
    env = os.environ.get("EATON_LAB_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError as exc:
        raise ConfigError(f"EATON_LAB_THREADS must be an integer, got {env!r}") from exc


# ---------------------------------------------------------------------------
# commands

def cmd_validate(cfg: RunConfig, out: Outputs):
    warnings, checks = [], {}
    params, weights = cfg.model, cfg.weights
    checks["properness"] = params.properness.value
    checks["sigma_finite_marginal"] = params.sigma_finite_marginal
    if not params.sigma_finite_marginal:
        warnings.append(f"a = 0 with b = {params.b} >= p/2: the marginal is not sigma-finite "
                        "(needs b < p/2 when a = 0)")
        out.add("validate.json", dump_json({"passed": False, "checks": checks}, cfg, warnings))
        return False
    checks["marginal"] = [{"w": w, "value": model.marginal(w, params, cfg.quad)}
                          for w in (1e-3, 1.0, 10.0, 1e3)]
    ok = all(c["value"] > 0 and math.isfinite(c["value"]) for c in checks["marginal"])
    if params.a > 0:
        rep = kernels.assumption_T_check(params, weights, quad=cfg.quad)
        checks["assumption_T"] = {"passed": rep.passed, "lower_bound": rep.lower_bound,
                                  "compact_integrals": [{"lo": lo, "hi": hi, "value": v}
                                                        for (lo, hi), v in rep.compact_integrals],
                                  "violations": rep.violations}
        ok &= rep.passed
    else:
        warnings.append("normaliser check skipped: the moment route needs a > 0")
    v = cfg.validate
    rects = kernels.partition_rectangles(0.0, v.upper, v.partition)
    q = QuadratureSpec(v.rel_tol)
    R = kernels.reduced_eaton_kernel(params)
    T = kernels.weighted_eaton_kernel(params, weights)
    pairs = [("eaton_R", R), ("eaton_T", T)]
    if v.broken_symmetry:
        pairs.append(("eaton_T_with_prior_measure", T.with_measure(R.sym_measure_density)))
    balance = {}
    for name, k in pairs:
        rep = kernels.detailed_balance_check(k, rects, q, report=True)
        passed = rep.max_asymmetry <= v.tolerance and not rep.failures
        balance[name] = {"max_asymmetry": rep.max_asymmetry, "passed": passed,
                         "quadrature_failures": len(rep.failures)}
        ok &= passed
    checks["detailed_balance"] = balance
    out.add("validate.json", dump_json({"passed": bool(ok), "checks": checks}, cfg, warnings))
    return bool(ok)


_LEADING = {1: lambda a: a, 2: lambda a: a * a + 8 * a, 3: lambda a: a ** 3 + 24 * a * a,
            4: lambda a: a ** 4 + 48 * a ** 3}
_SCALE = {1: lambda a: a, 2: lambda a: 1.0, 3: lambda a: 1.0 / a, 4: lambda a: 1.0 / (a * a)}


def cmd_moments(cfg: RunConfig, out: Outputs):
    alphas = np.asarray(cfg.moments.alphas, dtype=float)
    central = kernels.rtilde_central_moments(alphas, cfg.model, 4, cfg.quad)
    from .dist import binomial_shift
    raw = binomial_shift(central, alphas)
    rows = []
    for i, a in enumerate(alphas):
        for k in (1, 2, 3, 4):
            res = raw[i, k] - _LEADING[k](a)
            rows.append((float(a), k, float(raw[i, k]), float(res), float(res * _SCALE[k](a))))
    out.add("moments.csv", csv_text(["alpha", "k", "value", "residual_vs_expansion", "scaled_residual"], rows))
    return True


def _drift_kernel(cfg, name):
    if name == "weighted_eaton":
        return kernels.weighted_eaton_kernel(cfg.model, cfg.weights)
    if name == "lebesgue_image":
        return kernels.lebesgue_image_kernel(cfg.model.p, cfg.weights.d)
    raise ConfigError(f"unknown kernel '{name}'")


def cmd_drift(cfg: RunConfig, out: Outputs):
    d = cfg.drift
    kern = _drift_kernel(cfg, d.kernel)
    grid = np.geomspace(d.lo, d.hi, d.n)
    rep = recurrence.drift_check(kern, grid, quad=cfg.quad, sup_ns=d.sup_ns)
    rows = [(r["alpha"], r["m1"], r["m2"], r["m3"], r["cond1"], r["cond2_slack"]) for r in rep.rows()]
    out.add("drift.csv", csv_text(["alpha", "m1", "m2", "m3", "cond1", "cond2_slack"],
                                  [tuple(float(v) for v in r) for r in rows]))
    hi = min(1e4, grid[-1])
    summary = {
        "ratio_bounded": rep.ratio_bounded(max(10.0, grid[0]), hi),
        "cond1_decreasing": rep.cond1_decreasing(),
        "n0_index": rep.n0, "n0_alpha": rep.n0_alpha,
        "n0_within_limit": rep.n0 is not None and rep.n0_alpha <= d.n0_max,
        "sup_check": {str(n): {"delta": v, "passed": recurrence.sup_condition_passes(v)}
                      for n, v in rep.sup_check.items()},
        "label": "deterministic",
    }
    passed = (summary["ratio_bounded"] and summary["cond1_decreasing"] and summary["n0_within_limit"]
              and all(s["passed"] for s in summary["sup_check"].values()))
    summary["passed"] = bool(passed)
    warns = [f"moment failure at alpha={a}, k={k}: {m}" for a, k, m in rep.failures]
    out.add("drift.json", dump_json(summary, cfg, warns))
    return bool(passed)


def _chain_kernel(cfg):
    c = cfg.chain
    if c.kernel == "weighted_eaton":
        return kernels.weighted_eaton_kernel(cfg.model, cfg.weights), c.init, recurrence.TargetSet(*c.target)
    if c.kernel == "lebesgue_image":
        return (kernels.lebesgue_image_kernel(cfg.model.p, cfg.weights.d), c.init,
                recurrence.TargetSet(*c.target))
    if c.kernel == "lebesgue_T":
        p = cfg.model.p
        init = np.zeros(p)
        init[0] = math.sqrt(c.init)
        return (kernels.fullspace_T_kernel(p, cfg.weights.d), init,
                recurrence.TargetSet.ball(math.sqrt(c.target[1])))
    raise ConfigError(f"unknown chain kernel '{c.kernel}'")


def cmd_simulate(cfg: RunConfig, out: Outputs):
    c = cfg.chain
    kern, init, target = _chain_kernel(cfg)
    conf = recurrence.ChainConfig(cfg.seed, c.n_paths, c.horizon, init, target, c.group_size, c.dump_paths)
    path_csv = None
    if c.dump_paths:
        path_csv = out.dir / ".paths.tmp"
        out.dir.mkdir(parents=True, exist_ok=True)
    stats = recurrence.simulate_chain(kern, conf, threads=_threads(), path_csv=path_csv)
    if path_csv is not None:
        out.add("paths.csv", path_csv.read_text(encoding="utf-8"))
        path_csv.unlink()
    res = stats.to_dict()
    res.update(kernel=kern.name, target=list(c.target))
    out.add("simulate.json", dump_json(res, cfg, ["simulation is a diagnostic, not a proof of recurrence"]))
    return True


def cmd_capacity(cfg: RunConfig, out: Outputs):
    cs = cfg.capacity
    kern = _drift_kernel(cfg, cs.kernel)
    res = dirichlet.capacity_sequence(kern, tuple(cs.D), cs.B_list, cs.n_cells, cfg.quad)
    rows = [(r.truncation_B, r.n_cells, r.value, r.correction_norm, r.normalized) for r in res]
    out.add("capacity.csv", csv_text(["B", "n_cells", "capacity", "correction_norm", "normalized"], rows))
    return True


def cmd_example1(cfg: RunConfig, out: Outputs):
    e, d = cfg.example1, cfg.weights.d
    threads = _threads()

    def one(i_p):
        i, p = i_p
        mean, se = kernels.fullspace_normalizer_mc(p, d, e.n_draws, cfg.seed, 100 + i)
        conf = recurrence.ChainConfig(cfg.seed + 7919 * (i + 1), e.n_paths, e.horizon, np.zeros(p),
                                      recurrence.TargetSet.ball(e.target_radius))
        st = recurrence.simulate_chain(kernels.fullspace_T_kernel(p, d), conf, threads=1)
        exact = 2 * p + d
        return {"p": p, "d": d, "normalizer_mc": mean, "normalizer_se": se, "normalizer_exact": exact,
                "relative_error": abs(mean - exact) / exact, "hitting": st.to_dict()}

    with ThreadPoolExecutor(max_workers=threads) as ex:
        results = list(ex.map(one, enumerate(e.p_list)))
    out.add("example1.json", dump_json(results, cfg, ["hitting statistics are diagnostics"]))
    return True


def cmd_risk(cfg: RunConfig, out: Outputs):
    r = cfg.risk
    p = cfg.model.p
    jobs = [(i, est, tn) for i, (est, tn) in enumerate((e, t) for e in r.estimators for t in r.theta_norms)]
    for _, est, _ in jobs:
        if est not in model.ESTIMATORS:
            raise ConfigError(f"unknown estimator '{est}'")

    def one(job):
        i, est, tn = job
        theta = np.zeros(p)
        theta[0] = tn
        f = model.ESTIMATORS[est](cfg.model) if est != "formal_bayes" else model.FormalBayesEstimator(cfg.model, cfg.quad)
        risk, se = model.mc_risk(f, theta, r.n_rep, substream(cfg.seed, 300 + i))
        return (est, float(tn), risk, se)

    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        rows = list(ex.map(one, jobs))
    out.add("risk.csv", csv_text(["estimator", "theta_norm", "risk", "std_err"], rows))
    return True


_CMDS = {"validate": cmd_validate, "moments": cmd_moments, "drift": cmd_drift,
         "simulate": cmd_simulate, "capacity": cmd_capacity, "example1": cmd_example1,
         "risk": cmd_risk}
_FILES = {"validate": ["validate.json"], "moments": ["moments.csv"], "drift": ["drift.csv", "drift.json"],
          "simulate": ["simulate.json", "paths.csv"], "capacity": ["capacity.csv"],
          "example1": ["example1.json"], "risk": ["risk.csv"]}


def build_parser():
    ap = argparse.ArgumentParser(prog="eaton-lab", description="Eaton-kernel recurrence experiments")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    ap.add_argument("--out", default=None, help="output directory (overrides [output] dir)")
    ap.add_argument("--force", action="store_true", help="overwrite existing outputs")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, output_dir=args.out)
        if args.command in STOCHASTIC and cfg.seed is None:
            raise ConfigError(f"'{args.command}' is stochastic: set seed in the config or pass --seed")
        out = Outputs(Path(cfg.output_dir), args.force)
        out.check(_FILES[args.command])
        ok = _CMDS[args.command](cfg, out)
        out.write()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuadratureError, SeriesError, TableError, dirichlet.CapacityError,
            dirichlet.DiscretizationError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except model.MarginalDivergenceError as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not ok:
        print(f"{args.command}: checks failed (see {cfg.output_dir})", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
