"""Config-driven experiment runner.

One binary with subcommands mapping to the pipeline stages: check-basis,
estimate, sparsify, dominate, verify, and all. Configuration is JSON with a
closed schema (unknown keys exit 2); every run regenerates byte-identical
reports from (config, seed).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings

import numpy as np

from .errors import BallBasisError, ConfigError
from .space import build_dyadic, build_grid, check_axioms
from .functional import Params, VecFunction, maximal
from .operators import (OperatorDescriptor, conditional_expectation,
                        discrete_hilbert, dyadic_levels, estimate_bo_constants,
                        identity_operator, martingale_transform,
                        maximal_modulation, riesz_potential, sparse_operator,
                        square_function, zero_operator)
from .sparsify import sparsify_tree
from .domination import dominate_bo, dominate_mean_osc, lerner_decompose
from .verify import (CaseRow, Corpus, Report, Weight, _clean,
                     ap_characteristics, bmo_bounded_report, exp_decay_report,
                     good_lambda_report, john_nirenberg_report,
                     strong_domination_check, weak_type_report)


# -- configuration ------------------------------------------------------------------


_TOP_KEYS = {"basis", "seed", "out", "operators", "corpus", "estimate",
             "sparsify", "dominate", "mean_osc", "verify"}
_OP_KEYS = {
    "martingale_transform": {"kind", "name", "eps_seed"},
    "square_function": {"kind", "name"},
    "conditional_expectation": {"kind", "name", "level"},
    "ek_maximal": {"kind", "name"},
    "discrete_hilbert": {"kind", "name"},
    "riesz_potential": {"kind", "name", "alpha"},
    "identity": {"kind", "name"},
    "zero": {"kind", "name"},
    "sparse": {"kind", "name", "seed", "count", "rho"},
}

_DEFAULTS = {
    "seed": 0,
    "out": "reports",
    "operators": [],
    "corpus": {"generators": ["random_signs", "haar_mixtures"], "size": 8},
    "estimate": {"budget": 8},
    "sparsify": {"alpha": 0.002, "families": 5},
    "dominate": {"cases": 3, "ball": "full"},
    "mean_osc": {"beta": 0.75, "cases": 3, "enabled": True},
    "verify": {"suites": ["weak_type", "good_lambda", "exp_decay",
                          "john_nirenberg", "bmo", "strong_domination", "ap"],
               "thresholds": {}, "weight": {"kind": "unit"}, "p": 2.0},
}


def _check_keys(section: str, given: dict, allowed: set):
    extra = set(given) - allowed
    if extra:
        raise ConfigError(f"unknown keys in {section}: {sorted(extra)}")


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be an object")
    _check_keys("config", raw, _TOP_KEYS)
    if "basis" not in raw:
        raise ConfigError("config needs a 'basis' section")
    _check_keys("basis", raw["basis"], {"kind", "size"})
    if raw["basis"].get("kind") not in ("dyadic", "grid"):
        raise ConfigError("basis.kind must be 'dyadic' or 'grid'")

    cfg = {}
    for key, default in _DEFAULTS.items():
        if isinstance(default, dict):
            cfg[key] = dict(default)
            if key in raw:
                _check_keys(key, raw[key], set(default))
                cfg[key].update(raw[key])
        else:
            cfg[key] = raw.get(key, default)
    cfg["basis"] = raw["basis"]
    for spec in cfg["operators"]:
        kind = spec.get("kind")
        if kind not in _OP_KEYS:
            raise ConfigError(f"unknown operator kind {kind!r}")
        _check_keys(f"operator {kind}", spec, _OP_KEYS[kind])
    return cfg


def build_basis(cfg: dict):
    kind = cfg["basis"]["kind"]
    size = int(cfg["basis"]["size"])
    return build_dyadic(size) if kind == "dyadic" else build_grid(size)


def build_operator(spec: dict, basis, seed: int) -> OperatorDescriptor:
    kind = spec["kind"]
    if kind == "martingale_transform":
        rng = np.random.default_rng([seed, int(spec.get("eps_seed", 1))])
        eps = rng.integers(0, 2, size=basis.n_balls) * 2 - 1
        op = martingale_transform(basis, eps)
    elif kind == "square_function":
        op = square_function(basis)
    elif kind == "conditional_expectation":
        op = conditional_expectation(basis, int(spec.get("level", 0)))
    elif kind == "ek_maximal":
        fam = [conditional_expectation(basis, k)
               for k in range(dyadic_levels(basis) + 1)]
        op = maximal_modulation(fam)
    elif kind == "discrete_hilbert":
        op = discrete_hilbert(basis)
    elif kind == "riesz_potential":
        op = riesz_potential(basis, float(spec.get("alpha", 0.5)))
    elif kind == "identity":
        op = identity_operator(basis)
    elif kind == "zero":
        op = zero_operator(basis)
    elif kind == "sparse":
        rng = np.random.default_rng([seed, int(spec.get("seed", 2))])
        count = int(spec.get("count", 8))
        ids = np.sort(rng.choice(basis.n_balls, size=min(count, basis.n_balls),
                                 replace=False))
        op = sparse_operator(basis, ids, float(spec.get("rho", 1.0)))
    else:
        raise ConfigError(f"unknown operator kind {kind!r}")
    if "name" in spec:
        op.name = spec["name"]
    return op


def _full_ball(basis) -> int:
    return int(np.argmax(basis.mu))


def _resolve_ball(spec, basis) -> int:
    if spec == "full":
        return _full_ball(basis)
    return int(spec)


def seeded_function(basis, seed: int, tag: int) -> VecFunction:
    rng = np.random.default_rng([seed, tag])
    return VecFunction(rng.normal(size=(basis.n_atoms, 1)))


def make_f_family(basis, alpha: float, seed: int):
    """Seeded exceptional-set assignment with mu(F_B) < alpha mu(B)."""
    n = basis.n_atoms
    rng = np.random.default_rng([seed, 17])
    noise = rng.random(n)
    w = basis.space.weights

    def f_map(ball_id: int):
        ms = basis.balls[int(ball_id)].members
        order = ms[np.argsort(noise[ms], kind="stable")]
        budget = alpha * basis.mu[int(ball_id)]
        take = []
        acc = 0.0
        for a in order:
            if acc + w[a] >= budget:
                break
            acc += w[a]
            take.append(int(a))
        return np.array(sorted(take), dtype=np.int64)

    return f_map


# -- pipelines ----------------------------------------------------------------------


def run_check_basis(cfg: dict, basis) -> list[Report]:
    rep = check_axioms(basis)
    summary = {"passed": rep.passed, "K": basis.K, "eta": basis.eta,
               "k_min": rep.k_min, "eta_min": rep.eta_min,
               "n_balls": basis.n_balls, "n_atoms": basis.n_atoms}
    rows = [CaseRow("B1", "axiom", 1.0 if rep.b1_pass else 0.0, rep.b1_pass),
            CaseRow("B2", "axiom", 1.0 if rep.b2_pass else 0.0, rep.b2_pass),
            CaseRow("hull", "axiom", 1.0 if rep.hull_valid else 0.0,
                    rep.hull_valid)]
    return [Report("check_basis", rep.passed, summary, rows)]


def run_estimate(cfg: dict, basis, ops) -> list[Report]:
    budget = int(cfg["estimate"]["budget"])
    seed = int(cfg["seed"])
    out = []
    for op in ops:
        c = estimate_bo_constants(op, basis, budget=budget, seed=seed)
        rows = [CaseRow(op.name, "L0", c.L0, True),
                CaseRow(op.name, "L1", c.L1, True),
                CaseRow(op.name, "L2", c.L2, True),
                CaseRow(op.name, "total", c.total, True)]
        summary = {"operator": op.name, "L0": c.L0, "L1": c.L1, "L2": c.L2,
                   "total": c.total, "method": c.method}
        if c.r4_constant is not None:
            summary["R4"] = c.r4_constant
        if c.r5_value is not None:
            summary["R5"] = c.r5_value
        out.append(Report(f"estimate/{op.name}", True, summary, rows))
    return out


def run_sparsify(cfg: dict, basis) -> list[Report]:
    alpha = float(cfg["sparsify"]["alpha"])
    families = int(cfg["sparsify"]["families"])
    seed = int(cfg["seed"])
    a0 = _full_ball(basis)
    out = []
    for i in range(families):
        f_map = make_f_family(basis, alpha, seed + i)
        caught = []
        with warnings.catch_warnings(record=True) as wlog:
            warnings.simplefilter("always")
            try:
                tree = sparsify_tree(basis, f_map, a0, alpha)
                ok = tree.sparseness_certified
                nodes = tree.n_nodes
                err = ""
            except BallBasisError as exc:
                ok, nodes, err = False, 0, str(exc)
            caught = [str(w.message) for w in wlog]
        summary = {"family": i, "alpha": alpha, "nodes": nodes,
                   "warnings": caught}
        if err:
            summary["error"] = err
        out.append(Report(f"sparsify/{i}", ok, summary,
                          [CaseRow(f"family{i}", "nodes", float(nodes), ok)]))
    return out


def run_dominate(cfg: dict, basis, ops) -> list[Report]:
    cases = int(cfg["dominate"]["cases"])
    seed = int(cfg["seed"])
    budget = int(cfg["estimate"]["budget"])
    b_id = _resolve_ball(cfg["dominate"]["ball"], basis)
    members = basis.balls[b_id].members
    out = []
    for op in ops:
        consts = estimate_bo_constants(op, basis, budget=budget, seed=seed)
        rows = []
        ok_all = True
        constants = []
        for i in range(cases):
            rng = np.random.default_rng([seed, 31, i])
            vals = np.zeros((basis.n_atoms, 1))
            vals[members, 0] = rng.normal(size=len(members))
            f = VecFunction(vals)
            try:
                bound = dominate_bo(op, consts, f, b_id, basis)
                c = bound.constant
                ratio = bound.details["enclosing_ratio"]
                rate = bound.details["overlap_rate"]
                ok = ratio <= basis.K ** 3 + 1e-9 and rate > 0
            except BallBasisError:
                c, ratio, rate, ok = math.inf, math.inf, 0.0, False
            ok_all = ok_all and ok
            constants.append(c)
            rows.append(CaseRow(f"case{i}", "constant", c, ok))
            rows.append(CaseRow(f"case{i}", "enclosing_ratio", ratio, ok))
            rows.append(CaseRow(f"case{i}", "overlap_rate", rate, ok))
        summary = {"operator": op.name, "ball": b_id, "cases": cases,
                   "constants": constants,
                   "max_constant": max(constants) if constants else 0.0}
        out.append(Report(f"dominate/{op.name}", ok_all, summary, rows))
    return out


def run_mean_osc(cfg: dict, basis, ops) -> list[Report]:
    if basis.eta is None or not cfg["mean_osc"].get("enabled", True):
        return []
    family = [op for op in ops if op.linear and op.params.classical]
    if not family:
        return []
    beta = float(cfg["mean_osc"]["beta"])
    cases = int(cfg["mean_osc"]["cases"])
    seed = int(cfg["seed"])
    budget = int(cfg["estimate"]["budget"])
    b_id = _full_ball(basis)
    rows = []
    ok_all = True
    constants = []
    for i in range(cases):
        f = seeded_function(basis, seed, 37 + i)
        try:
            bound = dominate_mean_osc(family, f, b_id, basis, beta=beta,
                                      budget=budget, seed=seed)
            c = bound.constant
            ok = True
        except BallBasisError:
            c, ok = math.inf, False
        ok_all = ok_all and ok
        constants.append(c)
        rows.append(CaseRow(f"case{i}", "constant", c, ok))
    summary = {"beta": beta, "ball": b_id, "cases": cases,
               "constants": constants,
               "max_constant": max(constants) if constants else 0.0,
               "family": [op.name for op in family]}
    return [Report("mean_osc", ok_all, summary, rows)]


def _build_weight(spec: dict, basis) -> Weight:
    kind = spec.get("kind", "unit")
    n = basis.n_atoms
    if kind == "unit":
        return Weight(np.ones(n))
    if kind == "half":
        w = np.ones(n)
        w[: n // 2] = float(spec.get("value", 2.0))
        return Weight(w)
    if kind == "power":
        return Weight((1.0 + np.arange(n)) ** float(spec.get("exponent", 0.3)))
    raise ConfigError(f"unknown weight kind {kind!r}")


def run_verify(cfg: dict, basis, ops, suite_filter: str | None = None
               ) -> list[Report]:
    vcfg = cfg["verify"]
    suites = list(vcfg["suites"])
    if suite_filter is not None:
        if suite_filter not in suites:
            raise ConfigError(f"unknown suite {suite_filter!r}")
        suites = [suite_filter]
    seed = int(cfg["seed"])
    corpus = Corpus(seed, cfg["corpus"]["generators"],
                    int(cfg["corpus"]["size"]))
    thr = vcfg["thresholds"]
    budget = int(cfg["estimate"]["budget"])
    b_id = _full_ball(basis)
    out = []

    if "weak_type" in suites:
        for prm in (Params.classical_profile(1.0), Params(1.0, 0.5, 1.0)):
            mx = lambda f, prm=prm: maximal(f, basis, prm)
            rep = weak_type_report(mx, corpus, basis, prm, bound=basis.K)
            rep.name = f"weak_type/maximal_rho{prm.rho:g}"
            out.append(rep)
        for op in ops:
            rep = weak_type_report(op, corpus, basis, op.params,
                                   bound=thr.get("weak_type"))
            rep.name = f"weak_type/{op.name}"
            out.append(rep)

    if "good_lambda" in suites:
        for op in ops:
            consts = estimate_bo_constants(op, basis, budget=budget, seed=seed)
            rep = good_lambda_report(op, consts, corpus, basis,
                                     threshold=thr.get("good_lambda", math.inf))
            rep.name = f"good_lambda/{op.name}"
            out.append(rep)

    if "exp_decay" in suites:
        f = seeded_function(basis, seed, 41)
        for op in ops:
            rep = exp_decay_report(op, f, b_id, basis, "vs_maximal")
            rep.name = f"exp_decay/{op.name}"
            out.append(rep)
        if basis.eta is not None:
            fam = [op for op in ops if op.linear and op.params.classical]
            if fam:
                mm = maximal_modulation(fam)
                rep = exp_decay_report(mm, f, b_id, basis, "vs_sharp")
                rep.name = "exp_decay/modulated_vs_sharp"
                out.append(rep)

    if "john_nirenberg" in suites:
        n = basis.n_atoms
        flog = VecFunction(np.log(float(n) / (np.arange(n) + 1.0))[:, None])
        rep = john_nirenberg_report(flog, basis)
        rep.name = "john_nirenberg/log"
        out.append(rep)

    if "bmo" in suites:
        for op in ops:
            rep = bmo_bounded_report(op, corpus, basis,
                                     threshold=thr.get("bmo", math.inf))
            rep.name = f"bmo/{op.name}"
            out.append(rep)

    if "strong_domination" in suites:
        rng = np.random.default_rng([seed, 43])
        f = VecFunction(np.abs(rng.normal(size=(basis.n_atoms, 1))) + 0.1)
        rep = strong_domination_check(f, f, basis, b_id)
        out.append(rep)

    if "ap" in suites:
        w = _build_weight(vcfg["weight"], basis)
        rep = ap_characteristics(w, basis, float(vcfg["p"]))
        out.append(rep)
    return out


# -- emission -----------------------------------------------------------------------


def emit_report(reports: list[Report], out_dir: str,
                formats=("json", "csv", "text")) -> list[str]:
    """Write the report bundle; identical inputs produce byte-identical files."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "json" in formats:
        doc = {"reports": [json.loads(r.to_json()) for r in reports],
               "passed": all(r.passed for r in reports)}
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            fh.write(json.dumps(doc, indent=1))
            fh.write("\n")
        written.append(path)
    if "csv" in formats:
        path = os.path.join(out_dir, "report.csv")
        with open(path, "w") as fh:
            fh.write("report,case,statistic,value,pass\n")
            for r in reports:
                for line in r.csv_lines()[1:]:
                    fh.write(f"{r.name},{line}\n")
        written.append(path)
        for r in reports:
            tail = r.summary.get("tail")
            if tail:
                safe = r.name.replace("/", "_")
                path = os.path.join(out_dir, f"{safe}_tail.csv")
                with open(path, "w") as fh:
                    fh.write("t,count,fraction\n")
                    for t, c, fr in zip(tail["t"], tail["count"],
                                        tail["fraction"]):
                        fh.write(f"{t},{c},{_clean(float(fr))}\n")
                written.append(path)
    if "text" in formats:
        path = os.path.join(out_dir, "summary.txt")
        with open(path, "w") as fh:
            for r in reports:
                status = "PASS" if r.passed else "FAIL"
                keys = {k: _clean(v) for k, v in r.summary.items()
                        if not isinstance(v, (dict, list))}
                body = " ".join(f"{k}={v}" for k, v in keys.items())
                fh.write(f"{status} {r.name} {body}\n")
            fh.write("PASS\n" if all(r.passed for r in reports) else "FAIL\n")
        written.append(path)
    return written


# -- entry point --------------------------------------------------------------------


_COMMANDS = ("check-basis", "estimate", "sparsify", "dominate", "verify", "all")


def run_experiment(command: str, cfg: dict, suite: str | None = None) -> tuple[list[Report], list[str]]:
    basis = build_basis(cfg)
    ops = [build_operator(spec, basis, int(cfg["seed"]))
           for spec in cfg["operators"]]
    reports: list[Report] = []
    if command in ("check-basis", "all"):
        reports += run_check_basis(cfg, basis)
    if command in ("estimate", "all"):
        reports += run_estimate(cfg, basis, ops)
    if command in ("sparsify", "all"):
        reports += run_sparsify(cfg, basis)
    if command in ("dominate", "all"):
        reports += run_dominate(cfg, basis, ops)
        reports += run_mean_osc(cfg, basis, ops)
    if command in ("verify", "all"):
        reports += run_verify(cfg, basis, ops, suite_filter=suite)
    files = emit_report(reports, cfg["out"])
    return reports, files


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ballbasis",
        description="ball-basis pipelines: axioms, constants, sparse trees, "
                    "domination, and inequality verification")
    parser.add_argument("command", choices=_COMMANDS)
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config (and BALLBASIS_SEED) seed")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--suite", default=None,
                        help="restrict 'verify' to one suite")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker count; affects wall time only")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        env_seed = os.environ.get("BALLBASIS_SEED")
        if env_seed is not None and "seed" not in json.load(open(args.config)):
            cfg["seed"] = int(env_seed)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["out"] = args.out
        reports, files = run_experiment(args.command, cfg, suite=args.suite)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except BallBasisError as exc:
        print(f"check failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

    failed = [r.name for r in reports if not r.passed]
    for path in files:
        print(f"wrote {path}")
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return 1
    print("all checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
