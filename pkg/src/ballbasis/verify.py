"""Empirical inequality harness.

Seeded function corpora plus checks for weak type, good-lambda comparisons,
exponential tail decay, the John-Nirenberg inequality, BMO boundedness,
strong domination, and Muckenhoupt characteristics. Every report regenerates
bit-identically from (seed, configuration).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InfZero, ZeroBmoNorm
from .space import BallBasis
from .functional import (Params, VecFunction, alpha_oscillation, bmo_norm,
                         maximal, median)
from .operators import OperatorDescriptor, truncate
from .domination import fit_exponential_rate


def round_sig(x, digits: int = 12):
    """Round a float through a 12-significant-digit decimal string.

    Reports pass every float through this before serialization so that
    regenerated runs compare byte-identically.
    """
    if isinstance(x, float):
        if math.isfinite(x):
            return float(f"%.{digits}g" % x)
        return x
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return round_sig(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    return obj


@dataclass
class CaseRow:
    case: str
    statistic: str
    value: float
    passed: bool


@dataclass
class Report:
    name: str
    passed: bool
    summary: dict
    rows: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "name": self.name,
            "passed": bool(self.passed),
            "summary": _clean(self.summary),
            "cases": [{"case": r.case, "statistic": r.statistic,
                       "value": _clean(r.value), "pass": bool(r.passed)}
                      for r in self.rows],
        })

    def csv_lines(self) -> list[str]:
        out = ["case,statistic,value,pass"]
        for r in self.rows:
            v = _clean(r.value)
            out.append(f"{r.case},{r.statistic},{v},{str(bool(r.passed)).lower()}")
        return out


# -- corpora ------------------------------------------------------------------------


GENERATOR_KINDS = ("random_signs", "indicators", "delta_combs",
                   "log_samples", "haar_mixtures")
_KIND_CODE = {k: i + 1 for i, k in enumerate(GENERATOR_KINDS)}


def _gen_case(kind: str, seed: int, idx: int, n: int) -> np.ndarray:
    rng = np.random.default_rng([int(seed), _KIND_CODE[kind], int(idx)])
    vals = np.zeros(n)
    if kind == "random_signs":
        vals = rng.integers(0, 2, size=n) * 2.0 - 1.0
    elif kind == "indicators":
        a = int(rng.integers(0, n))
        length = int(rng.integers(1, n - a + 1))
        vals[a:a + length] = 1.0
    elif kind == "delta_combs":
        k = int(rng.integers(1, 9))
        spots = rng.choice(n, size=min(k, n), replace=False)
        vals[spots] = rng.integers(0, 2, size=len(spots)) * 2.0 - 1.0
    elif kind == "log_samples":
        shift = int(rng.integers(0, n))
        idxs = (np.arange(n) + shift) % n
        vals = np.log(float(n) / (idxs + 1.0))
    elif kind == "haar_mixtures":
        m = int(rng.integers(1, 7))
        for _ in range(m):
            a = int(rng.integers(0, n - 1))
            length = int(rng.integers(2, n - a + 1))
            half = length // 2
            c = float(rng.normal())
            vals[a:a + half] += c
            vals[a + half:a + length] -= c
    else:
        raise ConfigError(f"unknown generator kind {kind!r}")
    return vals


@dataclass
class Corpus:
    """Seeded family of test functions; regeneration is bit-identical."""

    seed: int
    generators: list
    size: int

    def __post_init__(self):
        for g in self.generators:
            kind = g if isinstance(g, str) else g.get("kind")
            if kind not in _KIND_CODE:
                raise ConfigError(f"unknown generator kind {kind!r}")

    def cases(self, n_atoms: int):
        """Yield (case_id, VecFunction) pairs in deterministic order."""
        for g in self.generators:
            kind = g if isinstance(g, str) else g["kind"]
            for i in range(self.size):
                vals = _gen_case(kind, self.seed, i, n_atoms)
                yield f"{kind}/{i}", VecFunction(vals[:, None])


@dataclass
class Weight:
    """Strictly positive weight on atoms."""

    w: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if np.any(self.w <= 0):
            raise ConfigError("weights must be strictly positive")


# -- weak type ----------------------------------------------------------------------


def _apply(op, f: VecFunction, basis: BallBasis) -> np.ndarray:
    if hasattr(op, "apply"):
        return op.apply(f).norms()
    return np.asarray(op(f), dtype=float)


def weak_type_report(op, corpus: Corpus, basis: BallBasis, p: Params,
                     bound: float | None = None) -> Report:
    """Sup over lambda of lambda^(1/rho) mu{out > lambda} / (int ||f||^r)^(vrho/rho).

    Lambda is scanned at every distinct positive output value; the sup of the
    left side on each plateau is attained at the value itself (measure of the
    closed superlevel set).
    """
    w = basis.space.weights
    rows = []
    worst = 0.0
    for cid, f in corpus.cases(basis.n_atoms):
        out = _apply(op, f, basis)
        denom = float(np.sum(f.norms() ** p.r * w)) ** (p.varrho / p.rho)
        ratio = 0.0
        if denom > 0:
            for v in np.unique(out):
                if v <= 0:
                    continue
                mass = float(w[out >= v].sum())
                ratio = max(ratio, v ** (1.0 / p.rho) * mass / denom)
        ok = True if bound is None else ratio <= bound
        rows.append(CaseRow(cid, "weak_type_ratio", float(ratio), ok))
        worst = max(worst, ratio)
    passed = all(r.passed for r in rows)
    return Report("weak_type", passed,
                  {"max_ratio": worst, "bound": bound,
                   "r": p.r, "varrho": p.varrho, "rho": p.rho}, rows)


# -- good-lambda --------------------------------------------------------------------


def good_lambda_report(T: OperatorDescriptor, consts, corpus: Corpus,
                       basis: BallBasis, c: float = 0.5,
                       threshold: float = math.inf) -> Report:
    """Compare mu{T*f > lambda, Mf < delta lambda} against mu{||Tf|| > lambda/2}
    with delta = c/(L0 + L1), scanning lambda at distinct T*f values."""
    delta = c / (consts.L0 + consts.L1) if (consts.L0 + consts.L1) > 0 else math.inf
    tstar = truncate(T)
    w = basis.space.weights
    rows = []
    worst = 0.0
    for cid, f in corpus.cases(basis.n_atoms):
        tf = T.apply(f).norms()
        ts = tstar.apply(f).norms()
        mf = maximal(f, basis, T.params)
        ratio = 0.0
        for lam in np.unique(ts):
            if lam <= 0:
                continue
            lhs = float(w[(ts > lam) & (mf < delta * lam)].sum())
            if lhs == 0.0:
                continue
            rhs = float(w[tf > lam / 2.0].sum())
            ratio = max(ratio, lhs / rhs if rhs > 0 else math.inf)
        rows.append(CaseRow(cid, "good_lambda_ratio", float(ratio),
                            ratio <= threshold))
        worst = max(worst, ratio)
    passed = all(r.passed for r in rows)
    return Report("good_lambda", passed,
                  {"max_ratio": worst, "delta": delta, "c": c,
                   "threshold": threshold}, rows)


# -- exponential decay --------------------------------------------------------------


def _tail_profile(target: np.ndarray, ref: np.ndarray, members,
                  w: np.ndarray) -> tuple[list, list, int]:
    """Integer-level tail mu{x in B: target > t ref}/mu(B); atoms with
    ref = 0 but target > 0 are counted as violations."""
    tv = target[members]
    rv = ref[members]
    ww = w[members]
    mu = float(ww.sum())
    bad = int(np.count_nonzero((rv <= 0) & (tv > 0)))
    live = rv > 0
    if not np.any(live):
        return [0], [0.0], [0], bad
    ratios = tv[live] / rv[live]
    tmax = int(math.ceil(float(ratios.max()))) + 1
    tmax = min(tmax, 10_000)
    levels = list(range(0, tmax + 1))
    fracs = [float(ww[live][ratios > t].sum() / mu) for t in levels]
    counts = [int(np.count_nonzero(ratios > t)) for t in levels]
    return levels, fracs, counts, bad


def exp_decay_report(T: OperatorDescriptor, f: VecFunction, b_id: int,
                     basis: BallBasis, mode: str = "vs_maximal") -> Report:
    """Tail of ||Tf|| against Mf (vs_maximal) or of |Tf - median| against the
    sharp maximal function (vs_sharp); reports the fitted exponential rate."""
    if mode not in ("vs_maximal", "vs_sharp"):
        raise ConfigError(f"unknown mode {mode!r}")
    members = basis.balls[int(b_id)].members
    w = basis.space.weights
    tf = T.apply(f).norms()
    if mode == "vs_maximal":
        target = tf
        ref = maximal(f, basis, T.params)
    else:
        if basis.eta is None:
            raise ConfigError("vs_sharp mode needs a doubling basis")
        _, med = median(VecFunction(tf[:, None]), members, basis)
        target = np.abs(tf - float(med[0]))
        ref = maximal(f, basis, Params.classical_profile(T.params.r),
                      mode="sharp")
    levels, fracs, counts, bad = _tail_profile(target, ref, members, w)
    rate = fit_exponential_rate(levels, fracs)
    passed = rate > 0 and bad == 0
    rows = [CaseRow(f"t={t}", "tail_fraction", fr, True)
            for t, fr in zip(levels, fracs)]
    return Report("exp_decay", passed,
                  {"mode": mode, "rate": rate, "ref_zero_violations": bad,
                   "ball": int(b_id),
                   "tail": {"t": levels, "count": counts, "fraction": fracs}},
                  rows)


# -- John-Nirenberg -----------------------------------------------------------------


def john_nirenberg_report(f: VecFunction, basis: BallBasis,
                          t_max: int = 64) -> Report:
    """Worst-ball tails of ||f - center|| / ||f||_BMO for median and average
    centers, with an exponential fit on each."""
    norm = bmo_norm(f, basis)
    if norm <= 0:
        raise ZeroBmoNorm("f is constant on every ball")
    w = basis.space.weights
    levels = list(range(0, t_max + 1))
    tail_med = np.zeros(len(levels))
    tail_avg = np.zeros(len(levels))
    for b in basis.balls:
        ms = b.members
        ww = w[ms]
        mu = float(ww.sum())
        vals = f.values[ms]
        _, med = median(f, ms, basis)
        dev_m = np.linalg.norm(vals - med[None, :], axis=1)
        avg = (vals * ww[:, None]).sum(axis=0) / mu
        dev_a = np.linalg.norm(vals - avg[None, :], axis=1)
        for j, t in enumerate(levels):
            tail_med[j] = max(tail_med[j], float(ww[dev_m > t * norm].sum() / mu))
            tail_avg[j] = max(tail_avg[j], float(ww[dev_a > t * norm].sum() / mu))
    rate_med = fit_exponential_rate(levels, tail_med)
    rate_avg = fit_exponential_rate(levels, tail_avg)
    nz = int(np.count_nonzero(tail_med))
    profile = "step" if nz <= 2 else "exponential"
    # the two centerings differ by at most 2 BMO units, so tails trade a
    # factor-2 shift in t from level 4 on
    consistent = all(
        tail_avg[2 * t] <= tail_med[t] + 1e-12
        and tail_med[2 * t] <= tail_avg[t] + 1e-12
        for t in range(4, t_max // 2 + 1))
    passed = rate_med > 0 and rate_avg > 0 and consistent
    rows = [CaseRow(f"t={t}", "tail_median_center", float(tail_med[j]), True)
            for j, t in enumerate(levels)]
    rows += [CaseRow(f"t={t}", "tail_average_center", float(tail_avg[j]), True)
             for j, t in enumerate(levels)]
    return Report("john_nirenberg", passed,
                  {"bmo_norm": norm, "rate_median": rate_med,
                   "rate_average": rate_avg, "profile": profile,
                   "centering_consistent": consistent}, rows)


# -- BMO boundedness ----------------------------------------------------------------


def bmo_bounded_report(op, corpus: Corpus, basis: BallBasis,
                       mode: str = "bmo",
                       threshold: float = math.inf) -> Report:
    """Max over the corpus of ||op f||_BMO / ||f||_BMO (mode "bmo") or
    / ||f||_inf (mode "linf"); degenerate 0/0 inputs are excluded."""
    if mode not in ("bmo", "linf"):
        raise ConfigError(f"unknown mode {mode!r}")
    rows = []
    worst = 0.0
    for cid, f in corpus.cases(basis.n_atoms):
        if mode == "bmo":
            denom = bmo_norm(f, basis)
        else:
            denom = float(f.norms().max())
        if denom <= 0:
            continue
        out = _apply(op, f, basis)
        num = bmo_norm(VecFunction(out[:, None]), basis)
        ratio = num / denom
        rows.append(CaseRow(cid, "bmo_ratio", float(ratio), ratio <= threshold))
        worst = max(worst, ratio)
    passed = all(r.passed for r in rows)
    return Report("bmo_bounded", passed,
                  {"max_ratio": worst, "mode": mode, "threshold": threshold,
                   "cases": len(rows)}, rows)


# -- strong domination --------------------------------------------------------------


def strong_domination_check(f: VecFunction, g: VecFunction, basis: BallBasis,
                            b_id: int, alphas=None, t_max: int = 64) -> Report:
    """Profile beta(alpha) = OSC_{B,alpha}(f) / INF_B(g) over an alpha grid,
    then the tail of ||f - median|| against lambda ||g||."""
    members = basis.balls[int(b_id)].members
    inf_g = float(g.norms()[members].min())
    if inf_g <= 0:
        raise InfZero("g vanishes somewhere on the ball")
    if alphas is None:
        alphas = [k / 20.0 for k in range(1, 20)]
    rows = []
    profile = []
    for a in alphas:
        beta = alpha_oscillation(f, members, a, basis) / inf_g
        profile.append(float(beta))
        rows.append(CaseRow(f"alpha={a:g}", "beta", float(beta), True))
    _, med = median(f, members, basis)
    dev = np.linalg.norm(f.values - med[None, :], axis=1)
    gn = g.norms()
    w = basis.space.weights
    ww = w[members]
    mu = float(ww.sum())
    levels = list(range(0, t_max + 1))
    fracs = []
    for t in levels:
        mask = dev[members] > t * gn[members]
        fracs.append(float(ww[mask].sum() / mu))
    rate = fit_exponential_rate(levels, fracs)
    rows += [CaseRow(f"lambda={t}", "tail_fraction", fr, True)
             for t, fr in zip(levels, fracs)]
    passed = rate > 0
    return Report("strong_domination", passed,
                  {"inf_g": inf_g, "beta_max": max(profile), "rate": rate,
                   "ball": int(b_id)}, rows)


# -- Muckenhoupt characteristics ------------------------------------------------------


def _ball_average(vals: np.ndarray, basis: BallBasis) -> np.ndarray:
    w = basis.space.weights
    out = np.empty(basis.n_balls)
    if basis.interval:
        pre = np.concatenate([[0.0], np.cumsum(vals * w)])
        out = (pre[basis.hi + 1] - pre[basis.lo]) / basis.mu
    else:
        for b in basis.balls:
            out[b.id] = float((vals[b.members] * w[b.members]).sum()) / b.measure
    return out


def _weighted_norm_ratio(T: OperatorDescriptor, weight: Weight,
                         basis: BallBasis, p: float, q: float,
                         corpus: Corpus | None, iters: int = 60) -> float:
    """Estimate ||T||_{L^q(w^q) -> L^p(w^p)}; power iteration on |kernel|
    when p = q = 2 and T is a kernel operator, corpus max otherwise."""
    w_atom = basis.space.weights
    wv = weight.w
    if T.linear and T.kernel is not None and p == 2.0 and q == 2.0:
        # conjugate by the weight: B g = w T(g/w) acts on plain L^2(mu)
        kmat = np.abs(np.asarray(T.kernel, dtype=float))
        bmat = (wv[:, None] / wv[None, :]) * kmat * w_atom[None, :]
        rng = np.random.default_rng(0)
        v = rng.normal(size=basis.n_atoms)
        v /= math.sqrt(float((v * v * w_atom).sum()))
        for _ in range(iters):
            u = bmat @ v
            v = (bmat.T @ (u * w_atom)) / w_atom
            nrm = math.sqrt(float((v * v * w_atom).sum()))
            if nrm == 0:
                return 0.0
            v /= nrm
        u = bmat @ v
        return math.sqrt(float((u * u * w_atom).sum()))
    if corpus is None:
        return math.nan
    best = 0.0
    for _, f in corpus.cases(basis.n_atoms):
        denom = float(((f.norms() * wv) ** q * w_atom).sum()) ** (1.0 / q)
        if denom <= 0:
            continue
        out = T.apply(f).norms()
        num = float(((out * wv) ** p * w_atom).sum()) ** (1.0 / p)
        best = max(best, num / denom)
    return best


def ap_characteristics(w: Weight, basis: BallBasis, p: float,
                       q: float | None = None,
                       op: OperatorDescriptor | None = None,
                       corpus: Corpus | None = None) -> Report:
    """[w]_{A_p} (q omitted) or [w]_{A_{p,q}}: exact sup over balls of the
    defining products, optionally with an estimated operator-norm ratio."""
    if p <= 1:
        raise ConfigError("p must exceed 1")
    if q is not None and q <= p:
        raise ConfigError("q must exceed p")
    wv = w.w
    if q is None:
        a1 = _ball_average(wv, basis)
        a2 = _ball_average(wv ** (-1.0 / (p - 1.0)), basis)
        per_ball = a1 * a2 ** (p - 1.0)
        name = "A_p"
    else:
        pprime = p / (p - 1.0)
        a1 = _ball_average(wv ** q, basis)
        a2 = _ball_average(wv ** (-pprime), basis)
        per_ball = a1 * a2 ** (q / pprime)
        name = "A_pq"
    char = float(per_ball.max())
    arg = int(per_ball.argmax())
    summary = {"characteristic": char, "kind": name, "p": p, "q": q,
               "witness_ball": arg}
    rows = [CaseRow("characteristic", name, char, True)]
    if op is not None:
        ratio = _weighted_norm_ratio(op, w, basis, p, q if q is not None else p,
                                     corpus)
        summary["norm_ratio_estimate"] = ratio
        summary["ratio_over_characteristic"] = (ratio / char if char > 0
                                                else math.inf)
        rows.append(CaseRow("norm_ratio", "estimate", float(ratio), True))
    return Report("muckenhoupt", True, summary, rows)
