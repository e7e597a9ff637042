"""Seeded property suites over the autodiff engine and the duality lab.

Every suite takes an Rng and returns a :class:`SuiteResult` whose rows are
written verbatim to CSV, so a fixed seed gives byte-identical reports.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nets
from .autodiff import grad_check
from .duality.convexity import SFInstance, caratheodory_reduce, shapley_folkman_decompose
from .duality.family import QuadraticFamily, strong_duality_check
from .duality.grid import GridFunction, infconv_check, uniform_grid
from .duality.matching import discrete_gan_value, js_divergence, total_variation
from .rng import Rng


@dataclass
class SuiteResult:
    name: str
    columns: tuple
    rows: list = field(default_factory=list)
    worst: float = 0.0

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rows if not r[-1])

    @property
    def passed(self) -> bool:
        return bool(self.rows) and self.failures == 0


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# -- autodiff -------------------------------------------------------------------------------


def random_mlp(rng: Rng):
    n_layers = 2 + int(rng.integers(3, 1)[0])
    dims = [1 + int(d) for d in rng.integers(5, n_layers + 1)]
    specs = []
    for k in range(n_layers):
        act = nets.ACTIVATIONS[int(rng.integers(len(nets.ACTIVATIONS), 1)[0])]
        bn = bool(rng.uniform(1)[0] < 0.5) and dims[k + 1] > 0
        specs.append(nets.LayerSpec(dims[k], dims[k + 1], batchnorm=bn, activation=act))
    return specs


def suite_grad_check(rng: Rng, n: int = 100) -> SuiteResult:
    res = SuiteResult("grad-check", ("case", "layers", "batchnorm", "max_rel_error", "passed"))
    for case in range(n):
        specs = random_mlp(rng)
        graph, out = nets.build_mlp(specs)
        graph.output("y", out)
        layout = nets.ParamLayout(specs)
        params = layout.unflatten(nets.init_params(specs, rng, std=0.5))
        x = rng.normal((6, specs[0].in_dim))
        seed = rng.normal((6, specs[-1].out_dim))
        rep = grad_check(graph, {"x": x, **params}, "y", wrt=list(params) + ["x"], seed=seed)
        res.worst = max(res.worst, rep.max_rel_error)
        res.rows.append((case, len(specs), sum(s.batchnorm for s in specs), rep.max_rel_error, rep.passed))
    return res


# -- conjugate of a sum ------------------------------------------------------------------------


def random_convex(rng: Rng, u: np.ndarray) -> GridFunction:
    """alpha u^2 + beta u + gamma |u - c| + delta: convex with slopes in [-6, 6] on [-2, 2]."""
    alpha, gamma = rng.uniform(2)
    beta, c, delta = rng.uniform(3) * 2.0 - 1.0
    return GridFunction(u, alpha * u ** 2 + beta * u + gamma * np.abs(u - c) + delta)


def suite_infconv(rng: Rng, n: int = 50) -> SuiteResult:
    res = SuiteResult("infconv", ("case", "max_deviation", "spacing", "passed"))
    u = uniform_grid(-2.0, 2.0, 401)
    dual = uniform_grid(-16.0, 16.0, 801)
    for case in range(n):
        f1, f2 = random_convex(rng, u), random_convex(rng, u)
        rep = infconv_check([f1, f2], dual, window=(-8.0, 8.0))
        dev, sp = rep["max_deviation"], rep["spacing"]
        res.worst = max(res.worst, dev / sp)
        res.rows.append((case, dev, sp, dev < 10 * sp))
    return res


# -- strong duality ----------------------------------------------------------------------------


def suite_strong_duality(rng: Rng, n: int = 20) -> SuiteResult:
    res = SuiteResult("strong-duality", ("case", "I", "p0", "cl_p0", "sup_q", "duality_error",
                                         "closure_gap", "closure_bound", "passed"))
    for case in range(n):
        fam = QuadraticFamily.random(rng)
        I = 1 + int(rng.integers(4, 1)[0])
        rep = strong_duality_check(fam, I)
        res.worst = max(res.worst, rep.duality_error / rep.spacing)
        res.rows.append((case, I, rep.p0, rep.cl_p0, rep.sup_q, rep.duality_error,
                         rep.closure_gap, rep.closure_bound, rep.ok))
    return res


# -- Shapley-Folkman and Caratheodory ----------------------------------------------------------


def suite_shapley_folkman(rng: Rng, n: int = 200) -> SuiteResult:
    res = SuiteResult("shapley-folkman", ("case", "m", "I", "convexified", "reconstruction_error", "passed"))
    for case in range(n):
        m = 1 + int(rng.integers(2, 1)[0])
        I = 1 + int(rng.integers(6, 1)[0])
        inst = SFInstance.random(rng, m, I)
        dec = shapley_folkman_decompose(inst)
        k = len(dec.index_set)
        err = dec.reconstruction_error
        res.worst = max(res.worst, err)
        res.rows.append((case, m, I, k, err, k <= m and err <= 1e-9))
    return res


def suite_caratheodory(rng: Rng, n: int = 200) -> SuiteResult:
    res = SuiteResult("caratheodory", ("case", "points", "support", "reconstruction_error", "passed"))
    for case in range(n):
        k = 1 + int(rng.integers(12, 1)[0])
        pts = rng.uniform((k, 2)) * 4.0 - 2.0
        w = rng.uniform(k) + 1e-3
        w /= w.sum()
        P, lam = caratheodory_reduce(pts, w)
        err = float(np.max(np.abs(lam @ P - w @ pts)))
        res.worst = max(res.worst, err)
        res.rows.append((case, k, len(lam), err, len(lam) <= 3 and err <= 1e-9))
    return res


# -- discrete GAN value ------------------------------------------------------------------------


def random_pair(rng: Rng, case: int):
    """Alternates unrelated pairs, identical pairs, near-identical pairs and pairs with zeros."""
    k = 2 + int(rng.integers(9, 1)[0])
    p = rng.uniform(k) + 1e-3
    kind = case % 4
    if kind == 1:
        q = p.copy()
    elif kind == 2:
        q = p * (1.0 + 1e-4 * (rng.uniform(k) - 0.5))
    else:
        q = rng.uniform(k) + 1e-3
        if kind == 3:
            p[0] = 0.0
            q[-1] = 0.0
    return p / p.sum(), q / q.sum()


def direct_value(p, q) -> float:
    """Term-by-term summation of p log(p/(p+q)) + q log(q/(p+q)), with 0 log 0 = 0."""
    total = 0.0
    for pi, qi in zip(p, q):
        if pi > 0:
            total += pi * np.log(pi / (pi + qi))
        if qi > 0:
            total += qi * np.log(qi / (pi + qi))
    return float(total)


def suite_discrete_value(rng: Rng, n: int = 100) -> SuiteResult:
    res = SuiteResult("theorem4", ("case", "value", "oracle", "js_form_error", "tv", "matched", "passed"))
    floor = 2 * np.log(0.5)
    for case in range(n):
        p, q = random_pair(rng, case)
        value, matched = discrete_gan_value(p, q)
        oracle = direct_value(p, q)
        js_err = abs(value - (floor + 2 * js_divergence(p, q)))
        tv = total_variation(p, q)
        ok = (abs(value - oracle) <= 1e-12 and js_err <= 1e-12 and matched == (tv <= 1e-9)
              and (tv <= 1e-3 or value > floor + 1e-9))
        res.worst = max(res.worst, abs(value - oracle))
        res.rows.append((case, value, oracle, js_err, tv, matched, ok))
    return res


SUITES = {
    "grad-check": suite_grad_check,
    "infconv": suite_infconv,
    "strong-duality": suite_strong_duality,
    "shapley-folkman": suite_shapley_folkman,
    "caratheodory": suite_caratheodory,
    "theorem4": suite_discrete_value,
}


def run_suites(names, seed: int) -> list[SuiteResult]:
    """Each suite gets its own stream forked from Rng(seed) in registry order,
    so a suite's report does not depend on which other suites ran."""
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s) {unknown}; choose from {list(SUITES)} or 'all'")
    master = Rng(seed)
    streams = {name: master.fork() for name in SUITES}
    return [SUITES[name](streams[name]) for name in names]


def write_reports(results: list[SuiteResult], out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for r in results:
        p = out / f"verify_{r.name}.csv"
        with open(p, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(r.columns)
            for row in r.rows:
                w.writerow([_fmt(v) for v in row])
        paths.append(p)
    p = out / "verify_summary.csv"
    with open(p, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(("suite", "cases", "failures", "worst", "passed"))
        for r in results:
            w.writerow([r.name, len(r.rows), r.failures, _fmt(r.worst), _fmt(r.passed)])
    paths.append(p)
    return paths
