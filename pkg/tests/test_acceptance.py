"""Acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line; the lines
are repeated together in the terminal summary at the end of the run.

The mixture experiments (criteria 9 to 11) train 23 small ensembles and take
a while on one core; they share a session-scoped cache.
"""

import json
import math
import statistics
import time
from dataclasses import replace

import numpy as np
import pytest

from sgan import nets
from sgan.cli import dispatch
from sgan.duality.family import QuadraticFamily, sweep
from sgan.gan_core import NetGame, TrainConfig, empirical_gap, load_checkpoint, sample, train
from sgan.metrics import assign_and_score, every_mode_dominated, generator_balance
from sgan.rng import Rng
from sgan.synthdata import make_ring_mixture, sample_real, write_idx
from sgan.verify import (suite_caratheodory, suite_grad_check, suite_infconv, suite_shapley_folkman,
                         suite_strong_duality, suite_discrete_value)

SEEDS = (0, 1, 2, 3, 4)
GAP_SEEDS = (0, 1, 2)
SPEC = make_ring_mixture()

# Table hyper-parameters except the step count and the generator learning
# rate: with lr_g = lr_d the shared discriminator wins and training stalls.
MIXTURE = TrainConfig(steps=2000, lr_d=2e-4, lr_g=5e-3, batch_gen=32, log_every=500)
CONFIGS = {
    "stackelberg": replace(MIXTURE, n_generators=8),
    "single_wide": replace(MIXTURE, n_generators=1, g_specs=nets.ARCHITECTURES["mog_generator_wide"]),
    "single_deep": replace(MIXTURE, n_generators=1, g_specs=nets.ARCHITECTURES["mog_generator_deep"]),
    "multibranch": replace(MIXTURE, n_generators=8, mode="multibranch"),
    "single_small": replace(MIXTURE, n_generators=1),
}


LINES = {}


def report(n, ok, detail):
    LINES[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
    print("\n" + LINES[n], flush=True)
    assert ok, detail


def timed(fn, *args):
    t = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - t


# -- verification suites ---------------------------------------------------------------------------


def test_criterion_01_gradients():
    res, sec = timed(suite_grad_check, Rng(101))
    ok = len(res.rows) == 100 and res.worst < 1e-5 and sec < 30
    report(1, ok, f"worst rel error {res.worst:.2e} over {len(res.rows)} nets in {sec:.1f}s")


def test_criterion_02_pm1_family():
    t = time.perf_counter()
    reps = sweep(QuadraticFamily.pm1(), range(1, 65))
    sec = time.perf_counter() - t
    errs = []
    for r in reps:
        w = 1 / (2 * r.I ** 2) if r.I % 2 else 0.0
        errs += [abs(r.q_star), abs(r.w_star - w), abs(r.delta_worst - 0.5)]
    worst = max(errs)
    holds = all(r.gap <= 2 * 0.5 / r.I + 1e-10 for r in reps)
    report(2, worst <= 1e-10 and holds and sec < 10, f"max error {worst:.1e}, bound holds={holds}, {sec:.1f}s")


def test_criterion_03_random_bound():
    rng = Rng(103)
    t = time.perf_counter()
    weak, bound, n = 0, 0, 0
    for _ in range(100):
        fam = QuadraticFamily.random(rng, max_size=6)
        for r in sweep(fam, range(1, 17)):
            n += 1
            weak += r.gap < -1e-12
            bound += r.gap > (fam.t + 1) * r.delta_worst / r.I + 1e-9
    sec = time.perf_counter() - t
    report(3, weak == 0 and bound == 0 and sec < 120,
           f"{n} (family, I) cases: {weak} weak-duality and {bound} bound violations, {sec:.1f}s")


def test_criterion_04_conjugate_of_sum():
    res, sec = timed(suite_infconv, Rng(104))
    report(4, res.passed and len(res.rows) == 50 and sec < 60,
           f"worst deviation {res.worst:.2f} grid spacings, {res.failures} failures, {sec:.1f}s")


def test_criterion_05_strong_duality():
    res, sec = timed(suite_strong_duality, Rng(105))
    report(5, res.passed and len(res.rows) == 20 and sec < 60,
           f"worst duality error {res.worst:.2f} grid spacings, {res.failures} failures, {sec:.1f}s")


def test_criterion_06_shapley_folkman():
    res, sec = timed(suite_shapley_folkman, Rng(106))
    report(6, res.passed and len(res.rows) == 200 and sec < 60,
           f"worst reconstruction {res.worst:.1e}, {res.failures} failures, {sec:.1f}s")


def test_criterion_07_caratheodory():
    res, sec = timed(suite_caratheodory, Rng(107))
    report(7, res.passed and len(res.rows) == 200,
           f"worst reconstruction {res.worst:.1e}, {res.failures} failures")


def test_criterion_08_discrete_value():
    res, sec = timed(suite_discrete_value, Rng(108))
    report(8, res.passed and len(res.rows) == 100,
           f"worst oracle deviation {res.worst:.1e}, {res.failures} failures")


# -- mixture experiments ---------------------------------------------------------------------------


def _data(n, r):
    return sample_real(SPEC, n, r)


class Runs:
    def __init__(self):
        self.cells = {}

    def get(self, name, seed):
        key = (name, seed)
        if key not in self.cells:
            cfg = replace(CONFIGS[name], seed=seed)
            game = NetGame(cfg)
            t = time.perf_counter()
            try:
                state, _ = train(cfg, _data, game=game)
            except FloatingPointError as exc:
                self.cells[key] = {"error": str(exc), "seconds": time.perf_counter() - t}
                return self.cells[key]
            sec = time.perf_counter() - t
            pts, lab = sample(state, 8000, Rng(seed).fork(), game)
            rep = assign_and_score(pts, lab, SPEC, n_generators=game.n_players)
            self.cells[key] = {"state": state, "game": game, "report": rep, "seconds": sec,
                               "covered": rep.modes_covered, "error": None}
            print(f"\n  trained {name} seed={seed}: {rep.modes_covered}/8 modes in {sec:.0f}s", flush=True)
        return self.cells[key]


@pytest.fixture(scope="session")
def runs():
    return Runs()


def covered(runs, name):
    # a diverged run counts as covering nothing
    return [runs.get(name, s).get("covered", 0) or 0 for s in SEEDS]


def test_criterion_09_mode_coverage(runs):
    stack = covered(runs, "stackelberg")
    wide, deep = covered(runs, "single_wide"), covered(runs, "single_deep")
    branch = covered(runs, "multibranch")
    slowest = max(c["seconds"] for c in runs.cells.values())
    a = sum(c == 8 for c in stack) >= 4
    b = statistics.median(wide) <= 7 and statistics.median(deep) <= 7
    c = statistics.median(branch) < 8
    hq = {name: [round(runs.get(name, s)["report"].hq_fraction, 2) if "report" in runs.get(name, s) else None
                 for s in SEEDS] for name in ("stackelberg", "multibranch")}
    report(9, a and b and c and slowest <= 600,
           f"(a) {'ok' if a else 'FAIL'} stackelberg covered {stack}; "
           f"(b) {'ok' if b else 'FAIL'} 2-128-2 {wide}, deep {deep}; "
           f"(c) {'ok' if c else 'FAIL'} multibranch {branch}; "
           f"hq fraction {hq}; slowest run {slowest:.0f}s")


def test_criterion_10_balance(runs):
    full = [s for s in SEEDS if runs.get("stackelberg", s).get("covered") == 8]
    owned = {s: generator_balance(runs.get("stackelberg", s)["report"]).dominant_modes for s in full}
    ok = bool(full) and all(every_mode_dominated(generator_balance(runs.get("stackelberg", s)["report"]), 8)
                            for s in full)
    report(10, ok, f"seeds with 8/8: {full}; dominant modes per generator {owned}")


def test_criterion_11_empirical_gap(runs):
    gaps = {1: [], 8: []}
    for s in GAP_SEEDS:
        for I, name in ((8, "stackelberg"), (1, "single_small")):
            cell = runs.get(name, s)
            if cell["error"] is not None:
                gaps[I].append(math.inf)
                continue
            rep = empirical_gap(cell["state"], _data, 200, 1e-3, Rng(1000 + s), cell["game"], n_eval=512)
            gaps[I].append(rep.gap_proxy if rep.valid else math.inf)
    g8, g1 = statistics.median(gaps[8]), statistics.median(gaps[1])
    report(11, g8 < g1, f"median gap I=8 {g8:.4f} vs I=1 {g1:.4f} (per seed {gaps})")


# -- MNIST smoke and determinism -------------------------------------------------------------------


def synthetic_digits(n, rng):
    """Bright random strokes on a dark 28x28 canvas."""
    imgs = np.zeros((n, 28, 28), dtype=np.uint8)
    for k in range(n):
        r0, c0 = rng.integers(20, 2) + 4
        h, w = rng.integers(10, 2) + 3
        imgs[k, r0:r0 + h, c0:c0 + 2] = 255
        imgs[k, r0:r0 + 2, c0:c0 + w] = 200
    return imgs


def test_criterion_12_mnist_smoke(tmp_path):
    write_idx(synthetic_digits(1200, Rng(12)), tmp_path / "train-images-idx3-ubyte")
    cfg = {"task": "mnist", "I": 5, "steps": 200, "log_every": 20, "generator": "mnist_generator",
           "discriminator": "mnist_discriminator", "images": str(tmp_path / "train-images-idx3-ubyte"),
           "subset": 1000, "out_dir": str(tmp_path / "run"), "seed": 12}
    (tmp_path / "mnist.json").write_text(json.dumps(cfg))
    t = time.perf_counter()
    code = dispatch(["train", "--config", str(tmp_path / "mnist.json")])
    sec = time.perf_counter() - t
    run = tmp_path / "run"
    rows = np.loadtxt(run / "metrics.csv", delimiter=",", skiprows=1)
    finite = code == 0 and rows.shape == (10, 4) and bool(np.all(np.isfinite(rows)))

    state, tcfg, _ = load_checkpoint(run / "checkpoint.json")
    game = NetGame(tcfg)
    pix, _ = sample(state, 64, Rng(0), game)
    in_range = pix.shape == (64, 784) and bool(np.all(np.abs(pix) <= 1.0))

    again = run / "again.json"
    from sgan.gan_core import save_checkpoint
    save_checkpoint(again, state, tcfg)
    back, tcfg2, _ = load_checkpoint(again)
    roundtrip = (tcfg2 == tcfg and back.step == 200 and np.array_equal(back.theta, state.theta)
                 and all(np.array_equal(a, b) for a, b in zip(back.gammas, state.gammas))
                 and again.read_bytes() == (run / "checkpoint.json").read_bytes())
    report(12, finite and in_range and roundtrip and sec < 300,
           f"losses finite={finite}, pixels in [-1,1]={in_range}, checkpoint round-trip={roundtrip}, {sec:.0f}s")


def _outputs(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*"))
            if p.suffix in (".csv", ".svg")}


def test_criterion_13_cli_determinism(tmp_path):
    cfg = {"task": "mixture", "I": 3, "steps": 30, "log_every": 10, "batch_real": 16, "batch_gen": 16,
           "eval_samples": 1000, "lr_g": 5e-3}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    c = str(tmp_path / "cfg.json")
    commands = [
        ["train", "--config", c], ["eval", "--config", c], ["gap", "--config", c, "--K", "20"],
        ["plot", "--config", c, "--n", "500"], ["duality", "--family", "random", "--I", "1:8"],
        ["duality", "--family", "pm1", "--I", "1:16"], ["verify", "--suite", "all"],
    ]
    outs = []
    for rep in ("a", "b"):
        d = tmp_path / rep
        for cmd in commands:
            sub = "run" if cmd[0] in ("train", "eval", "gap", "plot") else cmd[0] + cmd[-1]
            code = dispatch(cmd + ["--out", str(d / sub), "--seed", "13"])
            assert code == 0, cmd
        outs.append(_outputs(d))
    same = outs[0] == outs[1] and len(outs[0]) >= 10
    diff = sorted(k for k in outs[0] if outs[0][k] != outs[1].get(k))
    report(13, same, f"{len(outs[0])} CSV/SVG files compared, differing: {diff}")
