"""Stackelberg GAN: I generators against one shared discriminator.

The training objective is the equal-weight average of the per-pair payoffs

    phi(gamma; theta) = E_x f(D(x)) + E_z f(1 - D(G(z)))

with ``f = log`` (classic GAN) or ``f = identity`` (Wasserstein form). The
discriminator ascends the average, every generator descends it.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import nets
from .autodiff import Graph, backward, evaluate
from .nets import AdamState, LayerSpec, ParamLayout, adam_step, build_mlp, check_chain, init_params
from .rng import Rng

log = logging.getLogger(__name__)

PAYOFFS = ("log", "identity")
D_CLAMP = (1e-7, 1.0 - 1e-7)

DataSource = Callable[[int, Rng], np.ndarray]


class TrainingDiverged(FloatingPointError):
    def __init__(self, msg, snapshot=None):
        super().__init__(msg)
        self.snapshot = snapshot


@dataclass
class TrainConfig:
    n_generators: int = 8
    g_specs: list = field(default_factory=lambda: list(nets.ARCHITECTURES["mog_generator"]))
    d_specs: list = field(default_factory=lambda: list(nets.ARCHITECTURES["mog_discriminator"]))
    payoff: str = "log"
    mode: str = "stackelberg"  # or "multibranch"
    non_saturating: bool = False
    steps: int = 25_000
    batch_real: int = 64
    batch_gen: int = 64
    lr_d: float = 2e-4
    lr_g: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    log_every: int = 100

    def __post_init__(self):
        self.g_specs = [s if isinstance(s, LayerSpec) else LayerSpec.from_dict(s) for s in self.g_specs]
        self.d_specs = [s if isinstance(s, LayerSpec) else LayerSpec.from_dict(s) for s in self.d_specs]
        self.validate()

    def validate(self):
        if self.n_generators < 1:
            raise ValueError(f"n_generators must be >= 1, got {self.n_generators}")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.payoff not in PAYOFFS:
            raise ValueError(f"payoff must be one of {PAYOFFS}, got {self.payoff!r}")
        if self.mode not in ("stackelberg", "multibranch"):
            raise ValueError(f"unknown mode {self.mode!r}")
        check_chain(self.g_specs)
        check_chain(self.d_specs)
        if self.g_specs[-1].out_dim != self.d_specs[0].in_dim:
            raise ValueError(f"generator outputs {self.g_specs[-1].out_dim} dims but the "
                             f"discriminator expects {self.d_specs[0].in_dim}")
        if self.d_specs[-1].out_dim != 1:
            raise ValueError("discriminator must end in a single unit")

    @property
    def noise_dim(self) -> int:
        return self.g_specs[0].in_dim

    def to_dict(self) -> dict:
        d = asdict(self)
        d["g_specs"] = [asdict(s) for s in self.g_specs]
        d["d_specs"] = [asdict(s) for s in self.d_specs]
        return d

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class EnsembleState:
    theta: np.ndarray
    gammas: list
    opt_d: AdamState
    opt_g: list
    step: int = 0

    @property
    def n_generators(self) -> int:
        return len(self.gammas)

    def copy(self) -> "EnsembleState":
        return EnsembleState(self.theta.copy(), [g.copy() for g in self.gammas], self.opt_d,
                             list(self.opt_g), self.step)

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "theta": self.theta.tolist(),
            "gammas": [g.tolist() for g in self.gammas],
            "opt_d": self.opt_d.to_dict(),
            "opt_g": [o.to_dict() for o in self.opt_g],
        }

    @classmethod
    def from_dict(cls, d) -> "EnsembleState":
        return cls(np.array(d["theta"], dtype=np.float64),
                   [np.array(g, dtype=np.float64) for g in d["gammas"]],
                   AdamState.from_dict(d["opt_d"]),
                   [AdamState.from_dict(o) for o in d["opt_g"]],
                   int(d["step"]))


def _payoff_head(kind: str, non_saturating: bool = False) -> Graph:
    """Graph mapping discriminator outputs on real/fake rows to the payoff.

    With ``non_saturating`` the fake term becomes -mean log D(G(z)) (only
    used for the generator phase).
    """
    g = Graph()
    dr = g.input("d_real", (None, 1))
    df = g.input("d_fake", (None, 1))
    if kind == "log":
        real = g.mean(g.log(dr, D_CLAMP))
        if non_saturating:
            fake = g.scalar_affine(g.mean(g.log(df, D_CLAMP)), -1.0)
        else:
            fake = g.mean(g.log(g.scalar_affine(df, -1.0, 1.0), D_CLAMP))
    else:
        real = g.mean(dr)
        fake = g.mean(g.scalar_affine(df, -1.0, 1.0))
    g.output("real", real)
    g.output("fake", fake)
    g.output("phi", g.sum(real, fake))
    return g


@dataclass
class Batches:
    real: np.ndarray
    noise: list


class NetGame:
    """Evaluates the ensemble objective and its gradients for MLP players."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.I = config.n_generators
        self.g_layout = ParamLayout(config.g_specs)
        self.d_layout = ParamLayout(config.d_specs)
        self.d_graph, d_out = build_mlp(config.d_specs)
        self.d_graph.output("d", d_out)
        self.d_has_bn = any(s.batchnorm for s in config.d_specs)
        if config.mode == "multibranch":
            g = Graph()
            z = g.input("z", (None, config.noise_dim))
            outs = [build_mlp(config.g_specs, g, z, prefix=f"br{i}_")[1] for i in range(self.I)]
            g.output("x", g.scalar_affine(g.sum(*outs), 1.0 / self.I))
            self.g_graph = g
        else:
            self.g_graph, g_out = build_mlp(config.g_specs, input_name="z")
            self.g_graph.output("x", g_out)
        self.head = _payoff_head(config.payoff)
        self.head_ns = _payoff_head(config.payoff, non_saturating=True)

    # construction -----------------------------------------------------------------
    def init_state(self, rng: Rng) -> EnsembleState:
        c = self.config
        theta = init_params(c.d_specs, rng.fork())
        gammas = [init_params(c.g_specs, rng.fork()) for _ in range(self.I)]
        hyper = dict(beta1=c.beta1, beta2=c.beta2, eps=c.eps)
        return EnsembleState(theta, gammas, AdamState.zeros(len(theta), lr=c.lr_d, **hyper),
                             [AdamState.zeros(len(g), lr=c.lr_g, **hyper) for g in gammas], 0)

    def draw_batches(self, data: DataSource, rng: Rng, n_real=None, n_gen=None) -> Batches:
        c = self.config
        n_real = c.batch_real if n_real is None else n_real
        n_gen = c.batch_gen if n_gen is None else n_gen
        real_rng = rng.fork()
        noise_rngs = [rng.fork() for _ in range(self.n_players)]
        real = np.asarray(data(n_real, real_rng), dtype=np.float64)
        noise = [r.normal((n_gen, c.noise_dim)) for r in noise_rngs]
        return Batches(real, noise)

    @property
    def n_players(self) -> int:
        """Number of generator forward passes per objective evaluation."""
        return 1 if self.config.mode == "multibranch" else self.I

    # forward pieces --------------------------------------------------------------------
    def _g_bind(self, gammas, i):
        if self.config.mode == "multibranch":
            env = {}
            for b, gam in enumerate(gammas):
                env.update(self.g_layout.unflatten(gam, prefix=f"br{b}_"))
            return env
        return self.g_layout.unflatten(gammas[i])

    def generate(self, gammas, i, z):
        tr = evaluate(self.g_graph, {"z": z, **self._g_bind(gammas, i)})
        return tr["x"], tr

    def discriminate(self, theta, x):
        tr = evaluate(self.d_graph, {"x": x, **self.d_layout.unflatten(theta)})
        return tr["d"], tr

    # objective -----------------------------------------------------------------
    def value_and_grads(self, theta, gammas, batches: Batches, wrt=("theta", "gammas"),
                        head=None):
        """(1/I) Phi and its gradients.

        Returns ``(value, grad_theta, grad_gammas, per_player_payoffs)``; a
        gradient not requested in ``wrt`` is returned as None.
        """
        head = self.head if head is None else head
        P = self.n_players
        fakes, g_traces = [], []
        for i in range(P):
            x, tr = self.generate(gammas, i, batches.noise[i])
            if x.shape[1] != self.config.d_specs[0].in_dim:
                raise ValueError(f"generator output dim {x.shape[1]} does not match discriminator input")
            fakes.append(x)
            g_traces.append(tr)
        d_real, tr_real = self.discriminate(theta, batches.real)
        if self.d_has_bn:
            pairs = [self.discriminate(theta, x) for x in fakes]
            d_fakes = [p[0] for p in pairs]
            tr_fakes = [p[1] for p in pairs]
        else:
            d_all, tr_all = self.discriminate(theta, np.concatenate(fakes))
            splits = np.cumsum([len(x) for x in fakes])[:-1]
            d_fakes = np.split(d_all, splits)

        phis, ct_real, ct_fake = [], np.zeros_like(d_real), []
        for i in range(P):
            htr = evaluate(head, {"d_real": d_real, "d_fake": d_fakes[i]})
            phis.append(float(htr["phi"]))
            hg = backward(htr, "phi", 1.0 / P)
            ct_real += hg["d_real"]
            ct_fake.append(hg["d_fake"])
        value = float(np.sum(phis)) / P

        grad_theta = grad_gammas = None
        want_theta = "theta" in wrt
        need_x = "gammas" in wrt
        d_names = list(self.d_graph.params) if want_theta else []
        d_wrt = d_names + (["x"] if need_x else [])
        if want_theta:
            grad_theta = self.d_layout.flatten(backward(tr_real, "d", ct_real, wrt=d_names))
        if d_wrt:
            if self.d_has_bn:
                gx = []
                for tr, ct in zip(tr_fakes, ct_fake):
                    gf = backward(tr, "d", ct, wrt=d_wrt)
                    if want_theta:
                        grad_theta = grad_theta + self.d_layout.flatten(gf)
                    gx.append(gf.get("x"))
            else:
                gf = backward(tr_all, "d", np.concatenate(ct_fake), wrt=d_wrt)
                if want_theta:
                    grad_theta = grad_theta + self.d_layout.flatten(gf)
                gx = np.split(gf["x"], splits) if need_x else None
        if need_x:
            g_names = list(self.g_graph.params)
            if self.config.mode == "multibranch":
                gg = backward(g_traces[0], "x", gx[0], wrt=g_names)
                grad_gammas = [self.g_layout.flatten(gg, prefix=f"br{b}_") for b in range(self.I)]
            else:
                grad_gammas = [self.g_layout.flatten(backward(tr, "x", g, wrt=g_names))
                               for tr, g in zip(g_traces, gx)]
        return value, grad_theta, grad_gammas, phis


def payoff(gamma, theta, real_batch, noise_batch, f: str = "log",
           g_specs=None, d_specs=None) -> float:
    """phi(gamma; theta) with expectations replaced by batch means."""
    cfg = TrainConfig(n_generators=1, payoff=f,
                      g_specs=g_specs or nets.ARCHITECTURES["mog_generator"],
                      d_specs=d_specs or nets.ARCHITECTURES["mog_discriminator"])
    game = NetGame(cfg)
    value, *_ = game.value_and_grads(theta, [gamma], Batches(np.asarray(real_batch, float),
                                                            [np.asarray(noise_batch, float)]), wrt=())
    return value


def ensemble_objective(state: EnsembleState, batches: Batches, game: NetGame) -> float:
    """(1/I) sum_i phi(gamma_i; theta)."""
    return game.value_and_grads(state.theta, state.gammas, batches, wrt=())[0]


def multibranch_objective(gammas, theta, batches: Batches, config: TrainConfig) -> float:
    """Payoff of the composite generator averaging the branch outputs."""
    cfg = replace(config, mode="multibranch", n_generators=len(gammas))
    return NetGame(cfg).value_and_grads(theta, gammas, batches, wrt=())[0]


def _check_finite(value, grads, what, state):
    if not np.isfinite(value) or any(g is not None and not np.all(np.isfinite(g)) for g in grads):
        raise TrainingDiverged(f"non-finite {what} at step {state.step} (objective={value})",
                               snapshot=state.to_dict())


def train_step(state: EnsembleState, data: DataSource, rng: Rng, config: TrainConfig,
               game: NetGame | None = None) -> tuple[EnsembleState, dict]:
    """One discriminator ascent step, then one descent step per generator.

    Each phase draws its own real batch and per-generator noise. Returns the
    successor state and the losses measured before the updates.
    """
    game = game if game is not None else NetGame(config)
    d_rng, g_rng = rng.fork(), rng.fork()

    b = game.draw_batches(data, d_rng)
    obj, g_theta, _, _ = game.value_and_grads(state.theta, state.gammas, b, wrt=("theta",))
    _check_finite(obj, [g_theta], "discriminator loss", state)
    theta, opt_d = adam_step(state.theta, -g_theta, state.opt_d, game.d_layout)

    b = game.draw_batches(data, g_rng)
    head = game.head_ns if config.non_saturating else None
    g_obj, _, g_gammas, phis = game.value_and_grads(theta, state.gammas, b, wrt=("gammas",), head=head)
    _check_finite(g_obj, g_gammas, "generator loss", state)
    gammas, opt_g = [], []
    for gam, grad, opt in zip(state.gammas, g_gammas, state.opt_g):
        new, o = adam_step(gam, grad, opt, game.g_layout)
        gammas.append(new)
        opt_g.append(o)
    new_state = EnsembleState(theta, gammas, opt_d, opt_g, state.step + 1)
    return new_state, {"step": new_state.step, "objective": obj, "d_loss": -obj,
                       "g_loss_mean": float(np.mean(phis))}


METRIC_FIELDS = ("step", "objective", "d_loss", "g_loss_mean")


def train(config: TrainConfig, data: DataSource, out_dir=None, game: NetGame | None = None,
          state: EnsembleState | None = None, progress: Callable | None = None):
    """Run ``config.steps`` alternating steps. Returns (state, metrics rows).

    With ``out_dir`` set, writes metrics.csv and checkpoint.json there. On a
    non-finite loss the last logged checkpoint is kept and
    :class:`TrainingDiverged` propagates.
    """
    game = game if game is not None else NetGame(config)
    master = Rng(config.seed)
    init_rng, loop_rng = master.fork(), master.fork()
    if state is None:
        state = game.init_state(init_rng)
    rows = []
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    last_good = state
    try:
        for _ in range(config.steps):
            state, info = train_step(state, data, loop_rng.fork(), config, game)
            if state.step % config.log_every == 0 or state.step == config.steps:
                rows.append(info)
                last_good = state
                if progress is not None:
                    progress(info)
    except TrainingDiverged:
        if out is not None:
            save_checkpoint(out / "checkpoint.json", last_good, config)
            write_metrics(out / "metrics.csv", rows)
        raise
    if out is not None:
        save_checkpoint(out / "checkpoint.json", state, config)
        write_metrics(out / "metrics.csv", rows)
    return state, rows


def write_metrics(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for r in rows:
            w.writerow([r["step"]] + [repr(float(r[k])) for k in METRIC_FIELDS[1:]])


def save_checkpoint(path, state: EnsembleState, config: TrainConfig, rng: Rng | None = None):
    doc = {"config": config.to_dict(), "state": state.to_dict(),
           "rng_state": rng.state if rng is not None else None}
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def load_checkpoint(path):
    """Returns (state, config, rng or None)."""
    doc = json.loads(Path(path).read_text())
    cfg = TrainConfig.from_dict(doc["config"])
    rng = Rng.from_state(doc["rng_state"]) if doc.get("rng_state") else None
    return EnsembleState.from_dict(doc["state"]), cfg, rng


def sample(state: EnsembleState, n: int, rng: Rng, game: NetGame):
    """Draw n points from the uniform mixture of generators.

    Each draw picks i ~ Uniform{0..I-1} and z ~ N(0, 1). Returns
    ``(points, labels)``. Rows of one generator go through it as a single
    batch, so batchnorm sees the statistics of that batch.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    P = game.n_players
    labels = rng.integers(P, n)
    z = rng.normal((n, game.config.noise_dim))
    out = np.zeros((n, game.config.g_specs[-1].out_dim))
    for i in range(P):
        idx = np.flatnonzero(labels == i)
        if len(idx):
            out[idx] = game.generate(state.gammas, i, z[idx])[0]
    return out, labels


@dataclass
class GapReport:
    w_hat: float
    q_hat: float
    gap_proxy: float
    start: float
    K: int
    probe_lr: float
    valid: bool = True


def probe_gap(value_and_grads, theta, gammas, K: int, probe_lr: float) -> GapReport:
    """Gap proxy for a generic objective.

    ``value_and_grads(theta, gammas, wrt)`` returns ``(value, g_theta,
    g_gammas)``. w_hat comes from K Adam ascent steps on a copy of theta with
    the gammas frozen; q_hat from K Adam descent steps on copies of the
    gammas with theta frozen.
    """
    start = value_and_grads(theta, gammas, ())[0]
    try:
        th, opt = theta.copy(), AdamState.zeros(len(theta), lr=probe_lr)
        for _ in range(K):
            _, g, _ = value_and_grads(th, gammas, ("theta",))
            th, opt = adam_step(th, -g, opt)
        w_hat = value_and_grads(th, gammas, ())[0]

        gs = [g.copy() for g in gammas]
        opts = [AdamState.zeros(len(g), lr=probe_lr) for g in gs]
        for _ in range(K):
            _, _, grads = value_and_grads(theta, gs, ("gammas",))
            stepped = [adam_step(g, d, o) for g, d, o in zip(gs, grads, opts)]
            gs = [s[0] for s in stepped]
            opts = [s[1] for s in stepped]
        q_hat = value_and_grads(theta, gs, ())[0]
    except FloatingPointError:
        return GapReport(float("nan"), float("nan"), float("nan"), start, K, probe_lr, valid=False)
    valid = bool(np.isfinite(w_hat) and np.isfinite(q_hat))
    return GapReport(w_hat, q_hat, w_hat - q_hat, start, K, probe_lr, valid)


def empirical_gap(state: EnsembleState, data: DataSource, K: int, probe_lr: float, rng: Rng,
                  game: NetGame, n_eval: int | None = None) -> GapReport:
    """Gap proxy of the ensemble objective on one fixed set of evaluation batches."""
    if K < 0:
        raise ValueError("K must be >= 0")
    batches = game.draw_batches(data, rng, n_eval, n_eval)

    def vg(theta, gammas, wrt):
        v, gt, gg, _ = game.value_and_grads(theta, gammas, batches, wrt=wrt)
        return v, gt, gg

    return probe_gap(vg, state.theta, state.gammas, K, probe_lr)
