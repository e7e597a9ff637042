"""Run configuration: a JSON file resolved into a TrainConfig plus task settings."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import nets
from .gan_core import TrainConfig
from .metrics import EVAL_SAMPLES

TASKS = ("mixture", "mnist", "fashion")
SEED_ENV = "SGAN_SEED"

# architecture defaults per task
_TASK_ARCH = {
    "mixture": ("mog_generator", "mog_discriminator"),
    "mnist": ("mnist_generator", "mnist_discriminator"),
    "fashion": ("mnist_generator", "mnist_discriminator"),
}


class ConfigError(ValueError):
    pass


def _resolve_specs(value, default_arch):
    if value is None:
        value = default_arch
    if isinstance(value, str):
        if value not in nets.ARCHITECTURES:
            raise ConfigError(f"unknown architecture {value!r}; choose one of {sorted(nets.ARCHITECTURES)}")
        return list(nets.ARCHITECTURES[value])
    try:
        return [s if isinstance(s, nets.LayerSpec) else nets.LayerSpec.from_dict(s) for s in value]
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"bad layer spec list: {exc}") from None


@dataclass
class RunConfig:
    task: str = "mixture"
    I: int = 8
    generator: object = None        # architecture name or list of layer dicts
    discriminator: object = None
    payoff: str = "log"
    mode: str = "stackelberg"
    non_saturating: bool = False
    steps: int = 25_000
    batch_real: int = 64
    batch_gen: int = 64
    lr_d: float = 2e-4
    lr_g: float = 2e-4
    seed: int = 0
    out_dir: str = "runs/default"
    eval_samples: int = EVAL_SAMPLES
    log_every: int = 100
    # mixture task
    k_modes: int = 8
    radius: float | None = None
    std: float | None = None
    # image tasks
    images: str | None = None
    labels: str | None = None
    subset: int | None = None
    train: TrainConfig = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.task != "mixture" and self.images is None:
            raise ConfigError(f"task {self.task!r} needs an 'images' IDX path")
        g_arch, d_arch = _TASK_ARCH[self.task]
        try:
            self.train = TrainConfig(
                n_generators=self.I,
                g_specs=_resolve_specs(self.generator, g_arch),
                d_specs=_resolve_specs(self.discriminator, d_arch),
                payoff=self.payoff, mode=self.mode, non_saturating=self.non_saturating,
                steps=self.steps, batch_real=self.batch_real, batch_gen=self.batch_gen,
                lr_d=self.lr_d, lr_g=self.lr_g, seed=self.seed, log_every=self.log_every)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.init}
        d["generator"] = [asdict(s) for s in self.train.g_specs]
        d["discriminator"] = [asdict(s) for s in self.train.d_specs]
        return d

    @classmethod
    def from_dict(cls, d: dict, seed: int | None = None) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        allowed = {f.name for f in fields(cls) if f.init}
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        d = dict(d)
        if seed is not None:
            d["seed"] = seed
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


def env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def load_config(path, seed: int | None = None) -> RunConfig:
    """Read a JSON config. Seed precedence: explicit argument, then SGAN_SEED, then the file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {p}: {exc}") from None
    if seed is None:
        seed = env_seed()
    return RunConfig.from_dict(doc, seed=seed)
