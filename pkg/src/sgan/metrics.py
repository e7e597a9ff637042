"""Mode coverage and generator-balance statistics for 2-D mixture samples."""

from __future__ import annotations

import csv
import logging
import math
import statistics
from dataclasses import dataclass

import numpy as np

from .synthdata import MixtureSpec

log = logging.getLogger(__name__)

HQ_SIGMAS = 4.0
COVER_FRACTION = 0.01
DOMINANT_SHARE = 0.6
EVAL_SAMPLES = 8000


@dataclass
class ModeReport:
    mode_counts: np.ndarray       # samples nearest to each mode
    hq_counts: np.ndarray         # high-quality samples per mode
    counts: np.ndarray            # generator x mode, all samples
    hq_matrix: np.ndarray         # generator x mode, high-quality samples only
    n: int
    hq_fraction: float
    modes_covered: int
    covered: np.ndarray


def assign_and_score(samples, labels, spec: MixtureSpec, hq_radius_sigmas: float = HQ_SIGMAS,
                     n_generators: int | None = None, cover_fraction: float = COVER_FRACTION) -> ModeReport:
    """Assign every sample to its nearest mode center and score quality.

    A sample is high quality when it lies within ``hq_radius_sigmas * std``
    of its center; a mode is covered when at least ``cover_fraction`` of all
    samples are high-quality samples of that mode.
    """
    x = np.asarray(samples, dtype=np.float64).reshape(-1, 2)
    n = len(x)
    if n == 0:
        raise ValueError("cannot score an empty sample set")
    labels = np.zeros(n, dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    I = int(labels.max()) + 1 if n_generators is None else n_generators
    d2 = ((x[:, None, :] - spec.centers[None, :, :]) ** 2).sum(axis=2)
    nearest = d2.argmin(axis=1)
    hq = np.sqrt(d2[np.arange(n), nearest]) <= hq_radius_sigmas * spec.std
    k = spec.k
    counts = np.zeros((I, k), dtype=np.int64)
    np.add.at(counts, (labels, nearest), 1)
    hq_matrix = np.zeros((I, k), dtype=np.int64)
    np.add.at(hq_matrix, (labels[hq], nearest[hq]), 1)
    hq_counts = hq_matrix.sum(axis=0)
    covered = hq_counts >= cover_fraction * n
    return ModeReport(counts.sum(axis=0), hq_counts, counts, hq_matrix, n,
                      float(hq.mean()), int(covered.sum()), covered)


@dataclass
class BalanceStats:
    entropy: float
    max_entropy: float
    dominant_modes: list   # per generator, list of mode indices


def generator_balance(report: ModeReport, share: float = DOMINANT_SHARE) -> BalanceStats:
    """Entropy of per-generator sample totals and each generator's dominant modes.

    A generator's dominant modes are the fewest modes, taken in decreasing
    order of its high-quality counts, that hold at least ``share`` of its
    high-quality samples. A generator with no high-quality samples has none.
    """
    totals = report.counts.sum(axis=1).astype(np.float64)
    p = totals / totals.sum()
    nz = p[p > 0]
    entropy = float(-(nz * np.log(nz)).sum()) + 0.0
    dominant = []
    for row in report.hq_matrix:
        tot = row.sum()
        if tot == 0:
            dominant.append([])
            continue
        order = np.argsort(-row, kind="stable")
        picked, acc = [], 0
        for m in order:
            picked.append(int(m))
            acc += row[m]
            if acc >= share * tot:
                break
        dominant.append(picked)
    return BalanceStats(entropy, math.log(len(totals)), dominant)


def every_mode_dominated(stats: BalanceStats, k: int) -> bool:
    owned = {m for modes in stats.dominant_modes for m in modes}
    return owned == set(range(k))


SUMMARY_FIELDS = ("config", "seed", "modes_covered", "hq_fraction", "entropy")


@dataclass
class Cell:
    config: str
    seed: int
    modes_covered: int | None
    hq_fraction: float | None
    entropy: float | None
    balanced: bool | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def coverage_experiment(configs: dict, seeds, spec: MixtureSpec, n_eval: int = EVAL_SAMPLES,
                        progress=None) -> list[Cell]:
    """Train every (config, seed) cell and score mode coverage.

    ``configs`` maps a name to a TrainConfig; the seed of each cell
    overrides the config's seed. Training failures are recorded in the cell
    instead of aborting the sweep.
    """
    from dataclasses import replace

    from .gan_core import NetGame, sample, train
    from .rng import Rng
    from .synthdata import sample_real

    seeds = list(seeds)
    if not seeds:
        raise ValueError("coverage_experiment needs at least one seed")

    def data(n, r):
        return sample_real(spec, n, r)

    cells = []
    for name, cfg in configs.items():
        for seed in seeds:
            run_cfg = replace(cfg, seed=seed)
            try:
                game = NetGame(run_cfg)
                state, _ = train(run_cfg, data, game=game)
                pts, labels = sample(state, n_eval, Rng(seed).fork(), game)
                rep = assign_and_score(pts, labels, spec, n_generators=game.n_players)
                bal = generator_balance(rep)
                cell = Cell(name, seed, rep.modes_covered, rep.hq_fraction, bal.entropy,
                            every_mode_dominated(bal, spec.k))
            except FloatingPointError as exc:
                cell = Cell(name, seed, None, None, None, error=str(exc))
            log.info("cell %s seed=%d -> %s", name, seed, cell)
            if progress is not None:
                progress(cell)
            cells.append(cell)
    return cells


def summarize(cells: list[Cell]) -> dict:
    """Per config: median modes covered over successful runs and success rate."""
    out = {}
    for name in dict.fromkeys(c.config for c in cells):
        mine = [c for c in cells if c.config == name]
        ok = [c.modes_covered for c in mine if c.ok]
        out[name] = {
            "median_modes_covered": statistics.median(ok) if ok else None,
            "success_rate": len(ok) / len(mine),
            "runs": len(mine),
        }
    return out


def write_summary_csv(path, cells: list[Cell]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for c in cells:
            w.writerow([c.config, c.seed,
                        "" if c.modes_covered is None else c.modes_covered,
                        "" if c.hq_fraction is None else repr(c.hq_fraction),
                        "" if c.entropy is None else repr(c.entropy)])
