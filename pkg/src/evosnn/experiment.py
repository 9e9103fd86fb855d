"""Evolution experiments, the learning metric T, and seeded ensembles."""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from . import __version__, rng as rngmod
from .arena import Arena, Population, write_dump_header
from .config import Config
from .evolution import EvolutionParams, Evolver

log = logging.getLogger(__name__)


class StallError(RuntimeError):
    """No capture happened within the configured number of steps."""


@dataclass
class CaptureLog:
    timestep: list[int] = field(default_factory=list)
    bot_id: list[int] = field(default_factory=list)
    generation: list[int] = field(default_factory=list)

    def append(self, timestep: int, bot_id: int, generation: int) -> None:
        if self.timestep and timestep < self.timestep[-1]:
            raise ValueError("capture timesteps must be non-decreasing")
        self.timestep.append(timestep)
        self.bot_id.append(bot_id)
        self.generation.append(generation)

    def __len__(self) -> int:
        return len(self.timestep)

    def write_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestep", "bot_id", "generation"])
        w.writerows(zip(self.timestep, self.bot_id, self.generation))

    @classmethod
    def read_csv(cls, fh: IO[str]) -> "CaptureLog":
        out = cls()
        for row in csv.DictReader(fh):
            out.append(int(row["timestep"]), int(row["bot_id"]), int(row["generation"]))
        return out


@dataclass
class Trajectory:
    generation: np.ndarray
    T: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.generation)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (np.array_equal(self.generation, other.generation)
                and np.array_equal(self.T, other.T) and self.metadata == other.metadata)

    def to_csv(self) -> str:
        lines = ["generation,T"]
        lines += [f"{int(g)},{float(t)!r}" for g, t in zip(self.generation, self.T)]
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        """Write ``path`` (CSV) and the ``<stem>.json`` metadata sidecar next to it."""
        path = Path(path)
        path.write_text(self.to_csv())
        path.with_suffix(".json").write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path: str | Path) -> "Trajectory":
        path = Path(path)
        gens, ts = read_trajectory_csv(path)
        side = path.with_suffix(".json")
        meta = json.loads(side.read_text()) if side.exists() else {}
        return cls(gens, ts, meta)


class TrajectoryFormatError(ValueError):
    pass


def read_trajectory_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    gens, ts = [], []
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header.replace(" ", "") != "generation,T":
            raise TrajectoryFormatError(f"{path}:1: expected header 'generation,T', got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            try:
                if len(parts) != 2:
                    raise ValueError
                g, t = int(parts[0]), float(parts[1])
            except ValueError:
                raise TrajectoryFormatError(f"{path}:{lineno}: malformed row {line.strip()!r}") from None
            gens.append(g)
            ts.append(t)
    return np.array(gens, dtype=np.int64), np.array(ts, dtype=np.float64)


def capture_intervals(log: CaptureLog, pairing: str = "generation") -> tuple[np.ndarray, np.ndarray]:
    """Per-generation span of two consecutive captures.

    With ``pairing="generation"`` the span for generation ``g`` starts at the
    first capture recorded during ``g`` and ends two captures later, so both
    strategies are measured on their own generation axis.  With
    ``pairing="capture"`` captures are grouped in disjoint pairs regardless of
    generation: ``s[2g+2] - s[2g]``.  Returns ``(generations, spans)``.
    """
    s = np.asarray(log.timestep, dtype=np.int64)
    m = len(s)
    if pairing == "capture":
        n = max((m - 1) // 2, 0)
        starts = 2 * np.arange(n)
        gens = np.arange(n)
    elif pairing == "generation":
        g = np.asarray(log.generation, dtype=np.int64)
        if m == 0:
            return np.zeros(0, np.int64), np.zeros(0, np.int64)
        gens = np.arange(g[0], g[-1] + 1)
        starts = np.searchsorted(g, gens, side="left")
        present = (starts < m) & (g[np.minimum(starts, m - 1)] == gens)
        if not present.all():
            # generations without a capture of their own end the contiguous series
            cut = int(np.argmin(present))
            gens, starts = gens[:cut], starts[:cut]
        ok = starts + 2 < m
        gens, starts = gens[ok], starts[ok]
    else:
        raise ValueError(f"unknown pairing {pairing!r}")
    return gens, s[starts + 2] - s[starts]


def compute_T(log: CaptureLog, window: int = 50, pairing: str = "generation"
              ) -> tuple[np.ndarray, np.ndarray]:
    """Trailing ``window``-generation mean of the two-capture span.

    The first value is reported at the generation that completes the first
    full window; fewer generations than ``window`` give an empty series.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    gens, spans = capture_intervals(log, pairing)
    if len(spans) < window:
        return np.zeros(0, np.int64), np.zeros(0)
    csum = np.concatenate([[0], np.cumsum(spans)])
    T = (csum[window:] - csum[:-window]) / window
    return gens[window - 1:], T


@dataclass
class ExperimentResult:
    trajectory: Trajectory
    captures: CaptureLog
    population: Population
    timesteps: int
    generations: int


def _metadata(cfg: Config, backend: str) -> dict:
    return {"seed": cfg.experiment.seed, "strategy": cfg.evolution.strategy,
            "config": cfg.to_dict(), "rng": rngmod.RNG_NAME, "version": __version__,
            "backend": backend}


def dump_phenotypes(fh: IO[str], generation: int, pop: Population) -> None:
    bots = [{"id": int(pop.ids[s]), "b": float(pop.b[s]), "v": float(pop.v[s]),
             "w": [float(x) for x in pop.W[s].ravel()]} for s in range(len(pop))]
    fh.write(json.dumps({"generation": generation, "n": pop.n_neurons, "bots": bots},
                        separators=(",", ":")) + "\n")


def run_experiment(cfg: Config, backend: str | None = None, trajectory_dump: IO[str] | None = None,
                   phenotype_dump: IO[str] | None = None, phenotype_every: int = 1
                   ) -> ExperimentResult:
    """Evolve one population until ``cfg.experiment.max_generations`` is reached.

    Deterministic for a given config (seed included), whichever kernel is used.
    """
    ex = cfg.experiment
    arena = Arena(cfg, backend=backend)
    evolver = Evolver(EvolutionParams.from_config(cfg.evolution), arena.evo_rng)
    captures = CaptureLog()
    if trajectory_dump is not None:
        write_dump_header(trajectory_dump)
        trajectory_dump.write(arena.dump_record() + "\n")
    if phenotype_dump is not None:
        dump_phenotypes(phenotype_dump, 0, arena.pop)

    last_capture = 0
    while evolver.generation < ex.max_generations:
        budget = ex.stall_steps - (arena.timestep - last_capture)
        if budget <= 0:
            raise StallError(f"seed {ex.seed}: no capture in {ex.stall_steps} steps "
                             f"(t={arena.timestep}, generation {evolver.generation})")
        events = arena.advance(1 if trajectory_dump is not None else budget)
        if trajectory_dump is not None:
            trajectory_dump.write(arena.dump_record() + "\n")
        if not events:
            continue
        last_capture = arena.timestep
        for ev in events:
            captures.append(ev.timestep, ev.bot_id, evolver.generation)
            if evolver.generation >= ex.max_generations:
                continue
            before = evolver.generation
            evolver.on_capture(arena.pop, ev.bot_id, ev.phenotype)
            if (phenotype_dump is not None and evolver.generation != before
                    and evolver.generation % phenotype_every == 0):
                dump_phenotypes(phenotype_dump, evolver.generation, arena.pop)

    gens, T = compute_T(captures, ex.window, ex.pairing)
    meta = _metadata(cfg, arena.kernel.NAME)
    meta.update(timesteps=arena.timestep, generations=evolver.generation, captures=len(captures))
    return ExperimentResult(Trajectory(gens, T, meta), captures, arena.pop, arena.timestep,
                            evolver.generation)


@dataclass
class EnsembleMember:
    seed: int
    result: ExperimentResult | None = None
    error: str | None = None
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.error is None


def _run_member(args: tuple[Config, str | None]) -> EnsembleMember:
    cfg, backend = args
    t0 = time.perf_counter()
    try:
        res = run_experiment(cfg, backend=backend)
        return EnsembleMember(cfg.experiment.seed, res, seconds=time.perf_counter() - t0)
    except Exception as exc:  # recorded, ensemble continues
        return EnsembleMember(cfg.experiment.seed, error=f"{type(exc).__name__}: {exc}",
                              seconds=time.perf_counter() - t0)


def ensemble_configs(base: Config, n_seeds: int) -> list[Config]:
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    s0 = base.experiment.seed
    return [base.replace(experiment={"seed": s0 + i}) for i in range(n_seeds)]


def run_ensemble(base: Config, n_seeds: int = 100, jobs: int = 1, backend: str | None = None
                 ) -> list[EnsembleMember]:
    """Run seeds ``base_seed .. base_seed + n_seeds - 1``; results sorted by seed."""
    cfgs = ensemble_configs(base, n_seeds)
    args = [(c, backend) for c in cfgs]
    if jobs <= 1 or len(cfgs) == 1:
        members = [_run_member(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            members = list(pool.map(_run_member, args))
    for m in members:
        if not m.ok:
            log.warning("seed %d failed: %s", m.seed, m.error)
    return sorted(members, key=lambda m: m.seed)


def trajectories(members: Sequence[EnsembleMember]) -> list[Trajectory]:
    return [m.result.trajectory for m in members if m.ok]
