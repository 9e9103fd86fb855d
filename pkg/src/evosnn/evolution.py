"""Phenotypes, fitness, and the two inheritance strategies.

Both strategies are driven by capture events.  ``Mutation`` clones each
capturing bot with Gaussian noise and culls the least fit bot.
``Crossover`` queues capturers; every completed pair of parents swaps the
right half of their weight-matrix columns, mutates both children and culls
the two least fit bots.  Newborns enter with zero captures and age 1, and are
never culled by the event that created them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Protocol, Sequence

import numpy as np

from .config import CROSSOVER, MUTATION, STRATEGIES

TWO_PI = 2 * math.pi


@dataclass
class Phenotype:
    """Evolvable genome: weights ``w``, spontaneous rate ``b``, visual angle ``v``."""

    w: np.ndarray
    b: float
    v: float

    def __post_init__(self):
        self.w = np.array(self.w, dtype=np.float64)
        if self.w.ndim != 2 or self.w.shape[0] != self.w.shape[1]:
            raise ValueError(f"weight matrix must be square, got {self.w.shape}")
        if np.any(np.diagonal(self.w) != 0):
            raise ValueError("weight matrix must have a zero diagonal")
        self.b = float(self.b)
        self.v = float(self.v)

    def copy(self) -> "Phenotype":
        return Phenotype(self.w.copy(), self.b, self.v)

    def __eq__(self, other):
        if not isinstance(other, Phenotype):
            return NotImplemented
        return self.b == other.b and self.v == other.v and np.array_equal(self.w, other.w)


@dataclass(frozen=True)
class EvolutionParams:
    mu_mod: float = 0.05
    mu_visual: float = 0.008
    strategy: str = MUTATION
    min_visual_angle: float = 1e-6
    distinct_parents: bool = False

    def __post_init__(self):
        if self.mu_mod < 0 or self.mu_visual < 0:
            raise ValueError("mutation standard deviations must be non-negative")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")

    @classmethod
    def from_config(cls, cfg) -> "EvolutionParams":
        return cls(mu_mod=cfg.mu_mod, mu_visual=cfg.mu_visual, strategy=cfg.strategy,
                   min_visual_angle=cfg.min_visual_angle, distinct_parents=cfg.distinct_parents)


def random_phenotype(rng: np.random.Generator, n: int = 30, weight_scale: float = 0.5,
                     b: float = 0.01, v: float = math.pi / 2) -> Phenotype:
    w = rng.uniform(-weight_scale, weight_scale, size=(n, n))
    np.fill_diagonal(w, 0.0)
    return Phenotype(w, b, v)


def fitness(captures: int, age: int) -> float:
    """Captures per time-step of life."""
    if age < 1:
        raise ValueError("age must be at least 1")
    return captures / age


def mutate(p: Phenotype, params: EvolutionParams, rng: np.random.Generator) -> Phenotype:
    """Gaussian perturbation of every gene; ``b`` and ``v`` are clamped afterwards."""
    n = p.w.shape[0]
    noise = rng.normal(0.0, params.mu_mod, size=(n, n))
    np.fill_diagonal(noise, 0.0)
    w = p.w + noise
    b = min(max(p.b + rng.normal(0.0, params.mu_mod), 0.0), 1.0)
    v = min(max(p.v + rng.normal(0.0, params.mu_visual), params.min_visual_angle), TWO_PI)
    return Phenotype(w, b, v)


def crossover(p1: Phenotype, p2: Phenotype) -> tuple[Phenotype, Phenotype]:
    """Swap the right half of the weight columns; ``b`` and ``v`` follow their own parent."""
    if p1.w.shape != p2.w.shape:
        raise ValueError(f"cannot cross {p1.w.shape} with {p2.w.shape} weight matrices")
    k = p1.w.shape[1]
    if k % 2:
        raise ValueError("crossover needs an even matrix dimension")
    w3, w4 = p1.w.copy(), p2.w.copy()
    w3[:, k // 2:] = p2.w[:, k // 2:]
    w4[:, k // 2:] = p1.w[:, k // 2:]
    return Phenotype(w3, p1.b, p1.v), Phenotype(w4, p2.b, p2.v)


class PopulationLike(Protocol):
    ids: np.ndarray
    captures: np.ndarray
    age: np.ndarray

    def __len__(self) -> int: ...
    def remove(self, slots: Sequence[int]) -> None: ...
    def add(self, phenotype: Phenotype, generation: int) -> int: ...
    def phenotype(self, slot: int) -> Phenotype: ...


def least_fit(pop: PopulationLike, count: int, exclude: Sequence[int] = ()) -> list[int]:
    """Slots of the ``count`` least fit bots, ties broken oldest first, then lowest id."""
    skip = set(int(i) for i in exclude)
    ranked = sorted(
        (Fraction(int(pop.captures[s]), int(pop.age[s])), -int(pop.age[s]), int(pop.ids[s]), s)
        for s in range(len(pop)) if int(pop.ids[s]) not in skip
    )
    return [r[3] for r in ranked[:count]]


@dataclass
class Evolver:
    """Applies one inheritance strategy to a population, one capture event at a time."""

    params: EvolutionParams
    rng: np.random.Generator
    generation: int = 0
    queue: list[tuple[int, Phenotype]] = field(default_factory=list)

    def on_capture(self, pop: PopulationLike, bot_id: int, phenotype: Phenotype) -> list[int]:
        """Handle one capture by ``bot_id``; returns the ids of any newborns."""
        if self.params.strategy == MUTATION:
            child = mutate(phenotype, self.params, self.rng)
            new = [pop.add(child, self.generation + 1)]
        else:
            if self.params.distinct_parents and any(pid == bot_id for pid, _ in self.queue):
                return []
            self.queue.append((bot_id, phenotype.copy()))
            if len(self.queue) < 2:
                return []
            (_, p1), (_, p2) = self.queue[:2]
            del self.queue[:2]
            c3, c4 = crossover(p1, p2)
            c3 = mutate(c3, self.params, self.rng)
            c4 = mutate(c4, self.params, self.rng)
            new = [pop.add(c3, self.generation + 1), pop.add(c4, self.generation + 1)]
        pop.remove(least_fit(pop, len(new), exclude=new))
        self.generation += 1
        return new


def on_capture(pop: PopulationLike, capturer_ids: Sequence[int], params: EvolutionParams,
               rng: np.random.Generator, evolver: Evolver | None = None) -> Evolver:
    """Process a batch of capture events in order; returns the (possibly new) evolver.

    Capturers must still be present in ``pop``.  The experiment loop uses
    :meth:`Evolver.on_capture` directly with phenotype snapshots instead.
    """
    evolver = evolver or Evolver(params, rng)
    for bot_id in capturer_ids:
        slot = int(np.flatnonzero(pop.ids == bot_id)[0])
        evolver.on_capture(pop, bot_id, pop.phenotype(slot))
    return evolver
