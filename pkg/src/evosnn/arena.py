"""The 2-D arena: bots, moving food, reflective walls and capture detection.

The population is stored as parallel arrays (poses, weights, membrane
potentials, ...) so that a stepping kernel can advance all bots between
capture events without touching Python objects.  Slots are always kept in
ascending bot-id order; new bots get the next unused id and go at the end.

The per-entity functions (:func:`sense`, :func:`apply_motor`, :func:`reflect`,
:func:`detect_captures`) are the reference semantics; the pure-Python kernel
is written in terms of them and the compiled kernel is checked against it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from . import rng as rngmod
from . import snn
from .config import ArenaConfig, Config, SnnConfig
from .evolution import Phenotype, random_phenotype

TWO_PI = 2 * math.pi


@dataclass
class FoodState:
    x: float
    y: float
    theta: float
    speed: float


@dataclass
class BotState:
    x: float
    y: float
    theta: float
    phenotype: Phenotype
    neurons: snn.NeuronState = None
    captures: int = 0
    age: int = 1
    id: int = 0
    birth_generation: int = 0

    def __post_init__(self):
        if self.neurons is None:
            self.neurons = snn.NeuronState.zeros(self.phenotype.w.shape[0])


@dataclass(frozen=True)
class VisionReport:
    radial_hits: tuple[bool, bool, bool] = (False, False, False)
    angular_hits: tuple[bool, bool, bool] = (False, False, False)


@dataclass(frozen=True)
class Geometry:
    """Arena constants in the form the kernels consume."""

    width: float = 500.0
    height: float = 500.0
    move_step: float = 1.0
    turn_step: float = 0.1
    band_sq: tuple[float, float, float] = (900.0, 3600.0, 10000.0)
    capture_dist_sq: float = 13.0

    @classmethod
    def from_config(cls, cfg: ArenaConfig) -> "Geometry":
        return cls(cfg.width, cfg.height, cfg.move_step, cfg.turn_step,
                   tuple(r * r for r in cfg.radial_bands), cfg.capture_dist_sq)


def wrap_angle(a: float) -> float:
    """Map an angle into [-pi, pi)."""
    return a - TWO_PI * math.floor((a + math.pi) / TWO_PI)


def sight(x: float, y: float, theta: float, v: float, fx: float, fy: float,
          band_sq: Sequence[float]) -> tuple[int, int] | None:
    """(radial band, angular sector) in which a bot sees one food item, or None.

    Bands are [0, r0), [r0, r1), [r1, r2]; sectors trisect [-v/2, v/2] with
    half-open [lo, hi) boundaries except the last, which includes +v/2.
    Sector 0 is on the clockwise side.
    """
    dx = fx - x
    dy = fy - y
    d2 = dx * dx + dy * dy
    if d2 > band_sq[2]:
        return None
    rel = wrap_angle(math.atan2(dy, dx) - theta)
    half = 0.5 * v
    if v < TWO_PI and (rel < -half or rel > half):
        return None
    a = math.floor((rel + half) / (v / 3.0))
    a = 0 if a < 0 else (2 if a > 2 else a)
    r = 0 if d2 < band_sq[0] else (1 if d2 < band_sq[1] else 2)
    return r, a


def sense(bot: BotState, food: Sequence[FoodState], geometry: Geometry = Geometry()) -> VisionReport:
    radial = [False] * 3
    angular = [False] * 3
    for f in food:
        hit = sight(bot.x, bot.y, bot.theta, bot.phenotype.v, f.x, f.y, geometry.band_sq)
        if hit is not None:
            radial[hit[0]] = True
            angular[hit[1]] = True
    return VisionReport(tuple(radial), tuple(angular))


def vision_to_sensory_drive(report: VisionReport, n: int = snn.N_NEURONS) -> np.ndarray:
    drive = np.zeros(n, dtype=bool)
    for idx, hit in zip(snn.RADIAL, report.radial_hits):
        drive[idx] = hit
    for idx, hit in zip(snn.ANGULAR, report.angular_hits):
        drive[idx] = hit
    return drive


def reflect(x: float, y: float, theta: float, width: float, height: float
            ) -> tuple[float, float, float]:
    """Clamp a position into the arena, mirroring the heading off any wall crossed."""
    if x > width:
        x, theta = width, math.pi - theta
    elif x < 0.0:
        x, theta = 0.0, math.pi - theta
    if y > height:
        y, theta = height, -theta
    elif y < 0.0:
        y, theta = 0.0, -theta
    return x, y, theta


def move(x: float, y: float, theta: float, fired: Sequence, geometry: Geometry
         ) -> tuple[float, float, float]:
    """Kinematics of one step: translate along the old heading, then rotate, then reflect.

    Opposing motor pairs cancel exactly.
    """
    net = int(fired[snn.FORWARD]) - int(fired[snn.BACKWARD])
    if net:
        d = net * geometry.move_step
        x = x + d * math.cos(theta)
        y = y + d * math.sin(theta)
    rot = int(fired[snn.TURN_CCW]) - int(fired[snn.TURN_CW])
    if rot:
        theta = theta + rot * geometry.turn_step
    return reflect(x, y, theta, geometry.width, geometry.height)


def apply_motor(bot: BotState, fired: Sequence, geometry: Geometry = Geometry()) -> BotState:
    x, y, theta = move(bot.x, bot.y, bot.theta, fired, geometry)
    return BotState(x, y, theta, bot.phenotype, bot.neurons, bot.captures, bot.age, bot.id,
                    bot.birth_generation)


def move_food(f: FoodState, geometry: Geometry = Geometry()) -> FoodState:
    x = f.x + f.speed * math.cos(f.theta)
    y = f.y + f.speed * math.sin(f.theta)
    return FoodState(*reflect(x, y, f.theta, geometry.width, geometry.height), f.speed)


def capture_pairs(bot_xy: np.ndarray, food_xy: np.ndarray, capture_dist_sq: float
                  ) -> list[tuple[int, int]]:
    """(bot slot, food index) for every food item within reach of some bot.

    Each food goes to the nearest bot; equal distances go to the lower slot.
    """
    out = []
    for f in range(len(food_xy)):
        fx, fy = food_xy[f, 0], food_xy[f, 1]
        best, best_d2 = -1, capture_dist_sq
        for k in range(len(bot_xy)):
            dx = bot_xy[k, 0] - fx
            dy = bot_xy[k, 1] - fy
            d2 = dx * dx + dy * dy
            if d2 < best_d2:
                best, best_d2 = k, d2
        if best >= 0:
            out.append((best, f))
    return out


def detect_captures(bots: Sequence[BotState], food: Sequence[FoodState],
                    capture_dist_sq: float = 13.0) -> list[tuple[int, int]]:
    """(bot id, food index) pairs; ties between bots go to the lower id."""
    order = sorted(range(len(bots)), key=lambda i: bots[i].id)
    bot_xy = np.array([[bots[i].x, bots[i].y] for i in order], dtype=np.float64).reshape(-1, 2)
    food_xy = np.array([[f.x, f.y] for f in food], dtype=np.float64).reshape(-1, 2)
    return [(bots[order[k]].id, f) for k, f in capture_pairs(bot_xy, food_xy, capture_dist_sq)]


def spawn_food(rng, cfg: ArenaConfig = ArenaConfig()) -> FoodState:
    """New food at a uniform position and heading; consumes exactly four uniforms."""
    u = rng.random(4)
    return FoodState(u[0] * cfg.width, u[1] * cfg.height, u[2] * TWO_PI, u[3] * cfg.food_speed_max)


class Population:
    """Bots as parallel arrays, slots sorted by id."""

    def __init__(self, n_neurons: int, seed: int, width: float = 500.0, height: float = 500.0):
        self.n_neurons = n_neurons
        self.seed = seed
        self.width = width
        self.height = height
        n = n_neurons
        self.ids = np.zeros(0, dtype=np.int64)
        self.birth_generation = np.zeros(0, dtype=np.int64)
        self.pose = np.zeros((0, 3))
        self.W = np.zeros((0, n, n))
        self.b = np.zeros(0)
        self.v = np.zeros(0)
        self.V = np.zeros((0, n))
        self.A = np.zeros((0, n), dtype=np.uint8)
        self.captures = np.zeros(0, dtype=np.int64)
        self.age = np.zeros(0, dtype=np.int64)
        self.rngs: list[np.random.Generator] = []
        self.next_id = 0
        self.pose_rng = rngmod.stream(seed, rngmod.POSE)

    def __len__(self) -> int:
        return len(self.ids)

    def add(self, phenotype: Phenotype, generation: int) -> int:
        """Append a newborn at a random pose; returns its id."""
        if phenotype.w.shape != (self.n_neurons, self.n_neurons):
            raise ValueError(f"expected a {self.n_neurons}x{self.n_neurons} weight matrix")
        bid = self.next_id
        self.next_id += 1
        u = self.pose_rng.random(3)
        pose = np.array([u[0] * self.width, u[1] * self.height, u[2] * TWO_PI])
        n = self.n_neurons
        self.ids = np.append(self.ids, bid)
        self.birth_generation = np.append(self.birth_generation, generation)
        self.pose = np.vstack([self.pose, pose[None]])
        self.W = np.concatenate([self.W, phenotype.w[None]])
        self.b = np.append(self.b, phenotype.b)
        self.v = np.append(self.v, phenotype.v)
        self.V = np.vstack([self.V, np.zeros((1, n))])
        self.A = np.vstack([self.A, np.zeros((1, n), dtype=np.uint8)])
        self.captures = np.append(self.captures, 0)
        self.age = np.append(self.age, 1)
        self.rngs.append(rngmod.bot_stream(self.seed, bid))
        return bid

    def remove(self, slots: Sequence[int]) -> None:
        keep = np.ones(len(self), dtype=bool)
        keep[list(slots)] = False
        for name in ("ids", "birth_generation", "pose", "W", "b", "v", "V", "A", "captures", "age"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name)[keep]))
        self.rngs = [g for g, k in zip(self.rngs, keep) if k]

    def slot(self, bot_id: int) -> int:
        hits = np.flatnonzero(self.ids == bot_id)
        if not len(hits):
            raise KeyError(bot_id)
        return int(hits[0])

    def phenotype(self, slot: int) -> Phenotype:
        return Phenotype(self.W[slot].copy(), float(self.b[slot]), float(self.v[slot]))

    def bot(self, slot: int) -> BotState:
        x, y, th = (float(c) for c in self.pose[slot])
        return BotState(x, y, th, self.phenotype(slot),
                        snn.NeuronState(self.V[slot].copy(), self.A[slot].astype(bool)),
                        int(self.captures[slot]), int(self.age[slot]), int(self.ids[slot]),
                        int(self.birth_generation[slot]))

    def bots(self) -> list[BotState]:
        return [self.bot(s) for s in range(len(self))]


@dataclass
class CaptureEvent:
    timestep: int
    bot_id: int
    food_index: int
    phenotype: Phenotype = field(repr=False, default=None)


@dataclass(frozen=True)
class KernelParams:
    """Flat parameter block handed to a stepping kernel."""

    v_th: float
    beta: float
    inverted: bool
    width: float
    height: float
    move_step: float
    turn_step: float
    band_sq: tuple[float, float, float]
    capture_dist_sq: float

    @classmethod
    def build(cls, snn_cfg: SnnConfig, geometry: Geometry) -> "KernelParams":
        return cls(snn_cfg.v_th, snn_cfg.beta, snn_cfg.spontaneous_inverted, geometry.width,
                   geometry.height, geometry.move_step, geometry.turn_step, geometry.band_sq,
                   geometry.capture_dist_sq)


class Arena:
    """Complete simulation state: population, food, random streams and counters."""

    def __init__(self, cfg: Config, seed: int | None = None, backend=None,
                 phenotypes: Sequence[Phenotype] | None = None):
        from . import backend as backend_mod

        self.cfg = cfg
        self.seed = cfg.experiment.seed if seed is None else seed
        self.geometry = Geometry.from_config(cfg.arena)
        self.kparams = KernelParams.build(cfg.snn, self.geometry)
        self.kernel = backend_mod.get(backend)
        self.timestep = 0
        self.food_rng = rngmod.stream(self.seed, rngmod.FOOD)
        self.evo_rng = rngmod.stream(self.seed, rngmod.EVOLUTION)

        self.pop = Population(cfg.snn.n_neurons, self.seed, cfg.arena.width, cfg.arena.height)
        ev = cfg.evolution
        if phenotypes is None:
            phenotypes = [random_phenotype(self.evo_rng, cfg.snn.n_neurons, ev.init_weight_scale,
                                           ev.init_b, ev.init_v) for _ in range(cfg.arena.n_bots)]
        for p in phenotypes:
            self.pop.add(p, 0)
        self.food = np.zeros((cfg.arena.n_food, 4))
        for i in range(cfg.arena.n_food):
            self.respawn(i)

    def respawn(self, index: int) -> None:
        f = spawn_food(self.food_rng, self.cfg.arena)
        self.food[index] = (f.x, f.y, f.theta, f.speed)

    def food_states(self) -> list[FoodState]:
        return [FoodState(*map(float, row)) for row in self.food]

    def advance(self, max_steps: int) -> list[CaptureEvent]:
        """Step until the first step that produces a capture, or ``max_steps`` steps.

        Captured food is replaced and capture counts updated before returning.
        """
        p = self.pop
        steps, pairs = self.kernel.advance(p.pose, p.W, p.b, p.v, p.V, p.A, p.age, self.food,
                                           p.rngs, self.kparams, max_steps)
        self.timestep += steps
        events = []
        for slot, f in pairs:
            p.captures[slot] += 1
            events.append(CaptureEvent(self.timestep, int(p.ids[slot]), f, p.phenotype(slot)))
        for _, f in pairs:
            self.respawn(f)
        return events

    def step(self) -> list[CaptureEvent]:
        return self.advance(1)

    def snapshot(self) -> dict:
        """Plain-data copy of the full state, for equality checks."""
        p = self.pop
        return {
            "timestep": self.timestep,
            "ids": p.ids.copy(), "pose": p.pose.copy(), "W": p.W.copy(), "b": p.b.copy(),
            "v": p.v.copy(), "V": p.V.copy(), "A": p.A.copy(), "captures": p.captures.copy(),
            "age": p.age.copy(), "food": self.food.copy(),
            "rng": [g.bit_generator.state["state"] for g in p.rngs],
            "food_rng": self.food_rng.bit_generator.state["state"],
        }

    def dump_record(self) -> str:
        """One trajectory-dump line (JSON object) describing the current step."""
        p = self.pop
        rec = {
            "t": self.timestep,
            "bots": [[int(p.ids[s]), *map(float, p.pose[s]), int(p.A[s].sum())] for s in range(len(p))],
            "food": [[float(r[0]), float(r[1])] for r in self.food],
        }
        return json.dumps(rec, separators=(",", ":"))


def arena_step(state: Arena) -> tuple[Arena, list[CaptureEvent]]:
    """Advance every entity by exactly one time-step (in place)."""
    return state, state.step()


def write_dump_header(fh: IO[str]) -> None:
    fh.write(json.dumps({"format": "evosnn-trajectory-dump", "version": 1,
                         "bots": ["id", "x", "y", "theta", "spikes"], "food": ["x", "y"]}) + "\n")
