"""Discrete-time leaky integrate-and-fire network driving one bot.

Neuron layout (fixed): indices 0-3 are motor neurons, 4-6 fire for food in
the three radial bands, 7-9 for food in the three angular sectors; the rest
are interneurons.  ``w[i, j]`` is the weight from sender ``j`` to receiver ``i``.

Per step, in this order:

1. neurons that fired on the previous step are reset to ``V = 0``;
2. the incoming charge is ``q = w @ a`` where ``a`` is the previous step's
   fired vector OR-ed with the sensory drive;
3. ``V <- V + q - beta * V``;
4. sensory neurons that are externally driven this step are held at 0;
5. a neuron fires if ``V > v_th`` or, spontaneously, if its uniform draw
   ``r < b`` (``r > b`` when ``spontaneous_inverted``).

Exactly ``n`` uniforms are drawn per step, neuron 0 first.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_NEURONS = 30
MOTOR = (0, 1, 2, 3)
FORWARD, BACKWARD, TURN_CW, TURN_CCW = MOTOR
RADIAL = (4, 5, 6)
ANGULAR = (7, 8, 9)
SENSORY = RADIAL + ANGULAR


@dataclass(frozen=True)
class SnnParams:
    v_th: float = 0.4
    beta: float = 0.01
    spontaneous_inverted: bool = False

    def __post_init__(self):
        if not self.v_th > 0:
            raise ValueError(f"v_th must be positive, got {self.v_th}")
        if not 0 <= self.beta < 1:
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")

    @classmethod
    def from_config(cls, cfg) -> "SnnParams":
        return cls(v_th=cfg.v_th, beta=cfg.beta, spontaneous_inverted=cfg.spontaneous_inverted)


@dataclass
class NeuronState:
    """Membrane potentials and the fired flags of the most recent step."""

    V: np.ndarray
    A: np.ndarray = field(default=None)

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=np.float64)
        if self.A is None:
            self.A = np.zeros(self.V.shape, dtype=bool)
        self.A = np.asarray(self.A, dtype=bool)
        if self.V.shape != self.A.shape or self.V.ndim != 1:
            raise ValueError("V and A must be 1-D arrays of equal length")

    @classmethod
    def zeros(cls, n: int = N_NEURONS) -> "NeuronState":
        return cls(np.zeros(n), np.zeros(n, dtype=bool))

    def copy(self) -> "NeuronState":
        return NeuronState(self.V.copy(), self.A.copy())


def check_weights(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"weight matrix must be square, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weight matrix has non-finite entries")
    if np.any(np.diagonal(w) != 0):
        raise ValueError("weight matrix must have a zero diagonal (no self-connections)")
    return w


def incoming_charge(w: np.ndarray, active: np.ndarray) -> np.ndarray:
    """``w @ active`` for a binary ``active``, summed column by column in index order.

    The explicit accumulation order matches the compiled kernel bit for bit.
    """
    q = np.zeros(w.shape[0])
    for j in np.flatnonzero(active):
        q = q + w[:, j]
    return q


def integrate(V: np.ndarray, A_prev: np.ndarray, drive: np.ndarray, w: np.ndarray,
              beta: float) -> np.ndarray:
    """Steps 1-4 of the update: reset, charge, leak, clamp driven sensors."""
    V = np.where(A_prev, 0.0, V)
    q = incoming_charge(w, A_prev | drive)
    V = V + q - beta * V
    V[drive] = 0.0
    return V


def fire(V: np.ndarray, r: np.ndarray, b: float, params: SnnParams) -> np.ndarray:
    spont = (r > b) if params.spontaneous_inverted else (r < b)
    return (V > params.v_th) | spont


def step_network(state: NeuronState, w: np.ndarray, b: float, params: SnnParams,
                 sensory_drive: np.ndarray | None, rng: np.random.Generator
                 ) -> tuple[NeuronState, np.ndarray]:
    """Advance one network by one time-step.

    Returns the new state and the fired vector (also stored as ``state.A``).
    The input state is not modified.
    """
    n = state.V.shape[0]
    drive = np.zeros(n, dtype=bool) if sensory_drive is None else np.asarray(sensory_drive, dtype=bool)
    V = integrate(state.V, state.A, drive, w, params.beta)
    fired = fire(V, rng.random(n), b, params)
    return NeuronState(V, fired), fired.copy()
