"""Pure-Python stepping kernel (fallback for :mod:`evosnn._ckernel`)."""
from __future__ import annotations

import math

import numpy as np

from . import snn
from .arena import Geometry, capture_pairs, move, reflect, sight

NAME = "python"


def advance(pose, W, b, v, V, A, age, food, rngs, kp, max_steps):
    """Advance bots and food until a step yields a capture or ``max_steps`` elapse.

    Arrays are updated in place.  Returns ``(steps_taken, [(slot, food_index), ...])``
    where the capture list belongs to the last step taken.
    """
    n_bots = len(pose)
    n = W.shape[1] if n_bots else 0
    params = snn.SnnParams(kp.v_th, kp.beta, kp.inverted)
    geometry = Geometry(kp.width, kp.height, kp.move_step, kp.turn_step, kp.band_sq,
                        kp.capture_dist_sq)
    pairs: list[tuple[int, int]] = []
    steps = 0
    while steps < max_steps:
        for k in range(n_bots):
            x, y, th = pose[k]
            drive = np.zeros(n, dtype=bool)
            for f in range(len(food)):
                hit = sight(x, y, th, v[k], food[f, 0], food[f, 1], kp.band_sq)
                if hit is not None:
                    drive[snn.RADIAL[hit[0]]] = True
                    drive[snn.ANGULAR[hit[1]]] = True
            V[k] = snn.integrate(V[k], A[k].astype(bool), drive, W[k], kp.beta)
            fired = snn.fire(V[k], rngs[k].random(n), b[k], params)
            A[k] = fired
            pose[k] = move(float(x), float(y), float(th), fired, geometry)
        for f in range(len(food)):
            fx, fy, fth, sp = food[f]
            food[f, :3] = reflect(fx + sp * math.cos(fth), fy + sp * math.sin(fth), fth,
                                  kp.width, kp.height)
        age += 1
        steps += 1
        pairs = capture_pairs(pose, food, kp.capture_dist_sq)
        if pairs:
            break
    return steps, pairs

