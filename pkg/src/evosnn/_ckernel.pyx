# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stepping kernel.

Same contract and the same floating-point operation order as
:func:`evosnn._pykernel.advance`; the two are required to agree bit for bit.
Spontaneous-firing uniforms are drawn straight from each bot's numpy
BitGenerator, so the per-bot streams are shared with the Python path.
"""
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport atan2, cos, floor, sin
from libc.stdlib cimport free, malloc
from numpy.random cimport bitgen_t

NAME = "compiled"

cdef double PI = 3.141592653589793
cdef double TWO_PI = 2.0 * 3.141592653589793

cdef enum:
    FORWARD = 0
    BACKWARD = 1
    TURN_CW = 2
    TURN_CCW = 3
    RADIAL0 = 4
    ANGULAR0 = 7
    MAX_N = 1024


cdef inline void _reflect(double* x, double* y, double* th, double width, double height) noexcept nogil:
    if x[0] > width:
        x[0] = width
        th[0] = PI - th[0]
    elif x[0] < 0.0:
        x[0] = 0.0
        th[0] = PI - th[0]
    if y[0] > height:
        y[0] = height
        th[0] = -th[0]
    elif y[0] < 0.0:
        y[0] = 0.0
        th[0] = -th[0]


def advance(double[:, ::1] pose, double[:, :, ::1] W, double[::1] b, double[::1] v,
            double[:, ::1] V, unsigned char[:, ::1] A, long long[::1] age, double[:, ::1] food,
            list rngs, kp, long long max_steps):
    cdef Py_ssize_t n_bots = pose.shape[0]
    cdef Py_ssize_t n = W.shape[1]
    cdef Py_ssize_t n_food = food.shape[0]
    cdef Py_ssize_t k, i, j, f, best
    cdef double v_th = kp.v_th
    cdef double beta = kp.beta
    cdef bint inverted = kp.inverted
    cdef double width = kp.width
    cdef double height = kp.height
    cdef double move_step = kp.move_step
    cdef double turn_step = kp.turn_step
    cdef double bsq0 = kp.band_sq[0]
    cdef double bsq1 = kp.band_sq[1]
    cdef double bsq2 = kp.band_sq[2]
    cdef double cap = kp.capture_dist_sq
    cdef double x, y, th, dx, dy, d2, rel, half, r, bk, d, best_d2
    cdef long long a, rad, net, rot, steps = 0
    cdef bint spont, any_capture = False
    cdef double q[MAX_N]
    cdef unsigned char drive[MAX_N]
    cdef unsigned char fired
    cdef bitgen_t** gens

    if n > MAX_N:
        raise ValueError(f"at most {MAX_N} neurons supported")
    if len(rngs) != n_bots:
        raise ValueError("need one generator per bot")
    capsules = [g.bit_generator.capsule for g in rngs]
    locks = [g.bit_generator.lock for g in rngs]
    gens = <bitgen_t**>malloc(max(n_bots, 1) * sizeof(bitgen_t*))
    if gens == NULL:
        raise MemoryError()
    for k in range(n_bots):
        gens[k] = <bitgen_t*>PyCapsule_GetPointer(capsules[k], "BitGenerator")
    pairs = []
    for lock in locks:
        lock.acquire()
    try:
        with nogil:
            while steps < max_steps:
                for k in range(n_bots):
                    x = pose[k, 0]
                    y = pose[k, 1]
                    th = pose[k, 2]
                    for i in range(n):
                        drive[i] = 0
                    half = 0.5 * v[k]
                    for f in range(n_food):
                        dx = food[f, 0] - x
                        dy = food[f, 1] - y
                        d2 = dx * dx + dy * dy
                        if d2 > bsq2:
                            continue
                        rel = atan2(dy, dx) - th
                        rel = rel - TWO_PI * floor((rel + PI) / TWO_PI)
                        if v[k] < TWO_PI and (rel < -half or rel > half):
                            continue
                        a = <long long>floor((rel + half) / (v[k] / 3.0))
                        if a < 0:
                            a = 0
                        elif a > 2:
                            a = 2
                        if d2 < bsq0:
                            rad = 0
                        elif d2 < bsq1:
                            rad = 1
                        else:
                            rad = 2
                        drive[RADIAL0 + rad] = 1
                        drive[ANGULAR0 + a] = 1

                    for i in range(n):
                        if A[k, i]:
                            V[k, i] = 0.0
                        q[i] = 0.0
                    for j in range(n):
                        if A[k, j] or drive[j]:
                            for i in range(n):
                                q[i] = q[i] + W[k, i, j]
                    bk = b[k]
                    for i in range(n):
                        V[k, i] = V[k, i] + q[i] - beta * V[k, i]
                        if drive[i]:
                            V[k, i] = 0.0
                        r = gens[k].next_double(gens[k].state)
                        if inverted:
                            spont = r > bk
                        else:
                            spont = r < bk
                        fired = 1 if (V[k, i] > v_th or spont) else 0
                        A[k, i] = fired

                    net = <long long>A[k, FORWARD] - <long long>A[k, BACKWARD]
                    if net != 0:
                        d = net * move_step
                        x = x + d * cos(th)
                        y = y + d * sin(th)
                    rot = <long long>A[k, TURN_CCW] - <long long>A[k, TURN_CW]
                    if rot != 0:
                        th = th + rot * turn_step
                    _reflect(&x, &y, &th, width, height)
                    pose[k, 0] = x
                    pose[k, 1] = y
                    pose[k, 2] = th

                for f in range(n_food):
                    x = food[f, 0] + food[f, 3] * cos(food[f, 2])
                    y = food[f, 1] + food[f, 3] * sin(food[f, 2])
                    th = food[f, 2]
                    _reflect(&x, &y, &th, width, height)
                    food[f, 0] = x
                    food[f, 1] = y
                    food[f, 2] = th

                for k in range(n_bots):
                    age[k] += 1
                steps += 1

                any_capture = False
                for f in range(n_food):
                    best = -1
                    best_d2 = cap
                    for k in range(n_bots):
                        dx = pose[k, 0] - food[f, 0]
                        dy = pose[k, 1] - food[f, 1]
                        d2 = dx * dx + dy * dy
                        if d2 < best_d2:
                            best = k
                            best_d2 = d2
                    if best >= 0:
                        any_capture = True
                        with gil:
                            pairs.append((best, f))
                if any_capture:
                    break
    finally:
        for lock in locks:
            lock.release()
        free(gens)
    return steps, pairs
