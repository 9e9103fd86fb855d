import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import stats

from evosnn import arena as ar
from evosnn import snn
from evosnn.arena import (Arena, BotState, FoodState, Geometry, VisionReport, apply_motor,
                          detect_captures, reflect, sense, spawn_food, vision_to_sensory_drive)
from evosnn.config import Config
from evosnn.evolution import Phenotype

N = snn.N_NEURONS


def bot(x=100.0, y=100.0, theta=0.0, v=math.pi / 2, bid=0):
    return BotState(x, y, theta, Phenotype(np.zeros((N, N)), 0.0, v), id=bid)


def oracle_sight(bx, by, theta, v, fx, fy):
    """Independent band/sector computation via complex arithmetic."""
    z = complex(fx - bx, fy - by)
    d = abs(z)
    if d > 100:
        return None
    rel = np.angle(z * np.exp(-1j * theta))  # in (-pi, pi]
    if abs(rel) > v / 2:
        return None
    r = 0 if d < 30 else (1 if d < 60 else 2)
    a = min(int((rel + v / 2) // (v / 3)), 2)
    return r, a


# --- sense ------------------------------------------------------------------

def test_food_dead_ahead():
    rep = sense(bot(), [FoodState(120.0, 100.0, 0.0, 0.0)])
    assert rep == VisionReport((True, False, False), (False, True, False))
    assert oracle_sight(100, 100, 0, math.pi / 2, 120, 100) == (0, 1)


def test_nothing_in_range():
    assert sense(bot(), [FoodState(300.0, 300.0, 0, 0)]) == VisionReport()


def test_food_behind():
    assert sense(bot(), [FoodState(80.0, 100.0, 0, 0)]) == VisionReport()


@pytest.mark.parametrize("dist,band", [(29.999, 0), (30.0, 1), (59.99, 1), (60.0, 2), (100.0, 2)])
def test_radial_band_edges(dist, band):
    rep = sense(bot(), [FoodState(100.0 + dist, 100.0, 0, 0)])
    assert rep.radial_hits == tuple(i == band for i in range(3))


def test_outer_edge_excluded_beyond_range():
    assert sense(bot(), [FoodState(200.001, 100.0, 0, 0)]) == VisionReport()


def test_angular_edge_is_inclusive():
    v = 1.2
    b = bot(v=v, theta=0.0)
    for sign, sector in ((1, 2), (-1, 0)):
        # place food just inside the half-angle so rounding of atan2 cannot push it out
        ang = sign * (v / 2 - 1e-12)
        rep = sense(b, [FoodState(100 + 50 * math.cos(ang), 100 + 50 * math.sin(ang), 0, 0)])
        assert rep.angular_hits == tuple(i == sector for i in range(3))
    # exact boundary through the pure helper
    assert ar.sight(0.0, 0.0, 0.0, 2 * math.atan2(1.0, 1.0), 1.0, 1.0, (900, 3600, 10000)) == (0, 2)


def test_clockwise_sector_is_index_zero():
    rep = sense(bot(theta=0.0), [FoodState(100 + 50 * math.cos(-0.6), 100 + 50 * math.sin(-0.6), 0, 0)])
    assert rep.angular_hits == (True, False, False)


def test_multiple_food_or_together():
    food = [FoodState(120.0, 100.0, 0, 0), FoodState(100 + 80 * math.cos(0.5), 100 + 80 * math.sin(0.5), 0, 0)]
    rep = sense(bot(), food)
    assert rep == VisionReport((True, False, True), (False, True, True))


def test_full_circle_view_sees_behind():
    rep = sense(bot(v=2 * math.pi), [FoodState(80.0, 100.0, 0, 0)])
    assert rep.radial_hits == (True, False, False)
    assert any(rep.angular_hits)


@given(bx=st.floats(100, 400), by=st.floats(100, 400), theta=st.floats(-10, 10),
       v=st.floats(0.05, 2 * math.pi - 0.01), dist=st.floats(0.5, 120), ang=st.floats(-math.pi, math.pi))
@settings(max_examples=300, deadline=None)
def test_sense_matches_geometry_oracle(bx, by, theta, v, dist, ang):
    fx, fy = bx + dist * math.cos(theta + ang), by + dist * math.sin(theta + ang)
    z = complex(fx - bx, fy - by)
    rel = np.angle(z * np.exp(-1j * theta))
    d = abs(z)
    # stay clear of band and sector boundaries where rounding decides
    assume(min(abs(d - r) for r in (30, 60, 100)) > 1e-6)
    assume(min(abs(rel - (-v / 2 + i * v / 3)) for i in range(4)) > 1e-6)
    assume(abs(abs(rel) - math.pi) > 1e-6)
    got = ar.sight(bx, by, theta, v, fx, fy, (900.0, 3600.0, 10000.0))
    assert got == oracle_sight(bx, by, theta, v, fx, fy)


@given(theta=st.floats(-math.pi, math.pi), rot=st.floats(-math.pi, math.pi),
       pts=st.lists(st.tuples(st.floats(0.5, 110), st.floats(-math.pi, math.pi)), min_size=1, max_size=5))
@settings(max_examples=200, deadline=None)
def test_sense_is_rotation_consistent(theta, rot, pts):
    v = math.pi / 2
    for dist, ang in pts:
        assume(min(abs(dist - r) for r in (30, 60, 100)) > 1e-6)
        assume(min(abs(ang - (-v / 2 + i * v / 3)) for i in range(4)) > 1e-6)
        assume(abs(abs(ang) - math.pi) > 1e-6)
    c = (250.0, 250.0)

    def place(heading):
        food = [FoodState(c[0] + d * math.cos(heading + a), c[1] + d * math.sin(heading + a), 0, 0)
                for d, a in pts]
        return sense(bot(*c, theta=heading, v=v), food)

    assert place(theta) == place(theta + rot)


# --- sensory mapping -----------------------------------------------------------

def test_drive_indices():
    d = vision_to_sensory_drive(VisionReport((True, False, False), (False, True, False)))
    assert set(np.flatnonzero(d)) == {4, 8}
    assert not vision_to_sensory_drive(VisionReport()).any()
    full = vision_to_sensory_drive(VisionReport((True,) * 3, (True,) * 3))
    assert set(np.flatnonzero(full)) == set(range(4, 10))


@given(st.tuples(st.booleans(), st.booleans(), st.booleans()), st.tuples(st.booleans(), st.booleans(), st.booleans()))
def test_drive_round_trip(radial, angular):
    d = vision_to_sensory_drive(VisionReport(radial, angular))
    assert tuple(d[4:7]) == radial and tuple(d[7:10]) == angular
    assert not d[:4].any() and not d[10:].any()


# --- motors and walls --------------------------------------------------------------

def fired(*idx):
    f = np.zeros(N, dtype=bool)
    f[list(idx)] = True
    return f


def test_forward_step():
    b = apply_motor(bot(100.0, 100.0, 0.0), fired(0))
    assert (b.x, b.y, b.theta) == (101.0, 100.0, 0.0)


def test_backward_step():
    b = apply_motor(bot(100.0, 100.0, math.pi / 2), fired(1))
    assert b.x == pytest.approx(100.0) and b.y == 99.0


def test_turns():
    assert apply_motor(bot(theta=1.0), fired(2)).theta == pytest.approx(0.9)
    assert apply_motor(bot(theta=1.0), fired(3)).theta == pytest.approx(1.1)
    assert apply_motor(bot(theta=1.0), fired(2, 3)).theta == 1.0


def test_opposing_translations_cancel():
    b = apply_motor(bot(123.456, 78.9, 0.7), fired(0, 1))
    assert (b.x, b.y) == (123.456, 78.9)


def test_translation_uses_heading_before_rotation():
    b = apply_motor(bot(100.0, 100.0, 0.0), fired(0, 3))
    assert (b.x, b.y) == (101.0, 100.0)
    assert b.theta == pytest.approx(0.1)


def test_reflect_vertical_wall():
    x, y, th = reflect(500.4, 200.0, 0.0, 500.0, 500.0)
    assert (x, y) == (500.0, 200.0) and th == pytest.approx(math.pi)


def test_reflect_horizontal_wall():
    x, y, th = reflect(200.0, 500.5, math.pi / 4, 500.0, 500.0)
    assert (x, y) == (200.0, 500.0) and th == -math.pi / 4


def test_reflect_interior_noop():
    assert reflect(10.0, 20.0, 0.3, 500.0, 500.0) == (10.0, 20.0, 0.3)


def test_reflect_corner():
    x, y, th = reflect(-0.5, -0.5, -3 * math.pi / 4, 500.0, 500.0)
    assert (x, y) == (0.0, 0.0)
    assert th == pytest.approx(-(math.pi + 3 * math.pi / 4))


def test_bot_at_wall_stays_inside():
    b = apply_motor(bot(499.5, 250.0, 0.0), fired(0))
    assert b.x == 500.0 and b.theta == pytest.approx(math.pi)


# --- captures ------------------------------------------------------------------

def test_capture_inside_radius():
    assert detect_captures([bot(0.0, 0.0)], [FoodState(2.0, 2.0, 0, 0)]) == [(0, 0)]


def test_capture_boundary_exclusive():
    assert detect_captures([bot(0.0, 0.0)], [FoodState(3.0, 2.0, 0, 0)]) == []


def test_capture_tie_goes_to_lower_id():
    bots = [bot(12.0, 10.0, bid=7), bot(8.0, 10.0, bid=3)]
    assert detect_captures(bots, [FoodState(10.0, 10.0, 0, 0)]) == [(3, 0)]


def test_capture_goes_to_nearest():
    bots = [bot(11.0, 10.0, bid=1), bot(12.0, 10.0, bid=0)]
    assert detect_captures(bots, [FoodState(10.0, 10.0, 0, 0)]) == [(1, 0)]


def test_one_bot_two_food():
    out = detect_captures([bot(10.0, 10.0)], [FoodState(11.0, 10.0, 0, 0), FoodState(9.0, 10.0, 0, 0)])
    assert out == [(0, 0), (0, 1)]


# --- food ----------------------------------------------------------------------

class StubRng:
    def __init__(self, values):
        self.values = np.array(values)

    def random(self, n):
        assert n == len(self.values)
        return self.values


def test_spawn_food_transform():
    f = spawn_food(StubRng([0.5, 0.5, 0.25, 0.5]))
    assert (f.x, f.y, f.speed) == (250.0, 250.0, 0.5)
    assert f.theta == pytest.approx(math.pi / 2)


def test_spawn_food_deterministic():
    a = spawn_food(np.random.default_rng(5))
    b = spawn_food(np.random.default_rng(5))
    assert a == b


def test_spawn_food_uniform():
    rng = np.random.default_rng(11)
    pts = np.array([[f.x, f.y] for f in (spawn_food(rng) for _ in range(10_000))])
    counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=5, range=[[0, 500], [0, 500]])
    assert stats.chisquare(counts.ravel()).pvalue > 0.001


def test_food_reflects_off_wall():
    f = ar.move_food(FoodState(499.8, 100.0, 0.0, 0.5))
    assert f.x == 500.0 and f.theta == pytest.approx(math.pi)


# --- whole-arena stepping ---------------------------------------------------------

def silent_arena(cfg, backend, n_bots=None):
    n_bots = n_bots or cfg.arena.n_bots
    phen = [Phenotype(np.zeros((N, N)), 0.0, math.pi / 2) for _ in range(n_bots)]
    return Arena(cfg, seed=1, backend=backend, phenotypes=phen)


def test_silent_bots_do_not_move(backend_name):
    a = silent_arena(Config(), backend_name)
    pose0 = a.pop.pose.copy()
    food0 = a.food.copy()
    for _ in range(20):
        a.step()
    np.testing.assert_array_equal(a.pop.pose, pose0)
    assert not np.array_equal(a.food[:, :2], food0[:, :2]) or np.all(food0[:, 3] == 0)
    np.testing.assert_array_equal(a.food[:, 3], food0[:, 3])
    assert a.timestep == 20 and np.all(a.pop.age == 21)


def test_capture_replenishes_food(backend_name):
    a = silent_arena(Config(), backend_name)
    a.food[0, :2] = a.pop.pose[3, :2] + [1.0, 1.0]
    a.food[0, 3] = 0.0
    events = a.step()
    assert [(e.bot_id, e.food_index) for e in events] == [(3, 0)]
    assert len(a.food) == Config().arena.n_food
    assert a.pop.captures[3] == 1
    assert events[0].timestep == 1


def test_entities_stay_in_bounds(small_cfg, backend_name):
    a = Arena(small_cfg, seed=4, backend=backend_name)
    for _ in range(300):
        a.step()
        assert np.all((a.pop.pose[:, :2] >= 0) & (a.pop.pose[:, :2] <= 60))
        assert np.all((a.food[:, :2] >= 0) & (a.food[:, :2] <= 60))
        assert len(a.food) == 10 and len(a.pop) == 10


def test_stepping_is_deterministic(backend_name):
    snaps = []
    for _ in range(2):
        a = Arena(Config(), seed=9, backend=backend_name)
        for _ in range(1000):
            a.step()
        snaps.append(a.snapshot())
    for key in snaps[0]:
        np.testing.assert_array_equal(np.asarray(snaps[0][key], dtype=object), np.asarray(snaps[1][key], dtype=object))


def test_advance_equals_repeated_step(small_cfg, backend_name):
    a = Arena(small_cfg, seed=2, backend=backend_name)
    b = Arena(small_cfg, seed=2, backend=backend_name)
    ev_a = a.advance(10_000)
    ev_b = []
    while not ev_b:
        ev_b = b.step()
    assert a.timestep == b.timestep
    assert [(e.bot_id, e.food_index) for e in ev_a] == [(e.bot_id, e.food_index) for e in ev_b]
    np.testing.assert_array_equal(a.pop.pose, b.pop.pose)


def test_backends_agree_bit_for_bit(small_cfg):
    from evosnn import backend

    if "compiled" not in backend.available():
        pytest.skip("compiled kernel not built")
    runs = {}
    for name in ("python", "compiled"):
        a = Arena(small_cfg, seed=21, backend=name)
        events = []
        while a.timestep < 1500:
            events += [(e.timestep, e.bot_id, e.food_index) for e in a.advance(1500 - a.timestep)]
        runs[name] = (a.snapshot(), events)
    (sp, ep), (sc, ec) = runs["python"], runs["compiled"]
    assert ep == ec and len(ep) > 10
    for key in sp:
        if isinstance(sp[key], np.ndarray):
            np.testing.assert_array_equal(sp[key], sc[key], err_msg=key)
        else:
            assert sp[key] == sc[key], key


def test_trajectory_dump_record():
    import json

    a = Arena(Config(), seed=1)
    rec = json.loads(a.dump_record())
    assert rec["t"] == 0
    assert len(rec["bots"]) == 10 and len(rec["bots"][0]) == 5
    assert len(rec["food"]) == 5


def test_geometry_defaults_match_config():
    assert Geometry.from_config(Config().arena) == Geometry()
