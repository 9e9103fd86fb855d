import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evosnn.arena import Population
from evosnn.evolution import (EvolutionParams, Evolver, Phenotype, crossover, fitness, least_fit,
                              mutate, on_capture, random_phenotype)

N = 30


def pheno(rng, n=N, b=0.01, v=math.pi / 2):
    return random_phenotype(rng, n, 0.5, b, v)


def population(rng, size=10, seed=0):
    pop = Population(N, seed)
    for _ in range(size):
        pop.add(pheno(rng), 0)
    return pop


# --- fitness -------------------------------------------------------------------

def test_fitness_values():
    assert fitness(2, 100) == 0.02
    assert fitness(0, 12345) == 0.0
    with pytest.raises(ValueError):
        fitness(1, 0)


def test_fitness_ordering_oracle():
    pairs = [(n, t) for n in range(4) for t in (1, 50, 100, 200)]
    for (n1, t1), (n2, t2) in itertools.product(pairs, repeat=2):
        # cross-multiplication oracle
        assert (fitness(n1, t1) > fitness(n2, t2)) == (n1 * t2 > n2 * t1)
    assert fitness(1, 50) > fitness(2, 200)


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(1, 10_000)), min_size=2, max_size=10),
       st.integers(2, 50))
def test_ranking_scale_invariant(stats, factor):
    rank = sorted(range(len(stats)), key=lambda i: (fitness(*stats[i]), i))
    scaled = sorted(range(len(stats)), key=lambda i: (fitness(stats[i][0] * factor, stats[i][1] * factor), i))
    assert rank == scaled


# --- mutation ------------------------------------------------------------------

def test_zero_variance_mutation_is_identity(rng):
    p = pheno(rng)
    q = mutate(p, EvolutionParams(mu_mod=0.0, mu_visual=0.0), rng)
    assert q == p and q is not p


def test_mutation_keeps_diagonal_and_input(rng):
    p = pheno(rng)
    before = p.copy()
    for _ in range(20):
        q = mutate(p, EvolutionParams(), rng)
        assert np.all(np.diagonal(q.w) == 0)
    assert p == before


def test_mutation_std_matches_parameter():
    rng = np.random.default_rng(1)
    p = Phenotype(np.zeros((N, N)), 0.5, 1.0)
    params = EvolutionParams()
    samples = np.array([mutate(p, params, rng).w[3, 17] for _ in range(10_000)])
    assert abs(samples.std(ddof=1) - 0.05) < 0.05 * 0.05
    vs = np.array([mutate(p, params, rng).v for _ in range(10_000)])
    assert abs(vs.std(ddof=1) - 0.008) < 0.05 * 0.008


@given(mu=st.floats(0, 100), mu_v=st.floats(0, 100), b=st.floats(0, 1), v=st.floats(1e-6, 2 * math.pi),
       seed=st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_mutation_clamps(mu, mu_v, b, v, seed):
    rng = np.random.default_rng(seed)
    q = mutate(Phenotype(np.zeros((4, 4)), b, v), EvolutionParams(mu_mod=mu, mu_visual=mu_v), rng)
    assert 0.0 <= q.b <= 1.0
    assert 0.0 < q.v <= 2 * math.pi
    assert np.all(np.diagonal(q.w) == 0)


# --- crossover -----------------------------------------------------------------

def test_crossover_figure_pattern():
    ones = np.ones((4, 4)) - np.eye(4)
    twos = 2 * (np.ones((4, 4)) - np.eye(4))
    c3, c4 = crossover(Phenotype(ones, 0.1, 1.0), Phenotype(twos, 0.2, 2.0))
    expect3 = np.array([[0, 1, 2, 2], [1, 0, 2, 2], [1, 1, 0, 2], [1, 1, 2, 0]], dtype=float)
    expect4 = np.array([[0, 2, 1, 1], [2, 0, 1, 1], [2, 2, 0, 1], [2, 2, 1, 0]], dtype=float)
    np.testing.assert_array_equal(c3.w, expect3)
    np.testing.assert_array_equal(c4.w, expect4)
    assert (c3.b, c3.v, c4.b, c4.v) == (0.1, 1.0, 0.2, 2.0)


def test_self_crossover_identity(rng):
    p = pheno(rng)
    c3, c4 = crossover(p, p)
    assert c3 == p and c4 == p


@given(seed=st.integers(0, 2**32 - 1), k=st.sampled_from([2, 4, 6, 30]))
@settings(max_examples=50, deadline=None)
def test_crossover_is_an_involution(seed, k):
    rng = np.random.default_rng(seed)
    p1, p2 = pheno(rng, k), pheno(rng, k)
    back1, back2 = crossover(*crossover(p1, p2))
    assert back1 == p1 and back2 == p2


def test_crossover_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        crossover(pheno(rng, 4), pheno(rng, 6))
    with pytest.raises(ValueError):
        crossover(pheno(rng, 3), pheno(rng, 3))


# --- selection and elimination -------------------------------------------------------

def test_least_fit_tie_break_oldest_then_id(rng):
    pop = population(rng, 4)
    pop.captures[:] = [1, 0, 0, 0]
    pop.age[:] = [10, 5, 9, 9]
    assert least_fit(pop, 1) == [2]
    assert least_fit(pop, 2) == [2, 3]
    assert least_fit(pop, 1, exclude=[int(pop.ids[2])]) == [3]


@pytest.mark.parametrize("strategy", ["mutation", "crossover"])
def test_population_size_conserved(rng, strategy):
    pop = population(rng)
    ev = Evolver(EvolutionParams(strategy=strategy), rng)
    for _ in range(200):
        slot = int(rng.integers(len(pop)))
        pop.captures[slot] += 1
        pop.age += int(rng.integers(1, 50))
        ev.on_capture(pop, int(pop.ids[slot]), pop.phenotype(slot))
        assert len(pop) == 10
        assert list(pop.ids) == sorted(pop.ids)


def test_equal_fitness_mutation_culls_oldest_non_newborn(rng):
    pop = population(rng)
    pop.age[:] = [50, 80, 30, 80, 20, 40, 60, 70, 10, 90]
    oldest = int(pop.ids[9])
    ev = Evolver(EvolutionParams(), rng)
    new = ev.on_capture(pop, int(pop.ids[0]), pop.phenotype(0))
    assert oldest not in pop.ids
    assert new[0] in pop.ids
    assert ev.generation == 1


def test_newborn_never_culled_by_its_own_event(rng):
    pop = population(rng)
    pop.captures[:] = 5
    pop.age[:] = 10  # everyone fitter than a newborn would be
    ev = Evolver(EvolutionParams(), rng)
    new = ev.on_capture(pop, int(pop.ids[0]), pop.phenotype(0))
    assert new[0] in pop.ids
    s = pop.slot(new[0])
    assert pop.captures[s] == 0 and pop.age[s] == 1


def test_crossover_waits_for_second_parent(rng):
    pop = population(rng)
    ev = Evolver(EvolutionParams(strategy="crossover"), rng)
    ids_before = pop.ids.copy()
    assert ev.on_capture(pop, int(pop.ids[0]), pop.phenotype(0)) == []
    assert ev.generation == 0
    np.testing.assert_array_equal(pop.ids, ids_before)
    new = ev.on_capture(pop, int(pop.ids[1]), pop.phenotype(1))
    assert len(new) == 2 and ev.generation == 1 and len(pop) == 10


def test_crossover_children_come_from_both_parents(rng):
    pop = population(rng)
    ev = Evolver(EvolutionParams(strategy="crossover", mu_mod=0.0, mu_visual=0.0), rng)
    p0, p1 = pop.phenotype(0), pop.phenotype(1)
    ev.on_capture(pop, int(pop.ids[0]), p0)
    new = ev.on_capture(pop, int(pop.ids[1]), p1)
    c3 = pop.phenotype(pop.slot(new[0]))
    e3, e4 = crossover(p0, p1)
    assert c3 == e3
    assert pop.phenotype(pop.slot(new[1])) == e4


def test_same_bot_may_fill_both_parent_slots(rng):
    pop = population(rng)
    ev = Evolver(EvolutionParams(strategy="crossover"), rng)
    ev.on_capture(pop, int(pop.ids[0]), pop.phenotype(0))
    assert len(ev.on_capture(pop, int(pop.ids[0]), pop.phenotype(0))) == 2
    strict = Evolver(EvolutionParams(strategy="crossover", distinct_parents=True), rng)
    strict.on_capture(pop, int(pop.ids[0]), pop.phenotype(0))
    assert strict.on_capture(pop, int(pop.ids[0]), pop.phenotype(0)) == []
    assert strict.generation == 0


def test_children_start_fresh(rng):
    pop = population(rng)
    pop.V[:] = 0.3
    pop.A[:] = 1
    ev = Evolver(EvolutionParams(), rng)
    (new,) = ev.on_capture(pop, int(pop.ids[2]), pop.phenotype(2))
    s = pop.slot(new)
    assert np.all(pop.V[s] == 0) and not pop.A[s].any()
    assert 0 <= pop.pose[s, 0] <= 500 and 0 <= pop.pose[s, 1] <= 500
    assert pop.birth_generation[s] == 1


def test_no_diversification_without_mutation(rng):
    p = pheno(rng)
    pop = Population(N, 0)
    for _ in range(10):
        pop.add(p.copy(), 0)
    for strategy in ("mutation", "crossover"):
        ev = Evolver(EvolutionParams(mu_mod=0.0, mu_visual=0.0, strategy=strategy), rng)
        for _ in range(50):
            slot = int(rng.integers(len(pop)))
            pop.captures[slot] += 1
            ev.on_capture(pop, int(pop.ids[slot]), pop.phenotype(slot))
        assert all(pop.phenotype(s) == p for s in range(len(pop)))


def test_batch_on_capture(rng):
    pop = population(rng)
    ev = on_capture(pop, [int(pop.ids[0]), int(pop.ids[1])], EvolutionParams(), rng)
    assert ev.generation == 2 and len(pop) == 10


def test_phenotype_validation():
    with pytest.raises(ValueError):
        Phenotype(np.eye(3), 0.0, 1.0)
    with pytest.raises(ValueError):
        Phenotype(np.zeros((3, 4)), 0.0, 1.0)
