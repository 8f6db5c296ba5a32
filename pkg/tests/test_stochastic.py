import math

import numpy as np
import pytest

import stochastic
from dynamics import EpidemicParams, NumericalError, uniform_state
from graphs import Graph, derive_seed, erdos_renyi, named_graph
from stochastic import (
    all_infected,
    ensemble_prevalence,
    gillespie_sis,
    markov_state,
    master_equation_prevalence,
    static_network,
)
from temporal import TemporalNetwork, constant_interval_network, integrate_temporal, random_er_sequence

K2 = named_graph("complete", 2)


def test_all_healthy_is_absorbing():
    tn = static_network(named_graph("complete", 5), 10.0)
    path = gillespie_sis(tn, 1.0, 1.0, markov_state(5), 10.0, seed=0)
    assert path.times.size == 0
    assert path.extinction_time == 0.0
    assert np.all(path.prevalence_on([0.0, 5.0, 10.0]) == 0.0)


def test_pure_curing_mean_time():
    g = named_graph("star", 4)
    tn = static_network(g, 100.0)
    times = []
    for i in range(10_000):
        path = gillespie_sis(tn, 0.0, 1.0, markov_state(4, [2]), 100.0, seed=derive_seed(1, i))
        assert path.changes.tolist() == [-1]
        times.append(path.extinction_time)
    assert np.mean(times) == pytest.approx(1.0, rel=0.03)


def test_k2_first_event_time():
    # both infected: no S-I links, so only the two curing clocks run (total rate 2)
    tn = static_network(K2, 10.0)
    first = [
        gillespie_sis(tn, 1.0, 1.0, all_infected(2), 10.0, seed=derive_seed(2, i)).times[0]
        for i in range(10_000)
    ]
    assert np.mean(first) == pytest.approx(0.5, rel=0.05)


def test_event_path_bookkeeping():
    g = erdos_renyi(30, 0.2, seed=3)
    path = gillespie_sis(static_network(g, 20.0), 0.3, 1.0, all_infected(30), 20.0, seed=4, debug_recount=True)
    counts = path.counts_on(np.linspace(0, 20, 201))
    assert counts.min() >= 0 and counts.max() <= 30
    assert np.all(np.diff(path.times) > 0)
    assert path.final_count == counts[-1]
    assert np.all(np.abs(np.diff(np.concatenate(([30], 30 + np.cumsum(path.changes))))) == 1)


def test_recount_drift_raises(monkeypatch):
    real = stochastic._si_links
    calls = []

    def drifting(k_inf, x):
        calls.append(1)
        return real(k_inf, x) + (len(calls) > 1)

    monkeypatch.setattr(stochastic, "_si_links", drifting)
    monkeypatch.setattr(stochastic, "RECOUNT_EVERY", 1)
    with pytest.raises(NumericalError, match="drifted"):
        gillespie_sis(static_network(named_graph("complete", 10), 5.0), 0.3, 1.0, all_infected(10), 5.0, seed=1,
                      debug_recount=True)


def test_same_seed_same_path():
    tn = static_network(erdos_renyi(20, 0.3, seed=1), 5.0)
    a = gillespie_sis(tn, 0.5, 1.0, all_infected(20), 5.0, seed=99)
    b = gillespie_sis(tn, 0.5, 1.0, all_infected(20), 5.0, seed=99)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.nodes, b.nodes)


def test_infection_waits_for_graph_swap():
    # no links before t = 0.5, so every infection happens on K_10 afterwards
    tn = TemporalNetwork((Graph.empty(10), named_graph("complete", 10)), [0.0, 0.5, 2.0])
    infections = []
    for i in range(50):
        path = gillespie_sis(tn, 5.0, 1.0, markov_state(10, [0]), 2.0, seed=derive_seed(5, i))
        infections.extend(path.times[path.changes == 1].tolist())
    assert infections
    assert min(infections) >= 0.5


def test_invalid_rates_rejected():
    tn = static_network(K2, 1.0)
    with pytest.raises(ValueError):
        gillespie_sis(tn, -1.0, 1.0, all_infected(2), 1.0, seed=0)
    with pytest.raises(ValueError):
        gillespie_sis(tn, 1.0, 0.0, all_infected(2), 1.0, seed=0)
    with pytest.raises(ValueError):
        gillespie_sis(tn, 1.0, 1.0, all_infected(3), 1.0, seed=0)


def test_single_run_ensemble_is_the_path():
    g = erdos_renyi(15, 0.4, seed=2)
    tn = static_network(g, 5.0)
    result = ensemble_prevalence(tn, 0.4, 1.0, all_infected(15), 5.0, runs=1, seed=8, grid_step=0.1)
    path = gillespie_sis(tn, 0.4, 1.0, all_infected(15), 5.0, seed=derive_seed(8, 0))
    alive = result.times < path.extinction_time
    assert np.array_equal(result.survivors, alive.astype(int))
    assert result.mean_prevalence[alive] == pytest.approx(path.prevalence_on(result.times)[alive])
    assert np.all(np.isnan(result.mean_prevalence[~alive]))


def test_pure_death_survivor_fraction():
    k0, runs = 3, 2000
    tn = static_network(named_graph("complete", 5), 3.0)
    result = ensemble_prevalence(tn, 0.0, 1.0, markov_state(5, range(k0)), 3.0, runs=runs, seed=6, grid_step=0.5)
    assert np.all(np.diff(result.survivors) <= 0)
    for t, s in zip(result.times, result.survivors):
        p = 1.0 - (1.0 - math.exp(-t)) ** k0
        sigma = math.sqrt(p * (1 - p) / runs)
        assert s / runs == pytest.approx(p, abs=4 * sigma + 1e-12)


def test_ensemble_is_deterministic_per_seed():
    tn = static_network(erdos_renyi(20, 0.3, seed=1), 2.0)
    a = ensemble_prevalence(tn, 0.3, 1.0, all_infected(20), 2.0, runs=20, seed=3, grid_step=0.1)
    b = ensemble_prevalence(tn, 0.3, 1.0, all_infected(20), 2.0, runs=20, seed=3, grid_step=0.1,
                            mapper=lambda f, jobs: [f(j) for j in reversed(jobs)][::-1])
    assert np.array_equal(a.mean_prevalence, b.mean_prevalence, equal_nan=True)
    assert np.array_equal(a.survivors, b.survivors)


def test_master_equation_k2():
    expected, conditional = master_equation_prevalence(K2, 1.0, 1.0, [1, 1], [0.0, 1.0])
    assert expected[0] == pytest.approx(1.0)
    assert conditional[0] == pytest.approx(1.0)
    assert 0.0 < expected[1] < conditional[1] < 1.0
    with pytest.raises(ValueError):
        master_equation_prevalence(named_graph("complete", 5), 1.0, 1.0, [1] * 5, [1.0])


@pytest.mark.slow
def test_k2_matches_master_equation():
    times = [0.5, 1.0, 2.0]
    tn = static_network(K2, 2.0)
    result = ensemble_prevalence(tn, 1.0, 1.0, all_infected(2), 2.0, runs=100_000, seed=10, grid_step=0.5)
    _, conditional = master_equation_prevalence(K2, 1.0, 1.0, [1, 1], times)
    for t, exact in zip(times, conditional):
        k = int(np.argmin(np.abs(result.times - t)))
        assert abs(result.mean_prevalence[k] - exact) <= 3 * result.stderr[k]


@pytest.mark.slow
def test_nimfa_upper_bounds_markov():
    params = EpidemicParams(beta=0.1)
    for dt, M in ((10.0, 3), (1.0, 10), (0.01, 300)):
        graphs, _ = random_er_sequence(M, 50, (0.4, 0.6), seed=31)
        tn = constant_interval_network(graphs, dt)
        t_end = tn.update_times[-1]
        nimfa = integrate_temporal(tn, params, uniform_state(50), h=0.01)
        markov = ensemble_prevalence(tn, 0.1, 1.0, all_infected(50), t_end, runs=200, seed=12, grid_step=0.01)
        ok = np.isnan(markov.mean_prevalence) | (nimfa.prevalence >= markov.mean_prevalence - 3 * np.nan_to_num(markov.stderr))
        assert ok.mean() >= 0.99
