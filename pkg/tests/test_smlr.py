"""Activation and deactivation decisions against brute-force objective
comparisons on dense small instances."""

import numpy as np
import pytest

import reference as ref
from superlse.model_core import (
    EstimationState,
    Observation,
    component_stats,
    grid_stats,
    make_engine,
    objective,
)
from superlse.smlr import (
    best_candidate,
    deactivation_margins,
    initial_activation_sweep,
    try_activate,
    try_deactivate,
)


def stats_fn(obs, backend="semifast"):
    return lambda state: component_stats(state, obs, backend=backend)


def test_deactivate_vanishing_gamma():
    state, obs = make_case_with_small_component(gamma_small=1e-12)
    stats = component_stats(state, obs, backend="semifast")
    new_state, removed = try_deactivate(state, stats, recompute=stats_fn(obs))
    assert removed, "a vanishing-variance component must be deactivated"
    assert not new_state.z[state.active_indices[0]]


def make_case_with_small_component(gamma_small):
    rng = np.random.default_rng(0)
    n = 24
    state = ref.random_state(rng, n, 2)
    state.gamma[state.active_indices[0]] = gamma_small
    obs = ref.random_observation(rng, n, state)
    return state, obs


def test_retain_strong_component():
    rng = np.random.default_rng(1)
    n = 32
    state = ref.random_state(rng, n, 1)
    slot = state.active_indices[0]
    state.gamma[slot] = 25.0
    state.beta = 0.01
    # noise-free single strong sinusoid at the component frequency
    amp = 5.0
    y = amp * np.exp(2j * np.pi * np.arange(n) * state.theta[slot])
    obs = Observation.complete(y)
    stats = component_stats(state, obs, backend="semifast")
    _, removed = try_deactivate(state, stats, recompute=stats_fn(obs))
    assert removed == []


def test_deactivation_matches_brute_force_objective():
    # decision for a single active component == sign of the dense objective
    # difference between keeping and removing it
    for seed in range(12):
        rng = np.random.default_rng(100 + seed)
        n = 20
        state = ref.random_state(rng, n, 1, zeta=0.3)
        slot = state.active_indices[0]
        state.gamma[slot] = float(10.0 ** rng.uniform(-4, 1))
        obs = ref.random_observation(rng, n, state)
        keep = ref.dense_objective(state, obs)
        off = state.copy()
        off.z[slot] = False
        drop = ref.dense_objective(off, obs)
        stats = component_stats(state, obs, backend="semifast")
        margins = deactivation_margins(state, stats)
        assert (margins[0] < 0.0) == (drop < keep)


def test_downdate_identity_matches_dense():
    # rank-one downdate of (q, s) equals the dense quantities with the
    # component removed from C
    rng = np.random.default_rng(2)
    n = 24
    state = ref.random_state(rng, n, 3)
    obs = ref.random_observation(rng, n, state)
    stats = component_stats(state, obs, backend="semifast")
    for i, slot in enumerate(state.active_indices):
        removed = state.copy()
        removed.z[slot] = False
        cinv = np.linalg.inv(ref.dense_covariance(removed, obs))
        psi_k = ref.steering_matrix(state.theta[slot], n)[:, 0]
        q_dd_ref = psi_k.conj() @ cinv @ obs.y[0]
        s_dd_ref = (psi_k.conj() @ cinv @ psi_k).real
        denom = 1.0 - state.gamma[slot] * stats.s[i]
        assert abs(stats.q[0, i] / denom - q_dd_ref) / abs(q_dd_ref) < 1e-8
        assert abs(stats.s[i] / denom - s_dd_ref) / abs(s_dd_ref) < 1e-8


def test_deactivation_never_increases_objective():
    rng = np.random.default_rng(3)
    n = 24
    state = ref.random_state(rng, n, 3, zeta=0.3)
    act = state.active_indices
    state.gamma[act[0]] = 1e-9
    state.gamma[act[1]] = 1e-9
    obs = ref.random_observation(rng, n, state)
    before = objective(state, obs, backend="semifast")
    new_state, removed = try_deactivate(
        state, component_stats(state, obs, backend="semifast"), recompute=stats_fn(obs)
    )
    after = objective(new_state, obs, backend="semifast")
    assert len(removed) >= 2
    assert after <= before + 1e-9 * obs.m


def test_no_op_when_all_margins_positive():
    rng = np.random.default_rng(4)
    n = 32
    state = ref.random_state(rng, n, 2)
    slots = state.active_indices
    state.beta = 0.01
    state.gamma[slots] = 30.0
    y = sum(
        4.0 * np.exp(2j * np.pi * np.arange(n) * state.theta[s]) for s in slots
    )
    obs = Observation.complete(y)
    stats = component_stats(state, obs, backend="semifast")
    assert np.all(deactivation_margins(state, stats) > 0)
    new_state, removed = try_deactivate(state, stats, recompute=stats_fn(obs))
    assert removed == []
    assert new_state is state


def test_activation_rejects_zero_data():
    n = 32
    state = EstimationState.empty(8, beta=1.0)
    obs = Observation.complete(np.zeros(n))
    gs = grid_stats(state, obs, backend="semifast", grid_size=128)
    assert try_activate(state, obs, gs) is None


def test_activation_rejects_low_snr_candidate():
    # kappa <= 1 at the best gridpoint forces gamma = 0, hence no activation
    rng = np.random.default_rng(5)
    n = 64
    state = EstimationState.empty(8, beta=4.0)
    y = 0.01 * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    obs = Observation.complete(y)
    gs = grid_stats(state, obs, backend="superfast", grid_size=256)
    cand = best_candidate(state, obs, gs)
    assert cand.kappa <= 1.0
    assert cand.gamma == 0.0
    assert try_activate(state, obs, gs) is None


def test_activation_finds_clean_on_grid_sinusoid():
    n, length = 32, 128
    theta_true = 24 / length
    y = 3.0 * np.exp(2j * np.pi * np.arange(n) * theta_true)
    obs = Observation.complete(y)
    state = EstimationState.empty(8, beta=0.05)
    gs = grid_stats(state, obs, backend="superfast", grid_size=length)
    # brute force over gridpoints with the dense objective
    best_dense, best_l = np.inf, -1
    for el in range(length):
        trial = state.copy()
        trial.z[0] = True
        trial.theta[0] = el / length
        trial.gamma[0] = obs.energy() / (obs.m * 4)
        val = ref.dense_objective(trial, obs)
        if val < best_dense:
            best_dense, best_l = val, el
    assert best_l == 24
    new_state = try_activate(state, obs, gs)
    assert new_state is not None
    assert new_state.k_hat == 1
    assert np.isclose(new_state.active_theta[0], theta_true)
    assert objective(new_state, obs, backend="superfast") < objective(state, obs, backend="superfast")


def test_activation_respects_capacity():
    state = EstimationState.empty(1, beta=0.1)
    state.z[0] = True
    state.theta[0] = 0.3
    state.gamma[0] = 1.0
    obs = Observation.complete(np.ones(8))
    gs = grid_stats(state, obs, backend="semifast", grid_size=32)
    assert try_activate(state, obs, gs) is None


def test_sweep_single_dominant():
    n, length = 48, 256
    theta_true = 100 / length
    y = 2.5 * np.exp(2j * np.pi * np.arange(n) * theta_true)
    obs = Observation.complete(y)
    state = EstimationState.empty(12, beta=0.05)
    gs = grid_stats(state, obs, backend="superfast", grid_size=length)
    out = initial_activation_sweep(state, obs, gs)
    assert out.k_hat == 1
    assert np.isclose(out.active_theta[0], theta_true)


def test_sweep_two_equal_components():
    n, length = 64, 256
    t1, t2 = 40 / length, 150 / length
    y = 2.0 * np.exp(2j * np.pi * np.arange(n) * t1) + 2.0 * np.exp(
        2j * np.pi * np.arange(n) * t2
    )
    obs = Observation.complete(y)
    state = EstimationState.empty(12, beta=0.05)
    gs = grid_stats(state, obs, backend="superfast", grid_size=length)
    out = initial_activation_sweep(state, obs, gs)
    assert out.k_hat == 2
    assert np.allclose(np.sort(out.active_theta), [t1, t2])
    assert objective(out, obs, backend="superfast") < objective(state, obs, backend="superfast")


def test_sweep_spacing_rule():
    # two grid-adjacent candidates collapse to one activation (0.05/N apart rule)
    n, length = 32, 512
    theta_true = 100 / length
    y = 3.0 * np.exp(2j * np.pi * np.arange(n) * (theta_true + 0.2 / length))
    obs = Observation.complete(y)
    state = EstimationState.empty(12, beta=0.02)
    gs = grid_stats(state, obs, backend="superfast", grid_size=length)
    out = initial_activation_sweep(state, obs, gs)
    if out.k_hat > 1:
        seps = [
            np.min(np.minimum(np.abs(a - np.delete(out.active_theta, i)), 1 - np.abs(a - np.delete(out.active_theta, i))))
            for i, a in enumerate(out.active_theta)
        ]
        assert np.min(seps) >= 0.05 / n


def test_activation_strictly_decreases_objective_on_noisy_data():
    rng = np.random.default_rng(6)
    n = 64
    truth = ref.random_state(rng, n, 3)
    truth.gamma[truth.active_indices] = 4.0
    truth.beta = 0.05
    obs = ref.random_observation(rng, n, truth)
    state = EstimationState.empty(16, beta=0.01 * obs.energy() / obs.m)
    engine = make_engine(obs, backend="superfast", grid_size=512)
    for _ in range(6):
        gs = engine.bundle(state).grid()
        before = engine.objective(state)
        new_state = try_activate(state, obs, gs)
        if new_state is None:
            break
        after = engine.objective(new_state)
        assert after < before
        state = new_state
    assert state.k_hat >= 1
