"""Naive dense-matrix reference implementations used as oracles.

Everything here is built directly from the defining formulas with dense
linear algebra, independent of the fast code paths under test.
"""

import numpy as np


def steering_matrix(thetas, n):
    return np.exp(2j * np.pi * np.outer(np.arange(n), np.atleast_1d(thetas)))


def measurement_matrix(obs):
    """Dense Phi, shape (M, N)."""
    if obs.is_complete:
        return np.eye(obs.n, dtype=complex)
    phi = np.zeros((obs.m, obs.n), dtype=complex)
    phi[np.arange(obs.m), obs.observed_indices - 1] = obs.scales
    return phi


def dense_covariance(state, obs):
    phi = measurement_matrix(obs)
    a = phi @ steering_matrix(state.active_theta, obs.n)
    return state.beta * np.eye(obs.m) + a @ np.diag(state.active_gamma) @ a.conj().T


def dense_objective(state, obs):
    c = dense_covariance(state, obs)
    sign, logdet = np.linalg.slogdet(c)
    assert sign.real > 0
    cinv = np.linalg.inv(c)
    quad = sum(np.vdot(yg, cinv @ yg).real for yg in obs.y)
    ze = min(max(state.zeta, 0.5 / state.k_max), 0.5)
    prior = -(state.k_hat * np.log(ze) + (state.k_max - state.k_hat) * np.log(1 - ze))
    return obs.g * logdet + quad + prior


def dense_stats(state, obs):
    """The seven statistics vectors from their definitions."""
    n = obs.n
    phi = measurement_matrix(obs)
    psi = steering_matrix(state.active_theta, n)
    cinv = np.linalg.inv(dense_covariance(state, obs))
    dmat = np.diag(2.0 * np.pi * np.arange(n))
    q = np.stack([psi.conj().T @ phi.conj().T @ cinv @ yg for yg in obs.y])
    r = np.stack([psi.conj().T @ dmat @ phi.conj().T @ cinv @ yg for yg in obs.y])
    u = np.stack([psi.conj().T @ dmat @ dmat @ phi.conj().T @ cinv @ yg for yg in obs.y])
    w = phi.conj().T @ cinv @ phi
    s = np.diag(psi.conj().T @ w @ psi)
    t = np.diag(psi.conj().T @ dmat @ w @ psi)
    v = np.diag(psi.conj().T @ dmat @ dmat @ w @ psi)
    x = np.diag(psi.conj().T @ dmat @ w @ dmat @ psi)
    return q, r, u, s, t, v, x


def dense_grid(state, obs, length):
    grid = np.arange(length) / length
    phi = measurement_matrix(obs)
    psig = steering_matrix(grid, obs.n)
    cinv = np.linalg.inv(dense_covariance(state, obs))
    q_grid = np.stack([psig.conj().T @ phi.conj().T @ cinv @ yg for yg in obs.y])
    s_grid = np.diag(psig.conj().T @ phi.conj().T @ cinv @ phi @ psig).real
    return q_grid, s_grid


def dense_posterior(state, obs):
    """mu and Sigma from their Gaussian-posterior definitions."""
    phi = measurement_matrix(obs)
    a = phi @ steering_matrix(state.active_theta, obs.n)
    gamma = state.active_gamma
    sigma_inv = a.conj().T @ a / state.beta + np.diag(1.0 / gamma)
    sigma = np.linalg.inv(sigma_inv)
    mu = np.stack([sigma @ a.conj().T @ yg / state.beta for yg in obs.y])
    trace = np.trace(sigma @ a.conj().T @ a).real
    return mu, sigma, trace


def dense_single_component_objective(z_k, theta_k, gamma_k, state, obs, slot):
    """Objective as a function of one component's variables, all other
    variables fixed (dense evaluation of the full objective)."""
    trial = state.copy()
    trial.z[slot] = bool(z_k)
    trial.theta[slot] = theta_k
    trial.gamma[slot] = gamma_k
    return dense_objective(trial, obs)


def random_state(rng, n, k, k_max=None, beta=None, zeta=0.2, min_sep=None):
    """Non-degenerate random state with k active components."""
    from superlse.model_core import EstimationState

    k_max = k_max or max(2 * k, 8)
    min_sep = min_sep if min_sep is not None else 2.0 / n
    thetas = []
    while len(thetas) < k:
        cand = rng.random()
        d = [min(abs(cand - t), 1 - abs(cand - t)) for t in thetas]
        if not d or min(d) > min_sep:
            thetas.append(cand)
    state = EstimationState.empty(k_max, beta=beta if beta is not None else 0.5 + rng.random())
    state.zeta = zeta
    state.z[:k] = True
    state.theta[:k] = thetas
    state.gamma[:k] = 0.5 + rng.random(k)
    return state


def random_observation(rng, n, state=None, g=1, m=None):
    """Observation drawn from the model at `state` (or pure noise)."""
    from superlse.model_core import Observation

    if m is None or m == n:
        obs_idx = None
    else:
        inner = rng.choice(np.arange(2, n), size=m - 2, replace=False)
        obs_idx = np.sort(np.concatenate(([1], inner, [n])))
    y = np.zeros((g, n), dtype=complex)
    if state is not None:
        psi = steering_matrix(state.active_theta, n)
        for j in range(g):
            coef = (rng.standard_normal(state.k_hat) + 1j * rng.standard_normal(state.k_hat)) * np.sqrt(
                state.active_gamma / 2.0
            )
            y[j] = psi @ coef
        noise_var = state.beta
    else:
        noise_var = 1.0
    y += np.sqrt(noise_var / 2.0) * (rng.standard_normal((g, n)) + 1j * rng.standard_normal((g, n)))
    if obs_idx is None:
        return Observation.complete(y)
    return Observation.incomplete(y[:, obs_idx - 1], n, obs_idx)
