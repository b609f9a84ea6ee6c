"""Steering-matrix products against direct summation."""

import numpy as np
import pytest

from superlse.errors import DimensionMismatch
from superlse.nufft import (
    FrequencySet,
    fourier_sum_two_sided,
    gram,
    steer_adjoint,
    steer_forward,
)


def direct_forward(thetas, coeffs, n):
    basis = np.exp(2j * np.pi * np.outer(np.arange(n), thetas))
    return basis @ coeffs


def direct_adjoint(thetas, x):
    basis = np.exp(-2j * np.pi * np.outer(thetas, np.arange(len(x))))
    return basis @ x


def rand_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_forward_zero_frequency():
    out = steer_forward(FrequencySet(np.array([0.0])), np.array([1.0]), 8)
    assert np.allclose(out, np.ones(8))


def test_forward_on_grid_matches_dft():
    n = 16
    rng = np.random.default_rng(0)
    thetas = np.arange(n) / n
    coeffs = rand_complex(rng, n)
    got = steer_forward(thetas, coeffs, n)
    # on-grid evaluation is an inverse-DFT-style sum
    ref = np.fft.ifft(coeffs) * n
    assert np.max(np.abs(got - ref)) < 1e-12 * np.linalg.norm(coeffs)


@pytest.mark.parametrize("method", ["direct", "nufft"])
def test_forward_random(method):
    rng = np.random.default_rng(1)
    n, k = 64, 5
    thetas = rng.random(k)
    coeffs = rand_complex(rng, k)
    got = steer_forward(thetas, coeffs, n, method=method)
    ref = direct_forward(thetas, coeffs, n)
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 1e-10


def test_adjoint_first_basis_vector():
    rng = np.random.default_rng(2)
    thetas = rng.random(6)
    e1 = np.zeros(9)
    e1[0] = 1.0
    assert np.allclose(steer_adjoint(thetas, e1), np.ones(6))


def test_adjoint_zero_frequency_sums():
    rng = np.random.default_rng(3)
    x = rand_complex(rng, 12)
    assert np.allclose(steer_adjoint(np.array([0.0]), x), [x.sum()])


@pytest.mark.parametrize("method", ["direct", "nufft"])
def test_adjoint_random(method):
    rng = np.random.default_rng(4)
    n, k = 80, 7
    thetas = rng.random(k)
    x = rand_complex(rng, n)
    got = steer_adjoint(thetas, x, method=method)
    ref = direct_adjoint(thetas, x)
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 1e-10


@pytest.mark.parametrize("n", [17, 64, 257, 1024, 4096])
def test_nufft_accuracy_sweep(n):
    rng = np.random.default_rng(n)
    k = int(rng.integers(1, 24))
    thetas = rng.random(k)
    coeffs = rand_complex(rng, k)
    x = rand_complex(rng, n)
    fwd = steer_forward(thetas, coeffs, n, method="nufft")
    adj = steer_adjoint(thetas, x, method="nufft")
    ref_f = direct_forward(thetas, coeffs, n)
    ref_a = direct_adjoint(thetas, x)
    assert np.linalg.norm(fwd - ref_f) / np.linalg.norm(ref_f) < 1e-10
    assert np.linalg.norm(adj - ref_a) / np.linalg.norm(ref_a) < 1e-10


def test_adjoint_consistency_inner_products():
    rng = np.random.default_rng(5)
    n, k = 700, 9
    thetas = rng.random(k)
    a = rand_complex(rng, k)
    x = rand_complex(rng, n)
    lhs = np.vdot(x, steer_forward(thetas, a, n))
    rhs = np.vdot(steer_adjoint(thetas, x), a)
    assert abs(lhs - rhs) / abs(lhs) < 1e-10


def test_batched_columns():
    rng = np.random.default_rng(6)
    n, k, b = 600, 4, 3
    thetas = rng.random(k)
    xs = rand_complex(rng, n, b)
    got = steer_adjoint(thetas, xs, method="nufft")
    for j in range(b):
        assert np.allclose(got[:, j], direct_adjoint(thetas, xs[:, j]), atol=1e-9)
    cs = rand_complex(rng, k, b)
    fwd = steer_forward(thetas, cs, n, method="nufft")
    for j in range(b):
        assert np.allclose(fwd[:, j], direct_forward(thetas, cs[:, j], n), atol=1e-9)


def test_dimension_errors():
    with pytest.raises(DimensionMismatch):
        steer_forward(np.array([0.1, 0.2]), np.ones(3), 8)
    with pytest.raises(ValueError):
        FrequencySet(np.array([1.0]))


def test_fourier_sum_two_sided():
    rng = np.random.default_rng(7)
    n, k = 24, 5
    omega = rand_complex(rng, 2 * n - 1)
    thetas = rng.random(k)
    lags = np.arange(-(n - 1), n)
    ref = np.array([np.sum(omega * np.exp(2j * np.pi * lags * th)) for th in thetas])
    got = fourier_sum_two_sided(thetas, omega)
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 1e-10


def test_gram_single_frequency_full_observation():
    n = 10
    f = FrequencySet(np.array([0.37]))
    g = gram(f, f, np.ones(n), np.arange(1, n + 1))
    assert g.shape == (1, 1)
    assert np.allclose(g, n)


def test_gram_complete_on_grid():
    n = 16
    thetas = np.array([3 / n, 5 / n])
    g = gram(thetas, thetas, np.ones(n), np.arange(1, n + 1))
    # distinct grid frequencies are orthogonal over a full period
    assert np.allclose(g, n * np.eye(2), atol=1e-10)
    # off-grid pair follows the closed-form geometric sum
    t2 = np.array([0.1, 0.37])
    g2 = gram(t2, t2, np.ones(n), np.arange(1, n + 1))
    d = t2[1] - t2[0]
    geo = np.sum(np.exp(2j * np.pi * np.arange(n) * d))
    assert np.allclose(g2[0, 1], geo)
    assert np.allclose(g2[1, 0], np.conj(geo))


@pytest.mark.parametrize("method", ["direct", "nufft"])
def test_gram_random_incomplete(method):
    rng = np.random.default_rng(8)
    n, m, kr, kc = 96, 60, 4, 6
    idx = np.sort(rng.choice(np.arange(1, n + 1), size=m, replace=False))
    w = rng.random(m) + 0.1
    tr = rng.random(kr)
    tc = rng.random(kc)
    ref = np.zeros((kr, kc), dtype=complex)
    for i in range(kr):
        for k in range(kc):
            ref[i, k] = np.sum(w * np.exp(2j * np.pi * (idx - 1) * (tc[k] - tr[i])))
    got = gram(tr, tc, w, idx, n=n, method=method)
    assert np.linalg.norm(got - ref) / np.linalg.norm(ref) < 1e-10


def test_gram_hermitian_real_diagonal():
    rng = np.random.default_rng(9)
    n, m, k = 50, 30, 5
    idx = np.sort(rng.choice(np.arange(1, n + 1), size=m, replace=False))
    w = rng.random(m)
    t = rng.random(k)
    g = gram(t, t, w, idx)
    assert np.allclose(g, g.conj().T)
    assert np.allclose(np.diag(g).real, w.sum())
    assert np.max(np.abs(np.diag(g).imag)) < 1e-12
