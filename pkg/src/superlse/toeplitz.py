"""Fast linear algebra for Hermitian positive definite Toeplitz matrices.

A Hermitian PD Toeplitz matrix C (given by its first column) admits the
decomposition

    C^{-1} = delta_{N-1}^{-1} (T1^H T1 - T0 T0^H),

where T1 is unit upper triangular Toeplitz and T0 is strictly lower
triangular Toeplitz, both built from a single vector rho of length N with
rho_{N-1} = 1 (rho_i is taken as 0 outside 0..N-1).  The parameters
{rho_i, delta_i} are produced either by the Levinson-Durbin recursion in
O(N^2) or by a divide-and-conquer Schur algorithm in O(N log^2 N).  Once
known, they give

* solves C^{-1} x through four FFT convolutions,            O(N log N)
* log det C = sum_i log delta_i,                            O(N)
* weighted sums over the diagonals of C^{-1}, needed for
  Capon-style per-frequency statistics, via cross-correlations of rho
  with itself,                                              O(N log N).
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.signal import fftconvolve

from .errors import DimensionMismatch, NotPositiveDefinite

# A pivot delta_i <= PD_EPS * c_0 is treated as loss of positive definiteness
# rather than roundoff.
PD_EPS = 1e-13

# Levinson-Durbin needs fewer operations than the divide-and-conquer Schur
# recursion below this size.
SCHUR_CUTOVER = 256

# Leaf size of the Schur recursion; leaves run the classical O(n^2) iteration.
_SCHUR_BASE = 32

DIAGONAL_KINDS = ("s", "t", "v", "x")


@dataclass
class HermitianToeplitz:
    """First column of an N x N Hermitian Toeplitz matrix; c_0 real > 0."""

    first_column: np.ndarray
    n: int = 0

    def __post_init__(self):
        c = np.asarray(self.first_column, dtype=np.complex128)
        if c.ndim != 1 or c.size == 0:
            raise DimensionMismatch("first_column must be a nonempty 1-D vector")
        c0 = c[0]
        if abs(c0.imag) > 1e-10 * max(abs(c0.real), 1.0) or c0.real <= 0.0:
            raise NotPositiveDefinite("diagonal entry c_0 must be real and positive")
        c = c.copy()
        c[0] = c0.real
        self.first_column = c
        if self.n == 0:
            self.n = c.size
        elif self.n != c.size:
            raise DimensionMismatch(f"n={self.n} but first_column has length {c.size}")

    def dense(self):
        """Materialize the full matrix (test/debug helper)."""
        c = self.first_column
        i = np.arange(self.n)
        lag = i[:, None] - i[None, :]
        out = np.where(lag >= 0, c[np.abs(lag)], np.conj(c[np.abs(lag)]))
        return out


@dataclass
class GSDecomposition:
    """Parameters {rho_i, delta_i} of the inverse decomposition above."""

    rho: np.ndarray
    delta: np.ndarray
    _plan: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=np.complex128)
        self.delta = np.asarray(self.delta, dtype=np.float64)
        if self.rho.shape != self.delta.shape or self.rho.ndim != 1:
            raise DimensionMismatch("rho and delta must be 1-D vectors of equal length")

    @property
    def n(self):
        return self.rho.size

    def _convolution_plan(self):
        # FFTs of the four triangular-Toeplitz kernels used by apply_inverse,
        # cached because one decomposition is typically applied many times.
        if self._plan is None:
            n = self.n
            nfft = _next_fast_len(2 * n - 1) if n > 1 else 1
            rho = self.rho
            v0 = np.concatenate(([0.0], rho[:-1]))
            self._plan = {
                "nfft": nfft,
                # T1 x  == conv(x, rho)[n-1 : 2n-1]
                "f_t1": np.fft.fft(rho, nfft),
                # T1^H y == conv(y, conj(rho)[::-1])[:n]
                "f_t1h": np.fft.fft(np.conj(rho)[::-1], nfft),
                # T0^H x == conv(x, conj(v0)[::-1])[n-1 : 2n-1]
                "f_t0h": np.fft.fft(np.conj(v0)[::-1], nfft),
                # T0 y  == conv(y, v0)[:n]
                "f_t0": np.fft.fft(v0, nfft),
            }
        return self._plan


def _next_fast_len(n):
    from scipy.fft import next_fast_len

    return next_fast_len(n)


def levinson_durbin(t: HermitianToeplitz) -> GSDecomposition:
    """Compute the inverse decomposition by the Levinson-Durbin recursion.

    O(N^2).  Raises NotPositiveDefinite when a pivot delta_i drops below
    PD_EPS * c_0.
    """
    c = t.first_column
    n = t.n
    c0 = c[0].real
    delta = np.empty(n)
    delta[0] = c0
    a = np.zeros(n, dtype=np.complex128)
    a[0] = 1.0
    floor = PD_EPS * c0
    for m in range(1, n):
        acc = c[m] + np.dot(a[1:m], c[m - 1:0:-1])
        k = -acc / delta[m - 1]
        # a <- [a, 0] + k * [0, conj(reversed a)]
        a[1:m + 1] = a[1:m + 1] + k * np.conj(a[m - 1::-1])
        delta[m] = delta[m - 1] * (1.0 - (k * np.conj(k)).real)
        if not delta[m] > floor:
            raise NotPositiveDefinite(f"pivot delta_{m} = {delta[m]:.3e} <= {floor:.3e}")
    rho = np.conj(a)[::-1]
    rho = rho / rho[-1]
    return GSDecomposition(rho=rho, delta=delta)


def _polymul(a, b):
    if min(a.size, b.size) <= 48:
        return np.convolve(a, b)
    return fftconvolve(a, b)


def _polyadd(a, b):
    if a.size < b.size:
        a, b = b, a
    out = a.copy()
    out[: b.size] += b
    return out


def _theta_matmul(p, q):
    """Product of two 2x2 polynomial matrices (tuples of coefficient arrays)."""
    p11, p12, p21, p22 = p
    q11, q12, q21, q22 = q
    return (
        _polyadd(_polymul(p11, q11), _polymul(p12, q21)),
        _polyadd(_polymul(p11, q12), _polymul(p12, q22)),
        _polyadd(_polymul(p21, q11), _polymul(p22, q21)),
        _polyadd(_polymul(p21, q12), _polymul(p22, q22)),
    )


def _schur_base(g, h, n):
    """Classical Schur iteration for n steps on proper generators (g, h).

    g, h are coefficient arrays of length n+1; g has support from degree 0,
    h from degree 1.  Returns the 2x2 transfer matrix accumulated over the n
    elementary steps and the reflection coefficients.
    """
    g = g.astype(np.complex128, copy=True)
    h = h.astype(np.complex128, copy=True)
    gammas = np.empty(n, dtype=np.complex128)
    one = np.ones(1, dtype=np.complex128)
    zero = np.zeros(1, dtype=np.complex128)
    t11, t12, t21, t22 = one, zero, zero, one
    for j in range(n):
        gj = g[j]
        gamma = h[j + 1] / gj
        mag2 = (gamma * np.conj(gamma)).real
        if mag2 >= 1.0:
            raise NotPositiveDefinite("reflection coefficient magnitude reached 1")
        gammas[j] = gamma
        s = np.sqrt(1.0 - mag2)
        # shift-down of g (multiply by z), then hyperbolic rotation zeroing
        # h at degree j+1
        zg = np.empty_like(g)
        zg[0] = 0.0
        zg[1:] = g[:-1]
        g_new = (zg - np.conj(gamma) * h) / s
        h_new = (h - gamma * zg) / s
        g, h = g_new, h_new
        # accumulate Theta <- Theta * (1/s) [[z, -gamma z], [-conj(gamma), 1]]
        z11 = np.concatenate((zero, t11))
        z21 = np.concatenate((zero, t21))
        n11 = _polyadd(z11, -np.conj(gamma) * t12)
        n12 = _polyadd(-gamma * z11, t12)
        n21 = _polyadd(z21, -np.conj(gamma) * t22)
        n22 = _polyadd(-gamma * z21, t22)
        t11, t12 = n11 / s, n12 / s
        t21, t22 = n21 / s, n22 / s
    return (t11, t12, t21, t22), gammas


def _schur_split(g, h, n):
    """Divide-and-conquer Schur: n steps on generators given in local frame."""
    if n <= _SCHUR_BASE:
        return _schur_base(g[: n + 1], h[: n + 1], n)
    m = n // 2
    theta1, gam1 = _schur_split(g[: m + 1], h[: m + 1], m)
    t11, t12, t21, t22 = theta1
    # transformed generators after m steps; keep degrees m..n and re-base
    gm = _polyadd(_polymul(g[: n + 1], t11), _polymul(h[: n + 1], t21))[m: n + 1]
    hm = _polyadd(_polymul(g[: n + 1], t12), _polymul(h[: n + 1], t22))[m: n + 1]
    theta2, gam2 = _schur_split(gm, hm, n - m)
    theta = _theta_matmul(theta1, theta2)
    return theta, np.concatenate((gam1, gam2))


def generalized_schur(t: HermitianToeplitz) -> GSDecomposition:
    """Compute the inverse decomposition with the divide-and-conquer
    (generalized) Schur algorithm in O(N log^2 N).

    Output matches :func:`levinson_durbin` up to roundoff.
    """
    c = t.first_column
    n = t.n
    c0 = c[0].real
    if n == 1:
        return GSDecomposition(rho=np.ones(1, dtype=np.complex128), delta=np.array([c0]))
    g = c.astype(np.complex128, copy=True)
    h = g.copy()
    h[0] = 0.0
    theta, gammas = _schur_split(g, h, n - 1)
    factors = 1.0 - (gammas * np.conj(gammas)).real
    delta = np.empty(n)
    delta[0] = c0
    delta[1:] = c0 * np.cumprod(factors)
    floor = PD_EPS * c0
    if not np.all(delta > floor):
        m = int(np.argmax(delta <= floor))
        raise NotPositiveDefinite(f"pivot delta_{m} = {delta[m]:.3e} <= {floor:.3e}")
    # predictor polynomial from the transfer matrix; prod of the rotation
    # normalizers equals sqrt(delta_{N-1}/c_0)
    scale = np.sqrt(delta[-1] / c0)
    a = scale * _polyadd(theta[3], theta[1])
    a = a[:n]
    rho = np.conj(a)[::-1]
    rho = rho / rho[-1]
    return GSDecomposition(rho=rho, delta=delta)


def decompose(t: HermitianToeplitz, method: str = "auto") -> GSDecomposition:
    """Dispatch between the two decomposition algorithms.

    Levinson-Durbin wins for N <= 256; the Schur recursion scales better
    above.  `method` in {"auto", "levinson", "schur"} overrides for
    benchmarking.
    """
    if method == "levinson":
        return levinson_durbin(t)
    if method == "schur":
        return generalized_schur(t)
    if method != "auto":
        raise ValueError(f"unknown decomposition method {method!r}")
    return levinson_durbin(t) if t.n <= SCHUR_CUTOVER else generalized_schur(t)


def apply_inverse(d: GSDecomposition, x: np.ndarray) -> np.ndarray:
    """Return C^{-1} x through four FFT convolutions, O(N log N).

    `x` may be a vector of length N or an (N, B) stack of columns.
    """
    x = np.asarray(x, dtype=np.complex128)
    vec_in = x.ndim == 1
    if vec_in:
        x = x[:, None]
    n = d.n
    if x.shape[0] != n:
        raise DimensionMismatch(f"vector length {x.shape[0]} != decomposition size {n}")
    if n == 1:
        out = x / d.delta[-1]
        return out[:, 0] if vec_in else out
    plan = d._convolution_plan()
    nfft = plan["nfft"]

    def conv(fx, fker, lo, hi):
        full = np.fft.ifft(fx * fker[:, None], axis=0)
        return full[lo:hi]

    fx = np.fft.fft(x, nfft, axis=0)
    t1x = conv(fx, plan["f_t1"], n - 1, 2 * n - 1)
    t0hx = conv(fx, plan["f_t0h"], n - 1, 2 * n - 1)
    f1 = np.fft.fft(t1x, nfft, axis=0)
    f0 = np.fft.fft(t0hx, nfft, axis=0)
    y1 = conv(f1, plan["f_t1h"], 0, n)
    y0 = conv(f0, plan["f_t0"], 0, n)
    out = (y1 - y0) / d.delta[-1]
    return out[:, 0] if vec_in else out


def log_det(d: GSDecomposition) -> float:
    """log det C = sum_i log delta_i."""
    return float(np.sum(np.log(d.delta)))


def _weight_coefficients(kind, n):
    """Polynomial coefficients of the diagonal weight in powers q^a i^b,
    where q indexes rho and i indexes the diagonal of C^{-1}."""
    if kind == "s":
        return {(0, 0): 2.0 - n, (0, 1): 1.0, (1, 0): 2.0}
    if kind == "t":
        return {
            (1, 1): -1.0,
            (0, 1): n - 1.5,
            (0, 2): -0.5,
            (1, 0): n - 1.0,
            (0, 0): -(n - 1.0) * (n - 2.0) / 2.0,
        }
    if kind == "v":
        return {
            (3, 0): 2.0 / 3.0,
            (2, 1): 1.0,
            (1, 2): 1.0,
            (2, 0): 2.0 - n,
            (1, 1): 3.0 - 2.0 * n,
            (1, 0): n * n - 3.0 * n + 7.0 / 3.0,
            (0, 3): 1.0 / 3.0,
            (0, 2): 1.5 - n,
            (0, 1): n * n - 3.0 * n + 13.0 / 6.0,
            (0, 0): 1.5 * n * n - n**3 / 3.0 - 13.0 * n / 6.0 + 1.0,
        }
    if kind == "x":
        return {
            (3, 0): 2.0 / 3.0,
            (2, 1): 1.0,
            (2, 0): 2.0 - n,
            (1, 1): 2.0 - n,
            (1, 0): n * n - 3.0 * n + 7.0 / 3.0,
            (0, 3): -1.0 / 6.0,
            (0, 1): (3.0 * n * n - 9.0 * n + 7.0) / 6.0,
            (0, 0): -(n**3) / 3.0 + 1.5 * n * n - 13.0 * n / 6.0 + 1.0,
        }
    raise ValueError(f"kind must be one of {DIAGONAL_KINDS}, got {kind!r}")


def _to_crosscorr_basis(coeffs):
    """Rewrite a polynomial in (q, i) as a polynomial in (q, m) with m = q + i,
    so each monomial maps onto one cross-correlation of weighted rho copies."""
    out = {}
    for (a, b), cf in coeffs.items():
        for j in range(b + 1):
            key = (a + b - j, j)
            out[key] = out.get(key, 0.0) + cf * comb(b, j) * (-1.0) ** (b - j)
    return out


def _cross_correlations(rho, pairs):
    """R_{a,b}(i) = sum_q q^a rho_q (q+i)^b conj(rho_{q+i}) for all lags i,
    returned as arrays over i = -(N-1)..N-1 (ascending)."""
    n = rho.size
    q = np.arange(n, dtype=np.float64)
    fpow = {}
    hpow = {}
    out = {}
    for a, b in pairs:
        if a not in fpow:
            fpow[a] = (q**a) * rho
        if b not in hpow:
            hpow[b] = (q**b) * np.conj(rho)
        out[(a, b)] = fftconvolve(hpow[b], fpow[a][::-1])
    return out


def diagonal_sums(d: GSDecomposition, kind: str) -> np.ndarray:
    """Weighted sums over the diagonals of C^{-1}.

    kind "s": sum of C^{-1} along diagonal i;
    kind "t": same with rows scaled by 2*pi*row;
    kind "v": rows scaled by (2*pi*row)^2;
    kind "x": rows scaled by 2*pi*row and columns by 2*pi*col.

    Returns an array of length 2N-1 whose entry j holds the sum over
    diagonal i = j - (N-1).  C^{-1} and D C^{-1} D are Hermitian, so kinds
    "s" and "x" satisfy omega(-i) == conj(omega(i)) with omega(0) real; this
    symmetry is imposed exactly.  D C^{-1} and D^2 C^{-1} are not Hermitian,
    so "t" and "v" are genuinely asymmetric and evaluated over the full lag
    range.  Cost is O(N log N).
    """
    kind = kind.lower()
    coeffs = _to_crosscorr_basis(_weight_coefficients(kind, d.n))
    corr = _cross_correlations(d.rho, list(coeffs))
    omega = np.zeros(2 * d.n - 1, dtype=np.complex128)
    for key, cf in coeffs.items():
        omega += cf * corr[key]
    scale = {"s": 1.0, "t": 2.0 * np.pi, "v": 4.0 * np.pi**2, "x": 4.0 * np.pi**2}[kind]
    omega *= scale / d.delta[-1]
    if kind in ("s", "x"):
        mid = d.n - 1
        omega[:mid] = np.conj(omega[mid + 1:][::-1])
        omega[mid] = omega[mid].real
    return omega


def all_diagonal_sums(d: GSDecomposition) -> dict:
    """All four diagonal-sum vectors at once, sharing the FFT work."""
    coeff_sets = {k: _to_crosscorr_basis(_weight_coefficients(k, d.n)) for k in DIAGONAL_KINDS}
    pairs = sorted({key for cs in coeff_sets.values() for key in cs})
    corr = _cross_correlations(d.rho, pairs)
    mid = d.n - 1
    out = {}
    for kind, cs in coeff_sets.items():
        omega = np.zeros(2 * d.n - 1, dtype=np.complex128)
        for key, cf in cs.items():
            omega += cf * corr[key]
        scale = {"s": 1.0, "t": 2.0 * np.pi, "v": 4.0 * np.pi**2, "x": 4.0 * np.pi**2}[kind]
        omega *= scale / d.delta[-1]
        if kind in ("s", "x"):
            omega[:mid] = np.conj(omega[mid + 1:][::-1])
            omega[mid] = omega[mid].real
        out[kind] = omega
    return out
