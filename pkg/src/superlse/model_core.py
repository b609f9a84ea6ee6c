"""Probabilistic model state, marginal-likelihood objective and the
per-component statistics needed by the optimizer and the activation tests.

The model: y = A(theta_z) alpha_z + noise with A = Phi Psi(theta), noise
variance beta, independent CN(0, gamma_k) coefficient priors and Bernoulli
activation variables z_k with probability zeta.  Marginalizing alpha gives
y ~ CN(0, C) with C = beta I + A Gamma_z A^H, and the objective

    L = sum_g [ ln|C| + y_g^H C^{-1} y_g ]
        - sum_k [ z_k ln zeta + (1 - z_k) ln(1 - zeta) ]    (+ const).

Two interchangeable evaluation backends are provided:

* superfast -- complete data only; C is Hermitian Toeplitz, handled through
  its inverse decomposition (O(N log^2 N) per evaluation);
* semifast -- any observation pattern; Woodbury form with a K x K Cholesky
  factorization (O(N K^2 + N log N)).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import nufft, toeplitz
from .errors import (
    DimensionMismatch,
    InvalidPattern,
    NoActiveComponents,
)

BACKENDS = ("auto", "superfast", "semifast")

# Pattern-independent floor on the noise variance, relative to the mean
# per-sample energy (the likelihood is unbounded as beta -> 0).
BETA_FLOOR_SCALE = 1e-12


# ---------------------------------------------------------------------------
# domain types


@dataclass
class Observation:
    """One or more snapshots observed through a (possibly subsampling and
    scaling) measurement operator.

    y holds the snapshots as rows, shape (G, M).  Complete data means
    M == n and the operator is the identity; otherwise `observed_indices`
    (1-based, sorted) and `scales` give the single nonzero of each row.
    """

    y: np.ndarray
    n: int
    observed_indices: np.ndarray = None
    scales: np.ndarray = None

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.y, dtype=np.complex128))
        if y.ndim != 2:
            raise DimensionMismatch("y must have shape (G, M)")
        self.y = y
        if self.observed_indices is None:
            if y.shape[1] != self.n:
                raise DimensionMismatch(f"complete data needs M == n, got {y.shape[1]} != {self.n}")
            self.scales = None
        else:
            idx = np.asarray(self.observed_indices, dtype=np.int64)
            if idx.ndim != 1 or idx.size != y.shape[1]:
                raise DimensionMismatch("observed_indices must have length M")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("observed_indices must be sorted and unique")
            if idx[0] < 1 or idx[-1] > self.n:
                raise ValueError("observed_indices must lie in 1..n")
            self.observed_indices = idx
            if self.scales is None:
                self.scales = np.ones(idx.size, dtype=np.complex128)
            else:
                self.scales = np.asarray(self.scales, dtype=np.complex128)
                if self.scales.shape != idx.shape:
                    raise DimensionMismatch("scales must have length M")

    @classmethod
    def complete(cls, y):
        y = np.atleast_2d(np.asarray(y, dtype=np.complex128))
        return cls(y=y, n=y.shape[1])

    @classmethod
    def incomplete(cls, y, n, observed_indices, scales=None):
        return cls(y=y, n=n, observed_indices=observed_indices, scales=scales)

    @property
    def is_complete(self):
        return self.observed_indices is None

    @property
    def m(self):
        return self.y.shape[1]

    @property
    def g(self):
        return self.y.shape[0]

    @property
    def idx0(self):
        """Observed positions, 0-based."""
        return None if self.is_complete else self.observed_indices - 1

    def scatter(self, w):
        """Phi^H w: lift (M, ...) onto the full length-n axis."""
        if self.is_complete:
            return w
        out = np.zeros((self.n,) + w.shape[1:], dtype=np.complex128)
        sc = np.conj(self.scales).reshape((-1,) + (1,) * (w.ndim - 1))
        out[self.idx0] = sc * w
        return out

    def sample(self, z):
        """Phi z: observe a full-length vector."""
        if self.is_complete:
            return z
        sc = self.scales.reshape((-1,) + (1,) * (z.ndim - 1))
        return sc * z[self.idx0]

    def energy(self):
        """Mean per-snapshot energy, sum_m |y_m|^2 averaged over snapshots."""
        return float(np.mean(np.sum(np.abs(self.y) ** 2, axis=1)))

    def beta_floor(self):
        return BETA_FLOOR_SCALE * self.energy() / self.m


@dataclass
class EstimationState:
    """Activation flags plus per-component parameters; slots above k_hat
    active ones are placeholders whose theta/gamma values carry no meaning."""

    z: np.ndarray
    theta: np.ndarray
    gamma: np.ndarray
    beta: float
    zeta: float

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=bool)
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.gamma = np.asarray(self.gamma, dtype=np.float64)
        if not (self.z.shape == self.theta.shape == self.gamma.shape):
            raise DimensionMismatch("z, theta, gamma must share length K_max")
        if not 0.0 <= self.zeta <= 0.5:
            raise ValueError("zeta must lie in [0, 1/2]")

    @classmethod
    def empty(cls, k_max, beta, zeta=0.2):
        return cls(
            z=np.zeros(k_max, dtype=bool),
            theta=np.zeros(k_max),
            gamma=np.zeros(k_max),
            beta=float(beta),
            zeta=float(zeta),
        )

    @property
    def k_max(self):
        return self.z.size

    @property
    def k_hat(self):
        return int(np.count_nonzero(self.z))

    @property
    def active_indices(self):
        return np.flatnonzero(self.z)

    @property
    def active_theta(self):
        return self.theta[self.z]

    @property
    def active_gamma(self):
        return self.gamma[self.z]

    def copy(self):
        return EstimationState(
            z=self.z.copy(),
            theta=self.theta.copy(),
            gamma=self.gamma.copy(),
            beta=self.beta,
            zeta=self.zeta,
        )


@dataclass
class ComponentStats:
    """Per-component quadratic/derivative statistics at the current state.

    q, r, u depend on the data and have one row per snapshot, shape (G, K);
    s, t, v, x involve only C^{-1} and are shared across snapshots."""

    q: np.ndarray
    r: np.ndarray
    u: np.ndarray
    s: np.ndarray
    t: np.ndarray
    v: np.ndarray
    x: np.ndarray


@dataclass
class GridStats:
    """q and s evaluated on the activation grid of L equispaced frequencies."""

    q_grid: np.ndarray  # (G, L)
    s_grid: np.ndarray  # (L,), real
    grid_size: int


@dataclass
class Posterior:
    mu: np.ndarray  # (G, K)
    sigma_trace_term: float


def default_grid_size(n, grid_factor=8):
    """grid_factor * n rounded up to a power of two (>= 2n)."""
    target = max(2 * n, grid_factor * n)
    return 1 << int(np.ceil(np.log2(target)))


def prior_zeta(zeta, k_max):
    """Activation probability as used inside criteria and the objective:
    floored at 1/(2 K_max) so ln((1-zeta)/zeta) stays finite when the active
    set is empty, capped at 1/2."""
    return float(min(max(zeta, 0.5 / k_max), 0.5))


def prior_term(k_hat, zeta, k_max):
    ze = prior_zeta(zeta, k_max)
    return -(k_hat * np.log(ze) + (k_max - k_hat) * np.log1p(-ze))


def covariance_first_column(state: EstimationState, n, obs: Observation = None) -> toeplitz.HermitianToeplitz:
    """First column of C = beta I + Psi Gamma Psi^H (complete data):
    c_m = beta [m == 0] + sum_k gamma_k e^{j 2 pi m theta_k}."""
    if obs is not None and not obs.is_complete:
        raise InvalidPattern("the Toeplitz covariance form requires complete data")
    c = nufft.steer_forward(state.active_theta, state.active_gamma.astype(np.complex128), n)
    c[0] = c[0].real + state.beta
    return toeplitz.HermitianToeplitz(c)


# ---------------------------------------------------------------------------
# superfast backend (complete data, Toeplitz structure)


class _SuperfastBundle:
    def __init__(self, engine, thetas, gammas, beta):
        obs = engine.obs
        n = obs.n
        self.engine = engine
        self.thetas = thetas
        self.gammas = gammas
        self.beta = beta
        c = nufft.steer_forward(thetas, gammas.astype(np.complex128), n, method=engine.steer_method)
        c[0] = c[0].real + beta
        self.decomp = toeplitz.decompose(toeplitz.HermitianToeplitz(c), method=engine.decomp_method)
        ycols = obs.y.T  # (N, G)
        self.w = toeplitz.apply_inverse(self.decomp, ycols)  # C^{-1} y
        quad = float(np.sum(np.conj(ycols) * self.w).real)
        self.data_term = obs.g * toeplitz.log_det(self.decomp) + quad
        self.cinv_y_sq = float(np.sum(np.abs(self.w) ** 2))
        self._omegas = None
        self._stats = None
        self._grid = None

    def omegas(self):
        if self._omegas is None:
            self._omegas = toeplitz.all_diagonal_sums(self.decomp)
        return self._omegas

    def stats(self) -> ComponentStats:
        if self._stats is None:
            if self.thetas.size == 0:
                raise NoActiveComponents("component statistics need an active component")
            obs = self.engine.obs
            g = obs.g
            d = 2.0 * np.pi * np.arange(obs.n)
            stack = np.concatenate((self.w, d[:, None] * self.w, (d**2)[:, None] * self.w), axis=1)
            adj = nufft.steer_adjoint(self.thetas, stack, method=self.engine.steer_method)
            q, r, u = adj[:, :g].T, adj[:, g: 2 * g].T, adj[:, 2 * g:].T
            om = self.omegas()
            omstack = np.stack([om["s"], om["t"], om["v"], om["x"]], axis=1)
            stvx = nufft.fourier_sum_two_sided(self.thetas, omstack, method=self.engine.steer_method)
            self._stats = ComponentStats(
                q=q, r=r, u=u,
                s=stvx[:, 0].real.copy(),
                t=stvx[:, 1].copy(),
                v=stvx[:, 2].copy(),
                x=stvx[:, 3].real.copy(),
            )
        return self._stats

    def grid(self) -> GridStats:
        if self._grid is None:
            length = self.engine.grid_size
            q_grid = np.fft.fft(self.w, n=length, axis=0).T  # (G, L)
            om_s = self.omegas()["s"]
            n = self.engine.obs.n
            buf = np.zeros(length, dtype=np.complex128)
            buf[np.arange(-(n - 1), n) % length] = om_s
            s_grid = (length * np.fft.ifft(buf)).real
            self._grid = GridStats(q_grid=q_grid, s_grid=s_grid, grid_size=length)
        return self._grid


class _SemifastBundle:
    def __init__(self, engine, thetas, gammas, beta):
        obs = engine.obs
        self.engine = engine
        self.thetas = thetas
        self.gammas = gammas
        self.beta = beta
        self.pos = gammas > 0.0  # components with zero variance do not enter C

        idx = obs.observed_indices if not obs.is_complete else np.arange(1, obs.n + 1)
        w0 = np.ones(obs.m) if obs.is_complete else np.abs(obs.scales) ** 2
        d1 = 2.0 * np.pi * (idx - 1)
        self.idx = idx
        self.w0 = w0
        sm = engine.steer_method
        self.g0 = _hermitize(nufft.gram(thetas, thetas, w0, idx, n=obs.n, method=sm))
        self.g1 = _hermitize(nufft.gram(thetas, thetas, w0 * d1, idx, n=obs.n, method=sm))
        self.g2 = _hermitize(nufft.gram(thetas, thetas, w0 * d1**2, idx, n=obs.n, method=sm))

        pos = self.pos
        kp = int(np.count_nonzero(pos))
        ycols = obs.y.T  # (M, G)
        ys = obs.scatter(ycols)  # (N, G)
        self.ahy = nufft.steer_adjoint(thetas, ys, method=sm) if thetas.size else np.zeros((0, obs.g), complex)
        ln_c = obs.m * np.log(beta)
        if kp:
            sigma_inv = self.g0[np.ix_(pos, pos)] / beta + np.diag(1.0 / gammas[pos])
            self.chol = cho_factor(sigma_inv, lower=True)
            ln_c += float(np.sum(np.log(gammas[pos])))
            ln_c += 2.0 * float(np.sum(np.log(np.diag(self.chol[0]).real)))
            wp = cho_solve(self.chol, self.ahy[pos])  # Sigma A^H y, (kp, G)
            quad = float(np.sum(np.abs(ycols) ** 2)) / beta - float(
                np.sum(np.conj(self.ahy[pos]) * wp).real
            ) / beta**2
            z1 = nufft.steer_forward(thetas[pos], wp, obs.n, method=sm)
            cinv_y = ycols / beta - obs.sample(z1) / beta**2  # (M, G)
        else:
            self.chol = None
            quad = float(np.sum(np.abs(ycols) ** 2)) / beta
            cinv_y = ycols / beta
        self.ln_c = ln_c
        self.data_term = obs.g * ln_c + quad
        self.cinv_y = cinv_y
        self.cinv_y_sq = float(np.sum(np.abs(cinv_y) ** 2))
        self.e = obs.scatter(cinv_y)  # Phi^H C^{-1} y, (N, G)
        self._stats = None
        self._grid = None

    def _sigma_solve(self, rhs):
        return cho_solve(self.chol, rhs)

    def stats(self) -> ComponentStats:
        if self._stats is None:
            if self.thetas.size == 0:
                raise NoActiveComponents("component statistics need an active component")
            obs = self.engine.obs
            g = obs.g
            beta = self.beta
            d = 2.0 * np.pi * np.arange(obs.n)
            stack = np.concatenate((self.e, d[:, None] * self.e, (d**2)[:, None] * self.e), axis=1)
            adj = nufft.steer_adjoint(self.thetas, stack, method=self.engine.steer_method)
            q, r, u = adj[:, :g].T, adj[:, g: 2 * g].T, adj[:, 2 * g:].T
            pos = self.pos
            s = np.diag(self.g0).real / beta
            t = np.diag(self.g1).astype(np.complex128) / beta
            v = np.diag(self.g2).astype(np.complex128) / beta
            x = np.diag(self.g2).real / beta
            if self.chol is not None:
                w00 = self._sigma_solve(self.g0[pos])  # Sigma G0[P,:]
                s = s - np.einsum("kp,pk->k", self.g0[:, pos], w00).real / beta**2
                t = t - np.einsum("kp,pk->k", self.g1[:, pos], w00) / beta**2
                v = v - np.einsum("kp,pk->k", self.g2[:, pos], w00) / beta**2
                w11 = self._sigma_solve(self.g1[:, pos].conj().T)  # Sigma G1^H[P,:]
                x = x - np.einsum("kp,pk->k", self.g1[:, pos], w11).real / beta**2
            self._stats = ComponentStats(q=q, r=r, u=u, s=s, t=t, v=v, x=x)
        return self._stats

    def grid(self) -> GridStats:
        if self._grid is None:
            obs = self.engine.obs
            length = self.engine.grid_size
            beta = self.beta
            q_grid = np.fft.fft(self.e, n=length, axis=0).T
            s_grid = np.full(length, float(np.sum(self.w0)) / beta)
            pos = self.pos
            if self.chol is not None and np.any(pos):
                phases = np.exp(-2j * np.pi * np.outer(self.idx - 1, self.thetas[pos]))
                scat = np.zeros((length, int(np.count_nonzero(pos))), dtype=np.complex128)
                np.add.at(scat, self.idx - 1, self.w0[:, None] * phases)
                b = (length * np.fft.ifft(scat, axis=0)).T  # (kp, L)
                wb = self._sigma_solve(b)
                s_grid = s_grid - np.einsum("pl,pl->l", np.conj(b), wb).real / beta**2
            self._grid = GridStats(q_grid=q_grid, s_grid=s_grid, grid_size=length)
        return self._grid


def _hermitize(g):
    return 0.5 * (g + g.conj().T)


class _Engine:
    """Shared bundle cache keyed by the C-defining state content."""

    _CACHE = 4

    def __init__(self, obs, grid_size=None, decomp_method="auto", steer_method="auto"):
        self.obs = obs
        self.grid_size = grid_size or default_grid_size(obs.n)
        self.decomp_method = decomp_method
        self.steer_method = steer_method
        self._bundles = {}
        self._order = []

    def bundle(self, state: EstimationState):
        thetas = state.active_theta
        gammas = state.active_gamma
        key = (thetas.tobytes(), gammas.tobytes(), float(state.beta))
        hit = self._bundles.get(key)
        if hit is not None:
            return hit
        b = self._make(thetas, gammas, float(state.beta))
        self._bundles[key] = b
        self._order.append(key)
        if len(self._order) > self._CACHE:
            self._bundles.pop(self._order.pop(0), None)
        return b

    def objective(self, state: EstimationState):
        return self.bundle(state).data_term + prior_term(state.k_hat, state.zeta, state.k_max)


class SuperfastEngine(_Engine):
    backend_name = "superfast"

    def __init__(self, obs, **kw):
        if not obs.is_complete:
            raise InvalidPattern("superfast backend requires the complete observation pattern")
        super().__init__(obs, **kw)

    def _make(self, thetas, gammas, beta):
        return _SuperfastBundle(self, thetas, gammas, beta)


class SemifastEngine(_Engine):
    backend_name = "semifast"

    def _make(self, thetas, gammas, beta):
        return _SemifastBundle(self, thetas, gammas, beta)


def make_engine(obs: Observation, backend="auto", grid_size=None, decomp_method="auto", steer_method="auto"):
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}")
    if backend == "auto":
        backend = "superfast" if (obs.is_complete and obs.n >= 512) else "semifast"
    cls = SuperfastEngine if backend == "superfast" else SemifastEngine
    return cls(obs, grid_size=grid_size, decomp_method=decomp_method, steer_method=steer_method)


# ---------------------------------------------------------------------------
# public operations


def objective(state: EstimationState, obs: Observation, backend="auto", engine=None) -> float:
    """Negative log posterior (up to constants) at the given state."""
    eng = engine if engine is not None else make_engine(obs, backend)
    return eng.objective(state)


def component_stats(state: EstimationState, obs: Observation, backend="auto", engine=None) -> ComponentStats:
    if state.k_hat == 0:
        raise NoActiveComponents("component statistics need an active component")
    eng = engine if engine is not None else make_engine(obs, backend)
    return eng.bundle(state).stats()


def grid_stats(state: EstimationState, obs: Observation, backend="auto", grid_size=None, engine=None) -> GridStats:
    eng = engine if engine is not None else make_engine(obs, backend, grid_size=grid_size)
    return eng.bundle(state).grid()


def gradient(state: EstimationState, obs: Observation, stats: ComponentStats):
    """d objective / d theta_k and d objective / d gamma_k for active k,
    summed over snapshots."""
    g = obs.g
    ga = state.active_gamma
    cross = np.sum(np.conj(stats.q) * stats.r, axis=0)
    d_theta = 2.0 * ga * (g * stats.t - cross).imag
    d_gamma = g * stats.s - np.sum(np.abs(stats.q) ** 2, axis=0)
    return d_theta, d_gamma


def diag_hessian(state: EstimationState, stats: ComponentStats, n=None, fallback=True):
    """Diagonal second derivatives, ordered [theta block, gamma block].

    With fallback=True non-positive entries are replaced by (50 n)^2 in the
    frequency block and gamma_k^{-2} in the variance block, keeping the
    quasi-Newton initialization positive definite."""
    g = stats.q.shape[0]
    ga = state.active_gamma
    q2 = np.sum(np.abs(stats.q) ** 2, axis=0)
    r2 = np.sum(np.abs(stats.r) ** 2, axis=0)
    rqc = np.sum(stats.r * np.conj(stats.q), axis=0)
    uqc = np.sum(stats.u * np.conj(stats.q), axis=0)
    core = (
        g * (stats.x - stats.v)
        + ga * g * (stats.t**2 - stats.x * stats.s)
        + ga * (stats.x * q2 + stats.s * r2 - 2.0 * stats.t * rqc)
        + uqc
        - r2
    )
    d2_theta = 2.0 * ga * core.real
    d2_gamma = 2.0 * stats.s * q2 - g * stats.s**2
    if fallback:
        if n is None:
            raise ValueError("n is required when fallback replacement is enabled")
        bad_t = d2_theta <= 0.0
        d2_theta = np.where(bad_t, float(50 * n) ** 2, d2_theta)
        safe_gamma = np.where(ga > 0.0, ga, 1.0 / (50.0 * n))
        d2_gamma = np.where(d2_gamma <= 0.0, safe_gamma**-2, d2_gamma)
    return np.concatenate((d2_theta, d2_gamma))


def posterior(state: EstimationState, obs: Observation, stats: ComponentStats) -> Posterior:
    """Coefficient posterior mean mu = gamma ⊙ q (per snapshot) and the
    EM trace term tr(Sigma A^H A) = sum_k beta s_k gamma_k."""
    if state.k_hat == 0:
        raise NoActiveComponents("posterior needs an active component")
    ga = state.active_gamma
    mu = ga[None, :] * stats.q
    trace = float(state.beta * np.sum(stats.s * ga))
    return Posterior(mu=mu, sigma_trace_term=trace)
