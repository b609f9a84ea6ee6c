"""Limited-memory quasi-Newton refinement of the active (theta, gamma)
block.

The parameter vector stacks the active frequencies followed by the active
variances.  The inverse-Hessian model is the standard two-loop recursion
preconditioned by a diagonal Hessian estimate; it is rebuilt from scratch
whenever the active set (and hence the parameter dimension) changes.  The
line search is plain Armijo backtracking with the step capped so that no
variance goes negative; frequencies wrap around [0, 1) afterwards (the
objective is 1-periodic in each of them).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, LineSearchFailed

MAX_PAIRS = 10

ARMIJO_C1 = 1e-4
BACKTRACK_FACTOR = 0.5
MAX_BACKTRACKS = 30

# pairs with near-zero curvature are skipped to keep the model PSD
_CURVATURE_EPS = 1e-12


@dataclass
class LbfgsMemory:
    """Stored (step, gradient-difference) pairs plus the diagonal Hessian
    used to seed the inverse-Hessian model."""

    diag_init: np.ndarray
    pairs: list = field(default_factory=list)
    max_pairs: int = MAX_PAIRS

    def __post_init__(self):
        self.diag_init = np.asarray(self.diag_init, dtype=np.float64)
        if np.any(self.diag_init <= 0.0):
            raise ValueError("diag_init must be strictly positive")

    @property
    def dim(self):
        return self.diag_init.size

    def push(self, step, grad_diff):
        curv = float(np.dot(step, grad_diff))
        if curv <= _CURVATURE_EPS * np.linalg.norm(step) * np.linalg.norm(grad_diff):
            return  # would break positive definiteness; silently skipped
        self.pairs.append((step, grad_diff, 1.0 / curv))
        if len(self.pairs) > self.max_pairs:
            self.pairs.pop(0)


def reset_on_dimension_change(memory, new_diag_init) -> LbfgsMemory:
    """Fresh memory after any activation/deactivation: all pairs dropped,
    new diagonal initialization installed."""
    max_pairs = memory.max_pairs if memory is not None else MAX_PAIRS
    return LbfgsMemory(diag_init=new_diag_init, max_pairs=max_pairs)


def two_loop_direction(memory: LbfgsMemory, grad):
    """Search direction -H grad; with no stored pairs this is exactly
    -diag_init^{-1} grad."""
    q = grad.copy()
    alphas = []
    for step, gdiff, rho in reversed(memory.pairs):
        a = rho * np.dot(step, q)
        alphas.append(a)
        q -= a * gdiff
    r = q / memory.diag_init
    for (step, gdiff, rho), a in zip(memory.pairs, reversed(alphas)):
        b = rho * np.dot(gdiff, r)
        r += step * (a - b)
    return -r


def split_point(point):
    k = point.size // 2
    return point[:k], point[k:]


def _gamma_step_cap(point, direction):
    _, gammas = split_point(point)
    _, dg = split_point(direction)
    shrink = dg < 0.0
    if not np.any(shrink):
        return np.inf
    return float(np.min(gammas[shrink] / -dg[shrink]))


def _wrap(point):
    out = point.copy()
    k = point.size // 2
    out[:k] = np.mod(out[:k], 1.0)
    return out


def lbfgs_step(memory: LbfgsMemory, point, f0, g0, objective_fn, gradient_fn):
    """One quasi-Newton update of the stacked (theta, gamma) vector.

    objective_fn(point) -> float evaluates the objective; gradient_fn(point)
    -> vector is called once at the accepted point.  Returns
    (new_point, f_new, g_new, memory, sq_newton_decrement).  Raises
    LineSearchFailed when no Armijo step exists; callers treat the point as
    converged.
    """
    point = np.asarray(point, dtype=np.float64)
    g0 = np.asarray(g0, dtype=np.float64)
    if point.size != memory.dim or g0.size != memory.dim:
        raise DimensionMismatch("point/gradient dimension does not match the memory")
    if not np.any(g0):
        return point, f0, g0, memory, 0.0

    direction = two_loop_direction(memory, g0)
    slope = float(np.dot(g0, direction))
    decrement = -slope
    if slope >= 0.0:
        # defensive: fall back to the pure diagonal model
        direction = -g0 / memory.diag_init
        slope = float(np.dot(g0, direction))
        decrement = -slope

    alpha = min(1.0, _gamma_step_cap(point, direction))
    if alpha <= 0.0:
        raise LineSearchFailed("already pinned at the gamma >= 0 boundary")
    for _ in range(MAX_BACKTRACKS):
        candidate = _wrap(point + alpha * direction)
        f_new = objective_fn(candidate)
        if f_new <= f0 + ARMIJO_C1 * alpha * slope:
            g_new = np.asarray(gradient_fn(candidate), dtype=np.float64)
            memory.push(alpha * direction, g_new - g0)
            return candidate, f_new, g_new, memory, decrement
        alpha *= BACKTRACK_FACTOR
    raise LineSearchFailed(f"no sufficient decrease within {MAX_BACKTRACKS} backtracks")
