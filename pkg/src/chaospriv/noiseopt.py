"""Design of the additive noise pmf that minimises I[X; Y + V].

The noise V lives on the query alphabet and is independent of Y, so the
distorted query Z = Y + V lives on the sumset alphabet.  The leakage
I[X; Z] is convex in the noise probabilities and is minimised here by
projected gradient descent on the probability simplex.
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_log_base, log_factor, readonly
from .probmodel import Alphabet, ConditionalPmf, JointPmf, Pmf, mutual_information, sumset_alphabet

log = logging.getLogger(__name__)

__all__ = [
    "NoiseDesignProblem",
    "NoiseSolution",
    "SolverOptions",
    "project_simplex",
    "cost",
    "cost_gradient",
    "solve",
    "brute_force_solve",
    "OptimalNoiseDesigner",
]

_LOG_FLOOR = 1e-300


def project_simplex(v):
    """Euclidean projection of ``v`` onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, n + 1)
    rho = np.nonzero(u - css / ks > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    w = np.maximum(v - theta, 0.0)
    return w / w.sum()


def _shift_tensor(y_alphabet, z_alphabet):
    """0/1 tensor ``T[j, k, v]`` = 1 iff ``y_j + y_v == z_k`` (exact)."""
    M = y_alphabet.size
    T = np.zeros((M, z_alphabet.size, M))
    exact = [tuple(Fraction(c) for c in row) for row in y_alphabet.points]
    for j, v in product(range(M), range(M)):
        s = np.array([float(a + b) for a, b in zip(exact[j], exact[v])])
        k = z_alphabet.index_of(s)
        if k is None:
            raise ValueError("z alphabet does not contain every y + v")
        T[j, k, v] = 1.0
    return T


@dataclass(frozen=True, eq=False)
class NoiseDesignProblem:
    """Leakage-minimisation instance: p_X, p_{Y|X} and the log base."""

    p_x: Pmf
    p_y_given_x: ConditionalPmf
    base: object = 2
    z_alphabet: Alphabet = field(init=False)
    _D: np.ndarray = field(init=False, repr=False)
    _E: np.ndarray = field(init=False, repr=False)
    _px: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "base", check_log_base(self.base))
        if self.p_x.alphabet != self.p_y_given_x.given_alphabet:
            raise ValueError("p_y_given_x rows must be indexed by the alphabet of p_x")
        y_alpha = self.p_y_given_x.out_alphabet
        z_alpha = sumset_alphabet(y_alpha, y_alpha)
        T = _shift_tensor(y_alpha, z_alpha)
        # zero-mass x atoms contribute nothing to the cost
        keep = self.p_x.probs > 0
        px = self.p_x.probs[keep]
        D = np.einsum("xj,jkv->xkv", self.p_y_given_x.probs[keep], T)
        object.__setattr__(self, "z_alphabet", z_alpha)
        object.__setattr__(self, "_px", readonly(px))
        object.__setattr__(self, "_D", readonly(D))
        object.__setattr__(self, "_E", readonly(np.einsum("x,xkv->kv", px, D)))

    @property
    def y_alphabet(self):
        return self.p_y_given_x.out_alphabet

    @property
    def p_y(self):
        return Pmf(self.y_alphabet, self.p_x.probs @ self.p_y_given_x.probs, normalize=True)

    @property
    def joint_xy(self):
        return JointPmf.from_conditional(self.p_x, self.p_y_given_x)

    def leakage_without_noise(self):
        """I[X;Y], the leakage of the undistorted query."""
        return mutual_information(self.joint_xy, self.base)

    def to_dict(self):
        return {"p_x": self.p_x.to_dict(), "p_y_given_x": self.p_y_given_x.to_dict(),
                "base": self.base}

    @classmethod
    def from_dict(cls, data, base=None):
        return cls(Pmf.from_dict(data["p_x"], normalize=True),
                   ConditionalPmf.from_dict(data["p_y_given_x"], normalize=True),
                   base=data.get("base", 2) if base is None else base)


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 100_000
    step_rule: str = "backtracking"
    step_size: float = 1.0
    objective_tol: float = 1e-12
    objective_window: int = 50
    gradient_tol: float = 1e-8
    initial: object = "uniform"

    def __post_init__(self):
        if self.step_rule not in ("backtracking", "fixed"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if min(self.objective_tol, self.gradient_tol, self.step_size) <= 0:
            raise ValueError("tolerances and step size must be positive")
        if self.max_iterations < 1 or self.objective_window < 1:
            raise ValueError("iteration budgets must be positive")


@dataclass(frozen=True, eq=False)
class NoiseSolution:
    p_v_star: Pmf
    optimal_value: float
    iterations: int
    converged: bool
    kkt_residual: float
    base: object = 2
    history: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        return {
            "p_v_star": self.p_v_star.to_dict(),
            "optimal_value": float(self.optimal_value),
            "base": self.base,
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "kkt_residual": float(self.kkt_residual),
        }


def _as_probs(problem, p_v):
    if isinstance(p_v, Pmf):
        if p_v.alphabet != problem.y_alphabet:
            raise ValueError("noise pmf must live on the query alphabet")
        return np.asarray(p_v.probs)
    p = np.asarray(p_v, dtype=float)
    if p.shape[-1] != problem.y_alphabet.size:
        raise ValueError(f"expected {problem.y_alphabet.size} noise probabilities, got {p.shape[-1]}")
    return p


def _cost_batch(problem, P):
    """Leakage in nats for each row of ``P`` (shape (..., M))."""
    pzx = np.einsum("xkv,...v->...xk", problem._D, P)
    pz = np.einsum("kv,...v->...k", problem._E, P)[..., None, :]
    pz = np.broadcast_to(pz, pzx.shape)
    ratio = np.ones_like(pzx)
    mask = pzx > 0
    ratio[mask] = pzx[mask] / pz[mask]
    terms = pzx * np.log(ratio)
    return np.einsum("x,...xk->...", problem._px, terms)


def cost(problem, p_v):
    """I[X; Y + V] for noise probabilities ``p_v`` on the query alphabet."""
    p = _as_probs(problem, p_v)
    return max(float(_cost_batch(problem, p)), 0.0) / log_factor(problem.base)


def cost_gradient(problem, p_v):
    """Gradient of :func:`cost` with respect to the noise probabilities.

    Only meaningful at interior points; on the boundary components whose
    increase would open new support are large and negative.
    """
    p = _as_probs(problem, p_v)
    D, E = problem._D, problem._E
    pzx = D @ p
    pz = E @ p
    L = np.log(np.maximum(pzx, _LOG_FLOOR)) - np.log(np.maximum(pz, _LOG_FLOOR))[None, :]
    g = np.einsum("x,xkv,xk->v", problem._px, D, L)
    return g / log_factor(problem.base)


def _initial_point(problem, options):
    M = problem.y_alphabet.size
    if isinstance(options.initial, str):
        if options.initial != "uniform":
            raise ValueError(f"unknown initial point policy {options.initial!r}")
        return np.full(M, 1.0 / M)
    return project_simplex(_as_probs(problem, options.initial))


def solve(problem, options=None):
    """Minimise the leakage over the simplex with projected gradient descent.

    Returns the best iterate; ``converged`` is False when the iteration
    budget ran out before either stopping test fired.
    """
    options = options or SolverOptions()
    p = _initial_point(problem, options)
    f = cost(problem, p)
    step = options.step_size
    history = [f]
    converged = False
    it = 0
    for it in range(1, options.max_iterations + 1):
        g = cost_gradient(problem, p)
        if options.step_rule == "fixed":
            q = project_simplex(p - step * g)
            fq = cost(problem, q)
        else:
            t = step
            while True:
                q = project_simplex(p - t * g)
                fq = cost(problem, q)
                d = q - p
                if fq <= f + g @ d + (d @ d) / (2 * t) + 1e-15 or t < 1e-30:
                    break
                t *= 0.5
            step = 2.0 * t
        if fq <= f:
            p, f = q, fq
        elif options.step_rule == "backtracking":
            # line search stalled at machine precision
            history.append(f)
            converged = True
            break
        history.append(f)
        pg = p - project_simplex(p - cost_gradient(problem, p))
        if np.linalg.norm(pg) <= options.gradient_tol:
            converged = True
            break
        w = options.objective_window
        if len(history) > w and history[-1 - w] - history[-1] <= options.objective_tol:
            converged = True
            break
    if not converged:
        log.warning("noise solver hit max_iterations=%d without converging", options.max_iterations)
    residual = float(np.max(np.abs(p - project_simplex(p - cost_gradient(problem, p)))))
    return NoiseSolution(Pmf(problem.y_alphabet, p, normalize=True), f, it, converged, residual,
                         base=problem.base, history=np.asarray(history))


def _simplex_grid(M, n):
    if M == 1:
        return np.ones((1, 1))
    if M == 2:
        i = np.arange(n + 1)
        return np.stack([i, n - i], axis=1) / n
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    keep = i + j <= n
    i, j = i[keep], j[keep]
    return np.stack([i, j, n - i - j], axis=1) / n


def brute_force_solve(problem, grid_step=1e-3):
    """Exhaustive grid minimiser over the simplex, for alphabets of at most 3 points."""
    M = problem.y_alphabet.size
    if M > 3:
        raise ValueError(f"grid search limited to 3 noise atoms, got {M}")
    n = int(round(1.0 / grid_step))
    if n < 1 or abs(n * grid_step - 1.0) > 1e-9:
        raise ValueError("grid_step must divide 1")
    grid = _simplex_grid(M, n)
    values = np.concatenate([_cost_batch(problem, chunk) for chunk in np.array_split(grid, max(1, len(grid) // 20000))])
    values = np.maximum(values, 0.0) / log_factor(problem.base)
    best = int(np.argmin(values))
    p = grid[best]
    residual = float(np.max(np.abs(p - project_simplex(p - cost_gradient(problem, p)))))
    return NoiseSolution(Pmf(problem.y_alphabet, p), float(values[best]), len(grid), True, residual,
                         base=problem.base)


def _unique_rows(A):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    points, codes = np.unique(A, axis=0, return_inverse=True)
    return Alphabet(points), codes.ravel()


class OptimalNoiseDesigner(BaseEstimator):
    """Fit the leakage-minimising additive noise from (private, query) samples.

    Parameters
    ----------
    base : {2, 'e'}
        Logarithm base for every reported information quantity.
    max_iter, tol, step_rule
        Passed to :class:`SolverOptions` (``tol`` is the projected-gradient tolerance).
    random_state
        Seed for :meth:`transform`'s noise draws.

    Attributes
    ----------
    problem_ : NoiseDesignProblem
    solution_ : NoiseSolution
    p_v_ : ndarray of shape (n_query_values,)
    optimal_value_ : float
        I[X; Y + V] at the fitted noise.
    leakage_without_noise_ : float
        I[X; Y].
    """

    def __init__(self, base=2, max_iter=100_000, tol=1e-8, step_rule="backtracking",
                 random_state=None):
        self.base = base
        self.max_iter = max_iter
        self.tol = tol
        self.step_rule = step_rule
        self.random_state = random_state

    def _options(self):
        return SolverOptions(max_iterations=self.max_iter, gradient_tol=self.tol,
                             step_rule=self.step_rule)

    def fit(self, X, y):
        X = check_array(X, ensure_2d=False, dtype=float)
        y = check_array(y, ensure_2d=False, dtype=float)
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        x_alpha, xc = _unique_rows(X)
        y_alpha, yc = _unique_rows(y)
        counts = np.zeros((x_alpha.size, y_alpha.size))
        np.add.at(counts, (xc, yc), 1.0)
        joint = JointPmf.from_counts(x_alpha, y_alpha, counts)
        p_x = Pmf(x_alpha, counts.sum(axis=1), normalize=True)
        return self.fit_problem(NoiseDesignProblem(p_x, joint.conditional(), base=self.base))

    def fit_problem(self, problem):
        """Fit directly from a :class:`NoiseDesignProblem`."""
        self.problem_ = problem
        self.solution_ = solve(problem, self._options())
        self.p_v_ = np.asarray(self.solution_.p_v_star.probs)
        self.optimal_value_ = self.solution_.optimal_value
        self.leakage_without_noise_ = problem.leakage_without_noise()
        self.n_iter_ = self.solution_.iterations
        self.converged_ = self.solution_.converged
        return self

    def sample_noise(self, n_samples, random_state=None):
        check_is_fitted(self, "p_v_")
        rng = check_random_state(self.random_state if random_state is None else random_state)
        idx = rng.choice(self.p_v_.size, size=n_samples, p=self.p_v_)
        return self.problem_.y_alphabet.points[idx]

    def transform(self, y):
        """Distort queries: ``y + v`` with ``v`` drawn i.i.d. from the fitted pmf."""
        check_is_fitted(self, "p_v_")
        y = check_array(y, ensure_2d=False, dtype=float)
        squeeze = y.ndim == 1
        Y = y[:, None] if squeeze else y
        Z = Y + self.sample_noise(Y.shape[0])
        return Z[:, 0] if squeeze else Z
