"""Oscillator definitions: drivers (autonomous) and responders (input-driven)."""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .._validation import check_square_matrix, readonly


@dataclass(frozen=True, eq=False)
class OscillatorSystem:
    """Generic ``dx/dt = rhs(x, u, t)`` with scalar output ``x[output_index]``.

    ``rhs`` must return a new array.  Drivers ignore ``u``.
    """

    dimension: int
    rhs: Callable
    output_index: int = 0
    name: str = "system"

    def __post_init__(self):
        if not 0 <= self.output_index < self.dimension:
            raise ValueError(f"output_index {self.output_index} outside state of size {self.dimension}")

    @property
    def is_driver(self):
        return False

    def jacobian(self, x, u, t=0.0, eps=1e-6):
        """Central-difference Jacobian of ``rhs`` with respect to the state."""
        x = np.asarray(x, dtype=float)
        J = np.empty((self.dimension, self.dimension))
        for i in range(self.dimension):
            e = np.zeros(self.dimension)
            e[i] = eps
            J[:, i] = (np.asarray(self.rhs(x + e, u, t)) - np.asarray(self.rhs(x - e, u, t))) / (2 * eps)
        return J


@dataclass(frozen=True, eq=False)
class Driver(OscillatorSystem):
    @property
    def is_driver(self):
        return True


def _lorenz_rhs_factory(sigma, rho, beta):
    def rhs(x, u=None, t=0.0):
        return np.array([sigma * (x[1] - x[0]),
                         rho * x[0] - x[1] - x[0] * x[2],
                         -beta * x[2] + x[0] * x[1]])
    return rhs


@dataclass(frozen=True, eq=False)
class LorenzDriver(Driver):
    """Lorenz system; output is the first state."""

    dimension: int = 3
    rhs: Callable = None
    output_index: int = 0
    name: str = "lorenz"
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0

    def __post_init__(self):
        object.__setattr__(self, "rhs", _lorenz_rhs_factory(self.sigma, self.rho, self.beta))
        super().__post_init__()

    def jacobian(self, x, u=None, t=0.0):
        x = np.asarray(x, dtype=float)
        return np.array([[-self.sigma, self.sigma, 0.0],
                         [self.rho - x[2], -1.0, -x[0]],
                         [x[1], x[0], -self.beta]])


@dataclass(frozen=True, eq=False)
class ConstantDriver(Driver):
    """Zero vector field: the state (and hence the output) never moves."""

    dimension: int = 1
    rhs: Callable = None
    output_index: int = 0
    name: str = "constant"

    def __post_init__(self):
        n = self.dimension
        object.__setattr__(self, "rhs", lambda x, u=None, t=0.0: np.zeros(n))
        super().__post_init__()


def quad_sine_input_map(u):
    """``psi(u) = (-5 u^2, 50 sin u)``, vectorised over ``u``."""
    u = np.asarray(u, dtype=float)
    return np.stack([-5.0 * u * u, 50.0 * np.sin(u)], axis=-1)


INPUT_MAPS = {"quad-sine": quad_sine_input_map}


@dataclass(frozen=True, eq=False)
class AffineResponder(OscillatorSystem):
    """``dz/dt = A z + psi(u)``.

    ``input_map`` must be vectorised: an array of ``n`` inputs maps to an
    ``(n, dimension)`` array.
    """

    A: np.ndarray = None
    input_map: Callable = quad_sine_input_map
    dimension: int = 0
    rhs: Callable = None
    output_index: int = 1
    name: str = "affine-responder"

    def __post_init__(self):
        A = readonly(check_square_matrix(self.A, "A"))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "dimension", A.shape[0])
        psi = self.input_map

        def rhs(z, u, t=0.0):
            return A @ np.asarray(z, dtype=float) + np.asarray(psi(np.asarray([u], dtype=float)))[0]

        object.__setattr__(self, "rhs", rhs)
        super().__post_init__()

    def jacobian(self, x=None, u=None, t=0.0):
        return np.array(self.A)


def default_driver():
    return LorenzDriver()


def default_responder(A=None):
    """Responder with ``A = diag(-1, -2.5)``, quadratic-sine input map, output = second state."""
    if A is None:
        A = np.diag([-1.0, -2.5])
    return AffineResponder(A=np.asarray(A, dtype=float), input_map=quad_sine_input_map, output_index=1)
