"""Control-affine plant models x' = f(x) + g(x) u and a fixed-step RK4 integrator."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np


class DivergenceError(RuntimeError):
    """Raised when integration produces a non-finite state."""


class ControlAffinePlant:
    """Base class; subclasses implement f and g."""

    n_x: int
    n_u: int
    name = "plant"

    def f(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def g(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dynamics(self, x, u) -> np.ndarray:
        return self.f(x) + self.g(x) @ u

    def linearize(self, eps: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
        """Jacobians (A, B) at the origin by central differences."""
        n, m = self.n_x, self.n_u
        x0 = np.zeros(n)
        u0 = np.zeros(m)
        A = np.zeros((n, n))
        B = np.zeros((n, m))
        for j in range(n):
            e = np.zeros(n)
            e[j] = eps
            A[:, j] = (self.dynamics(x0 + e, u0) - self.dynamics(x0 - e, u0)) / (2 * eps)
        for j in range(m):
            e = np.zeros(m)
            e[j] = eps
            B[:, j] = (self.dynamics(x0, u0 + e) - self.dynamics(x0, u0 - e)) / (2 * eps)
        return A, B


class LinearPlant(ControlAffinePlant):
    """x' = A x + B u, with exact linearization."""

    def __init__(self, A, B, name: str = "linear"):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.asarray(B, dtype=float)
        self.B = B.reshape(-1, 1) if B.ndim == 1 else B
        self.n_x = self.A.shape[0]
        self.n_u = self.B.shape[1]
        self.name = name

    def f(self, x):
        return self.A @ x

    def g(self, x):
        return self.B

    def linearize(self, eps: float = 1e-6):
        return self.A.copy(), self.B.copy()

    def rk4_matrices(self, dt: float) -> tuple[np.ndarray, np.ndarray]:
        """(Phi, Gamma) with rk4_step(x, u, dt) == Phi x + Gamma u, cached per dt."""
        cache = self.__dict__.setdefault("_rk4_cache", {})
        if dt not in cache:
            M = dt * self.A
            I = np.eye(self.n_x)
            M2 = M @ M
            Phi = I + M + M2 / 2 + M2 @ M / 6 + M2 @ M2 / 24
            Gamma = dt * (I + M / 2 + M2 / 6 + M2 @ M / 24) @ self.B
            cache[dt] = (Phi, Gamma)
        return cache[dt]


def single_integrator(n: int = 1) -> LinearPlant:
    """x' = u, one input per axis."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return LinearPlant(np.zeros((n, n)), np.eye(n), name="integrator")


def double_integrator(n: int = 1) -> LinearPlant:
    """Per axis: position' = velocity, velocity' = u.

    State ordering is (p_1, v_1, p_2, v_2, ...).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    A = np.zeros((2 * n, 2 * n))
    B = np.zeros((2 * n, n))
    for k in range(n):
        A[2 * k, 2 * k + 1] = 1.0
        B[2 * k + 1, k] = 1.0
    return LinearPlant(A, B, name="double_integrator")


def double_integrator_zoh(n: int, T: float) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form ZOH discretization of double_integrator(n)."""
    Ad = np.zeros((2 * n, 2 * n))
    Bd = np.zeros((2 * n, n))
    for k in range(n):
        Ad[2 * k:2 * k + 2, 2 * k:2 * k + 2] = [[1.0, T], [0.0, 1.0]]
        Bd[2 * k:2 * k + 2, k] = [T * T / 2, T]
    return Ad, Bd


@dataclass(frozen=True)
class SegwayParams:
    m_wheel: float = 2.0        # kg, both wheels
    J_wheel: float = 0.04       # kg m^2, both wheels about the axle
    r_wheel: float = 0.2        # m
    m_body: float = 20.0        # kg
    J_body: float = 2.0         # kg m^2 about the body CoM
    l_com: float = 0.5          # m, axle to body CoM
    k_torque: float = 2.0       # N m / A
    k_emf: float = 2.0          # V s / rad
    R_armature: float = 0.5     # ohm
    gravity: float = 9.81       # m / s^2

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"segway parameter {f.name} must be strictly positive, got {v}")

    def as_dict(self) -> dict:
        return asdict(self)


class Segway(ControlAffinePlant):
    """Voltage-driven wheeled inverted pendulum, state (p, v, theta, omega).

    Wheel centre at p, body CoM at (p + l sin(theta), l cos(theta)), theta = 0
    upright.  The motor applies tau = k_t (u - k_b (v/r - omega)) / R between
    wheel and body.  Lagrange's equations give

        M(theta) [p'', theta'']' = [m l sin(theta) omega^2 + tau/r,
                                    m g l sin(theta) - tau]

    with M = [[m_w + m + J_w/r^2, m l cos(theta)], [m l cos(theta), J + m l^2]].
    ``dissipation=False`` drops the back-EMF term (energy-conserving at u = 0).
    """

    n_x = 4
    n_u = 1
    name = "segway"

    def __init__(self, params: SegwayParams | None = None, dissipation: bool = True):
        self.params = params or SegwayParams()
        self.dissipation = dissipation
        p = self.params
        self._Mp = p.m_wheel + p.m_body + p.J_wheel / p.r_wheel ** 2
        self._Jt = p.J_body + p.m_body * p.l_com ** 2
        self._ml = p.m_body * p.l_com
        if self._Mp * self._Jt - self._ml ** 2 <= 0:
            raise ValueError("segway mass matrix is singular for these parameters")
        self._kv = p.k_torque / p.R_armature

    def _minv(self, theta: float):
        c = np.cos(theta)
        det = self._Mp * self._Jt - (self._ml * c) ** 2
        return self._Jt / det, -self._ml * c / det, self._Mp / det

    def f(self, x):
        _, v, theta, omega = x
        p = self.params
        s = np.sin(theta)
        tau = -self._kv * p.k_emf * (v / p.r_wheel - omega) if self.dissipation else 0.0
        q1 = self._ml * s * omega * omega + tau / p.r_wheel
        q2 = self._ml * p.gravity * s - tau
        a, b, d = self._minv(theta)
        return np.array([v, a * q1 + b * q2, omega, b * q1 + d * q2])

    def g(self, x):
        p = self.params
        a, b, d = self._minv(x[2])
        q1 = self._kv / p.r_wheel
        q2 = -self._kv
        return np.array([[0.0], [a * q1 + b * q2], [0.0], [b * q1 + d * q2]])

    def energy(self, x) -> float:
        """Mechanical energy (kinetic + gravitational potential of the body)."""
        _, v, theta, omega = x
        p = self.params
        T = 0.5 * self._Mp * v * v + self._ml * np.cos(theta) * v * omega + 0.5 * self._Jt * omega * omega
        return float(T + self._ml * p.gravity * np.cos(theta))


def segway(params: SegwayParams | None = None, dissipation: bool = True) -> Segway:
    return Segway(params, dissipation)


def rk4_step(plant: ControlAffinePlant, x, u, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step with u held constant."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if isinstance(plant, LinearPlant):
        Phi, Gamma = plant.rk4_matrices(dt)
        out = Phi @ x + Gamma @ u
        if not np.all(np.isfinite(out)):
            raise DivergenceError(f"non-finite state after RK4 step from {x}")
        return out
    k1 = plant.dynamics(x, u)
    k2 = plant.dynamics(x + 0.5 * dt * k1, u)
    k3 = plant.dynamics(x + 0.5 * dt * k2, u)
    k4 = plant.dynamics(x + dt * k3, u)
    out = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"non-finite state after RK4 step from {x}")
    return out
