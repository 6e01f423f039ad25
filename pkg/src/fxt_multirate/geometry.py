"""Convex sets (polytopes, balls, boxes) and zero-order-hold discretization."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

MEMBERSHIP_TOL = 1e-9


class EmptySetError(ValueError):
    """Raised when a set operation produces an empty set."""


def _as_matrix(M, name: str) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


@dataclass(frozen=True)
class Polytope:
    """Halfspace representation {x | A x <= b}."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] < 1:
            raise ValueError("polytope needs at least one halfspace")
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @classmethod
    def from_box(cls, lo, hi) -> "Polytope":
        lo = np.asarray(lo, dtype=float).reshape(-1)
        hi = np.asarray(hi, dtype=float).reshape(-1)
        n = lo.size
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo]))

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(np.all(self.A @ np.asarray(x, dtype=float) <= self.b + tol))

    def margin(self, x) -> float:
        """Largest constraint violation max_i (a_i x - b_i); <= 0 inside."""
        return float(np.max(self.A @ np.asarray(x, dtype=float) - self.b))

    def is_empty(self) -> bool:
        from .qp import check_feasibility

        res = check_feasibility(self.A, self.b)
        if res.indeterminate:
            raise RuntimeError("feasibility check of polytope did not terminate")
        return not res.feasible

    def vertices(self, max_combinations: int = 200_000) -> np.ndarray:
        """Brute-force vertex enumeration (small dimension only).

        Every n-subset of facets is intersected; feasible, pairwise-distinct
        intersection points are returned as rows.
        """
        m, n = self.A.shape
        n_comb = _n_choose_k(m, n)
        if n_comb > max_combinations:
            raise NotImplementedError(
                f"vertex enumeration over {n_comb} facet subsets exceeds the limit"
            )
        verts: list[np.ndarray] = []
        for rows in itertools.combinations(range(m), n):
            Asub = self.A[list(rows)]
            if abs(np.linalg.det(Asub)) < 1e-12:
                continue
            v = np.linalg.solve(Asub, self.b[list(rows)])
            if self.contains(v, tol=1e-9) and not any(np.allclose(v, w, atol=1e-9) for w in verts):
                verts.append(v)
        if not verts:
            raise EmptySetError("polytope has no vertices (empty or unbounded)")
        return np.array(verts)


def _n_choose_k(n: int, k: int) -> int:
    from math import comb

    return comb(n, k)


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"radius must be nonnegative, got {self.radius}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(np.linalg.norm(np.asarray(x, dtype=float) - self.center) <= self.radius + tol)


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValueError("lo and hi must have the same shape")
        if np.any(lo > hi):
            raise ValueError("box requires lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def vertices(self) -> np.ndarray:
        corners = itertools.product(*zip(self.lo, self.hi))
        return np.array(list(corners), dtype=float)

    def to_polytope(self) -> Polytope:
        return Polytope.from_box(self.lo, self.hi)


def cross_polytope(r: float, n: int) -> Polytope:
    """The 1-norm ball {x | sum |x_j| <= r}, inscribed in the Euclidean ball of radius r."""
    if r < 0:
        raise ValueError(f"radius must be nonnegative, got {r}")
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=n)))
    return Polytope(signs, np.full(signs.shape[0], float(r)))


def polytope_erode_ball(P: Polytope, r: float) -> Polytope:
    """Pontryagin difference P ⊖ B(0, r).

    Each halfspace a_i x <= b_i is pulled in by r * ||a_i||, which is exact for
    a Euclidean ball.  Raises EmptySetError when the result is empty.
    """
    if r < 0:
        raise ValueError(f"erosion radius must be nonnegative, got {r}")
    if r == 0:
        return P
    eroded = Polytope(P.A, P.b - r * np.linalg.norm(P.A, axis=1))
    if eroded.is_empty():
        raise EmptySetError(f"eroding by a ball of radius {r} empties the set")
    return eroded


def ball_inner_box(r: float, n: int) -> Box:
    """Largest axis-aligned box centred at 0 inside the Euclidean ball B(0, r)."""
    if r < 0 or n < 1:
        raise ValueError(f"need r >= 0 and n >= 1, got r={r}, n={n}")
    w = r / np.sqrt(n)
    return Box(-np.full(n, w), np.full(n, w))


def dist_to_box(x, B: Box) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != B.lo.shape:
        raise ValueError(f"dimension mismatch: x {x.shape} vs box {B.lo.shape}")
    return float(np.linalg.norm(x - np.clip(x, B.lo, B.hi)))


def polytope_as_box(P: Polytope) -> Box:
    """Recover a Box from a polytope made only of +/- coordinate halfspaces."""
    n = P.dim
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    for a, b in zip(P.A, P.b):
        nz = np.flatnonzero(a)
        if nz.size != 1:
            raise ValueError("polytope is not axis-aligned")
        j = nz[0]
        if a[j] > 0:
            hi[j] = min(hi[j], b / a[j])
        else:
            lo[j] = max(lo[j], b / a[j])
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("polytope is unbounded along some axis")
    return Box(lo, hi)


@dataclass(frozen=True)
class DiscreteLtiModel:
    """Continuous pair (A, B) and its exact ZOH discretization at period T."""

    A: np.ndarray
    B: np.ndarray
    T: float
    Abar: np.ndarray = field(repr=False)
    Bbar: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    def step(self, z, v) -> np.ndarray:
        return self.Abar @ np.asarray(z, dtype=float) + self.Bbar @ np.atleast_1d(np.asarray(v, dtype=float))


def zoh_discretize(A, B, T: float) -> DiscreteLtiModel:
    """Exact zero-order-hold discretization via the augmented matrix exponential.

    expm([[A, B], [0, 0]] * T) = [[Abar, Bbar], [0, I]].
    """
    A = _as_matrix(A, "A")
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    B = _as_matrix(B, "B")
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise ValueError(f"B has {B.shape[0]} rows, expected {n}")
    if not T > 0:
        raise ValueError(f"sampling period must be positive, got {T}")
    m = B.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    E = scipy.linalg.expm(M * T)
    return DiscreteLtiModel(A=A, B=B, T=float(T), Abar=E[:n, :n].copy(), Bbar=E[:n, n:].copy())
