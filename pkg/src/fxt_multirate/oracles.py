"""Independent reference computations used to cross-check the solvers.

Nothing here calls the interior-point solver or the matrix exponential; each
oracle reaches the same answer by a different route.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class EnumerationResult:
    x: Optional[np.ndarray]
    objective: float
    active: tuple
    feasible: bool


def _batch_kkt(Pinv, q, A, b):
    """Solve the equality-constrained QP for a batch of constraint sets.

    A has shape (batch, k, n).  Returns x (batch, n), multipliers (batch, k)
    and a mask of batches whose Schur complement was well conditioned.
    """
    Pq = Pinv @ q
    PA = A @ Pinv                                    # (batch, k, n)
    S = PA @ np.swapaxes(A, 1, 2)                    # A P^-1 A'
    rhs = -(b + A @ Pq)
    ok = np.linalg.cond(S) < 1e12 if A.shape[1] else np.ones(A.shape[0], dtype=bool)
    lam = np.zeros(b.shape)
    if A.shape[1] and np.any(ok):
        lam[ok] = np.linalg.solve(S[ok], rhs[ok][..., None])[..., 0]
    x = -(Pq[None, :] + np.einsum("bkn,bk->bn", PA, lam))
    return x, lam, ok


def active_set_enumeration(P, q, G, h, Aeq=None, beq=None, tol: float = 1e-9,
                           chunk: int = 4096) -> EnumerationResult:
    """Brute-force KKT search over active sets, smallest sets first.

    For a strictly convex QP the optimum is the unique point satisfying KKT
    with some active set.  The cost is combinatorial; meant for n <= 10.
    """
    P = np.asarray(P, dtype=float)
    q = np.asarray(q, dtype=float)
    n = q.size
    G = np.zeros((0, n)) if G is None else np.atleast_2d(np.asarray(G, dtype=float)).reshape(-1, n)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float).reshape(-1)
    Aeq = np.zeros((0, n)) if Aeq is None else np.atleast_2d(np.asarray(Aeq, dtype=float)).reshape(-1, n)
    beq = np.zeros(0) if beq is None else np.asarray(beq, dtype=float).reshape(-1)
    mi, me = G.shape[0], Aeq.shape[0]
    Pinv = np.linalg.inv(P)
    scale = 1.0 + np.abs(h).max(initial=0.0) + np.abs(beq).max(initial=0.0)
    for size in range(0, min(mi, n - me) + 1):
        combos = itertools.combinations(range(mi), size)
        while True:
            sets = list(itertools.islice(combos, chunk))
            if not sets:
                break
            batch = np.array(sets, dtype=int).reshape(len(sets), size)
            A = np.concatenate([np.broadcast_to(Aeq, (len(batch), me, n)), G[batch]], axis=1)
            b = np.concatenate([np.broadcast_to(beq, (len(batch), me)), h[batch]], axis=1)
            x, lam, ok = _batch_kkt(Pinv, q, A, b)
            good = ok & np.all(x @ G.T - h <= tol * scale, axis=1) & np.all(lam[:, me:] >= -tol * scale, axis=1)
            if np.any(good):
                j = int(np.flatnonzero(good)[0])
                xj = x[j]
                return EnumerationResult(xj, float(0.5 * xj @ P @ xj + q @ xj), tuple(batch[j]), True)
    return EnumerationResult(None, float("nan"), (), False)


def euler_zoh(A, B, T: float, log2_step: int = 20, levels: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Discretize by forward-Euler products with Richardson extrapolation.

    Forward Euler on the augmented system [[A, B], [0, 0]] with step s gives
    (I + s M)^(T/s).  The powers are formed by repeated squaring on D = P - I
    (P^2 - I = 2D + D^2), which avoids cancellation against the identity.
    Steps 2^-(log2_step - levels + 1) .. 2^-log2_step feed a Richardson table;
    the Euler error expands in integer powers of s.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n, m = A.shape[0], B.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A
    M[:n, n:] = B
    steps_per_T = T * 2.0 ** log2_step
    if abs(steps_per_T - round(steps_per_T)) > 1e-9 or round(steps_per_T) & (round(steps_per_T) - 1):
        raise ValueError("T must be a power of two multiple of the finest step")
    est = []
    for lev in range(levels):
        p = log2_step - levels + 1 + lev
        s = 2.0 ** -p
        D = s * M
        for _ in range(int(round(np.log2(T / s)))):
            D = 2 * D + D @ D
        est.append(D)
    table = [est]
    for j in range(1, levels):
        prev = table[-1]
        f = 2.0 ** j
        table.append([(f * prev[i + 1] - prev[i]) / (f - 1) for i in range(len(prev) - 1)])
    E = np.eye(n + m) + table[-1][0]
    return E[:n, :n], E[:n, n:]


def scalar_fxt_reach_time(e0: float, alpha: float, mu: float, c: float) -> float:
    """Closed-form time for |e| to fall from e0 to c under the scalar law.

    With V = e^2/2 - c^2/2 and V' = -alpha V^(1+1/mu) - alpha V^(1-1/mu),
    substituting w = V^(1/mu) gives dt = mu dw / (alpha (1 + w^2)).
    """
    V0 = 0.5 * e0 * e0 - 0.5 * c * c
    if V0 <= 0:
        return 0.0
    return float(mu / alpha * np.arctan(V0 ** (1.0 / mu)))
