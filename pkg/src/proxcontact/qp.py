"""Dense strictly convex QP with inequality constraints.

Solves::

    minimize    0.5 x^T H x + g^T x
    subject to  A x <= b

with the Goldfarb-Idnani dual active-set method: start at the unconstrained
minimiser and add the most violated row until every row holds, dropping rows
whose multipliers would turn negative. Problems here are tiny (n = 7 joints,
one row per nearby obstacle), so every step is a dense solve.

If the rows are jointly infeasible the problem is re-solved with one
non-negative slack per row, penalised linearly by ``SLACK_WEIGHT``; the
result carries ``slack_used=True``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SLACK_WEIGHT = 1e6
FEAS_TOL = 1e-12


class QpError(ValueError):
    """Raised for malformed problems (bad shapes, non positive-definite H)."""


class _Infeasible(Exception):
    pass


@dataclass(frozen=True)
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A: np.ndarray = field(default=None)
    b: np.ndarray = field(default=None)

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        g = np.asarray(self.g, dtype=float)
        n = g.shape[0]
        if H.shape != (n, n):
            raise QpError(f"H has shape {H.shape}, expected {(n, n)}")
        A = np.zeros((0, n)) if self.A is None else np.asarray(self.A, dtype=float).reshape(-1, n)
        b = np.zeros(0) if self.b is None else np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise QpError("A and b disagree on the number of constraints")
        for name, val in (("H", H), ("g", g), ("A", A), ("b", b)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.g.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x)


@dataclass(frozen=True)
class QpSolution:
    """Optimal point, tight rows and their multipliers (``Hx + g + A^T lam = 0``)."""

    x: np.ndarray
    active_set: tuple
    iterations: int
    slack_used: bool
    multipliers: np.ndarray
    objective: float


def _inverse_pd(H):
    if not np.allclose(H, H.T, atol=1e-9, rtol=0.0):
        raise QpError("H is not symmetric")
    try:
        L = np.linalg.cholesky(H)
    except np.linalg.LinAlgError:
        raise QpError("H is not positive definite") from None
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def _dual_active_set(Hinv, g, A, b, max_iter):
    """Goldfarb-Idnani iterations.

    Returns ``(x, active, lam, iterations, converged)`` where ``lam`` is the
    full multiplier vector.
    """
    m = A.shape[0]
    x = -Hinv @ g
    active: list[int] = []
    u = np.zeros(0)
    it = 0
    scale = 1.0 + np.abs(b)
    while it < max_iter:
        it += 1
        viol = A @ x - b
        # most violated row enters; argmax picks the lowest index on ties
        cand = np.where(np.isin(np.arange(m), active), -np.inf, viol / scale)
        p = int(np.argmax(cand)) if m else 0
        if m == 0 or cand[p] <= FEAS_TOL:
            lam = np.zeros(m)
            lam[active] = u
            return x, active, lam, it, True
        a_p = A[p]
        u_p = 0.0
        while True:
            if active:
                N = A[active]
                M = N @ Hinv @ N.T
                r = np.linalg.solve(M, N @ Hinv @ a_p)
                z = Hinv @ a_p - Hinv @ N.T @ r
            else:
                r = np.zeros(0)
                z = Hinv @ a_p
            # partial (dual) step: first active multiplier to reach zero
            t1, k = np.inf, -1
            for j, rj in enumerate(r):
                if rj > 1e-14:
                    tj = u[j] / rj
                    if tj < t1:
                        t1, k = tj, j
            curv = a_p @ z
            t2 = np.inf if curv <= 1e-14 * (1.0 + a_p @ a_p) else (a_p @ x - b[p]) / curv
            if np.isinf(t1) and np.isinf(t2):
                raise _Infeasible
            t = min(t1, t2)
            if not np.isinf(t2):
                x = x - t * z
            u = u - t * r
            u_p += t
            if t2 <= t1:
                active.append(p)
                u = np.append(u, u_p)
                break
            del active[k]
            u = np.delete(u, k)
            it += 1
            if it >= max_iter:
                break
    lam = np.zeros(m)
    lam[active[: len(u)]] = u[: len(active)]
    return x, active, lam, it, False


class ActiveSetSolver:
    """Stateful solver that warm-starts from the previous active set.

    One instance per control loop. The stateless :func:`solve` entry point
    builds a fresh instance per call.
    """

    def __init__(self):
        self._previous: tuple = ()

    def reset(self) -> None:
        self._previous = ()

    def solve(self, problem: QpProblem) -> QpSolution:
        H, g, A, b = problem.H, problem.g, problem.A, problem.b
        n, m = problem.n, problem.m
        Hinv = _inverse_pd(H)

        if self._previous and max(self._previous) < m:
            warm = self._try_working_set(problem, list(self._previous))
            if warm is not None:
                return warm

        max_iter = 50 * (n + m)
        try:
            x, active, lam, it, ok = _dual_active_set(Hinv, g, A, b, max_iter)
        except _Infeasible:
            self._previous = ()
            return self._solve_with_slack(problem)
        if not ok:
            self._previous = ()
            return QpSolution(x, tuple(sorted(active)), it, True, lam, problem.objective(x))
        self._previous = tuple(sorted(active))
        return QpSolution(x, self._previous, it, False, lam, problem.objective(x))

    def _try_working_set(self, problem, working):
        H, g, A, b = problem.H, problem.g, problem.A, problem.b
        n, k = problem.n, len(working)
        K = np.zeros((n + k, n + k))
        K[:n, :n] = H
        K[:n, n:] = A[working].T
        K[n:, :n] = A[working]
        try:
            sol = np.linalg.solve(K, np.concatenate([-g, b[working]]))
        except np.linalg.LinAlgError:
            return None
        x, lam_w = sol[:n], sol[n:]
        if np.any(A @ x - b > 1e-12 * (1.0 + np.abs(b))) or np.any(lam_w < 0.0):
            return None
        lam = np.zeros(problem.m)
        lam[working] = lam_w
        return QpSolution(x, tuple(working), 1, False, lam, problem.objective(x))

    def _solve_with_slack(self, problem):
        H, g, A, b = problem.H, problem.g, problem.A, problem.b
        n, m = problem.n, problem.m
        H1 = np.zeros((n + m, n + m))
        H1[:n, :n] = H
        H1[n:, n:] = np.eye(m)
        g1 = np.concatenate([g, np.full(m, SLACK_WEIGHT)])
        A1 = np.block([[A, -np.eye(m)], [np.zeros((m, n)), -np.eye(m)]])
        b1 = np.concatenate([b, np.zeros(m)])
        z, active, lam1, it, _ = _dual_active_set(_inverse_pd(H1), g1, A1, b1, 50 * (n + 3 * m))
        x = z[:n]
        rows = tuple(sorted(i for i in active if i < m))
        return QpSolution(x, rows, it, True, lam1[:m], problem.objective(x))


def solve(problem: QpProblem) -> QpSolution:
    """Solve ``problem`` from a cold start."""
    return ActiveSetSolver().solve(problem)
