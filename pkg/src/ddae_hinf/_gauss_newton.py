"""Gauss-Newton refinement of singular-value peaks.

Both peak problems in this package have the same shape: a complex matrix
``M(t)`` depending on a real parameter vector ``t`` (a frequency, or a vector
of phases) and constant ``B B^T``, ``C^T C``, with ``xi`` a singular value of
``C M(t)^{-1} B`` iff

    [ M(t)          -B B^T / xi ] [u]
    [ C^T C / xi    -M(t)^*     ] [v] = 0

has a nontrivial solution.  Stationarity of ``xi`` in ``t_k`` reads
``Re(v^* dM/dt_k u) = 0``.  Two real normalisations fix the scale and phase of
``(u, v)``: ``|u|^2 + |v|^2 = 2`` and ``Im(u[r]) = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import CorrectionDiverged, MaxIterExceeded

WATCHDOG = 3  # consecutive nonmonotone Gauss-Newton steps tolerated


@dataclass
class PeakSolution:
    t: np.ndarray
    xi: float
    u: np.ndarray
    v: np.ndarray
    iterations: int
    residuals: list = field(default_factory=list)


def _cplx_block(M: np.ndarray) -> np.ndarray:
    return np.block([[M.real, -M.imag], [M.imag, M.real]])


def _split(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag])


class PeakProblem:
    """Residual and Jacobian of the peak equations.

    Parameters
    ----------
    M, dM, d2M : callables
        ``M(t)`` -> (n, n) complex; ``dM(t)`` -> list of k matrices;
        ``d2M(t)`` -> nested k x k list of matrices (``None`` entries are zero).
    BBt, CtC : (n, n) real arrays
    """

    def __init__(self, M: Callable, dM: Callable, d2M: Callable, BBt, CtC, ref: int):
        self.M, self.dM, self.d2M = M, dM, d2M
        self.BBt = np.asarray(BBt, dtype=float)
        self.CtC = np.asarray(CtC, dtype=float)
        self.n = self.BBt.shape[0]
        self.ref = ref

    def unpack(self, x: np.ndarray, k: int):
        n = self.n
        t = x[:k]
        xi = x[k]
        o = k + 1
        u = x[o:o + n] + 1j * x[o + n:o + 2 * n]
        v = x[o + 2 * n:o + 3 * n] + 1j * x[o + 3 * n:o + 4 * n]
        return t, xi, u, v

    @staticmethod
    def pack(t, xi, u, v) -> np.ndarray:
        return np.concatenate([np.atleast_1d(t), [xi], u.real, u.imag, v.real, v.imag])

    def residual(self, x: np.ndarray, k: int) -> np.ndarray:
        t, xi, u, v = self.unpack(x, k)
        M = self.M(t)
        dM = self.dM(t)
        r1 = M @ u - self.BBt @ v / xi
        r2 = self.CtC @ u / xi - M.conj().T @ v
        stat = [np.real(v.conj() @ (D @ u)) for D in dM]
        norm = [np.vdot(u, u).real + np.vdot(v, v).real - 2.0, u[self.ref].imag]
        return np.concatenate([_split(r1), _split(r2), stat, norm])

    def jacobian(self, x: np.ndarray, k: int) -> np.ndarray:
        n = self.n
        t, xi, u, v = self.unpack(x, k)
        M = self.M(t)
        dM = self.dM(t)
        d2M = self.d2M(t)
        MH = M.conj().T
        rows = 4 * n + k + 2
        cols = k + 1 + 4 * n
        J = np.zeros((rows, cols))
        o = k + 1
        # block rows of the linear system
        J[:2 * n, o:o + 2 * n] = _cplx_block(M)
        J[:2 * n, o + 2 * n:] = _cplx_block(-self.BBt / xi + 0j)
        J[2 * n:4 * n, o:o + 2 * n] = _cplx_block(self.CtC / xi + 0j)
        J[2 * n:4 * n, o + 2 * n:] = _cplx_block(-MH)
        for j, D in enumerate(dM):
            J[:2 * n, j] = _split(D @ u)
            J[2 * n:4 * n, j] = _split(-(D.conj().T @ v))
        J[:2 * n, k] = _split(self.BBt @ v / xi**2 + 0j)
        J[2 * n:4 * n, k] = _split(-self.CtC @ u / xi**2 + 0j)
        # stationarity rows
        for i, D in enumerate(dM):
            r = 4 * n + i
            for j in range(k):
                D2 = d2M[i][j]
                if D2 is not None:
                    J[r, j] = np.real(v.conj() @ (D2 @ u))
            w = v.conj() @ D
            g = D @ u
            J[r, o:o + n] = w.real
            J[r, o + n:o + 2 * n] = -w.imag
            J[r, o + 2 * n:o + 3 * n] = g.real
            J[r, o + 3 * n:o + 4 * n] = g.imag
        r = 4 * n + k
        J[r, o:] = 2.0 * np.concatenate([u.real, u.imag, v.real, v.imag])
        J[r + 1, o + n + self.ref] = 1.0
        return J


def normalize_pair(u: np.ndarray, v: np.ndarray, ref: int | None = None):
    """Scale ``(u, v)`` to ``|u|^2+|v|^2 = 2`` and rotate ``u[ref]`` onto the real axis."""
    if ref is None:
        ref = int(np.argmax(np.abs(u)))
    s = np.sqrt((np.vdot(u, u).real + np.vdot(v, v).real) / 2.0)
    if s == 0:
        raise CorrectionDiverged("zero certificate vectors")
    ph = u[ref] / abs(u[ref]) if abs(u[ref]) > 0 else 1.0
    return u / (s * ph), v / (s * ph), ref


def solve_peak(
    problem: PeakProblem,
    t0,
    xi0: float,
    u0: np.ndarray,
    v0: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 30,
    t_ok: Callable | None = None,
) -> PeakSolution:
    """Gauss-Newton iteration for the overdetermined peak equations.

    Converges when ``|F| < tol (1 + xi) s`` with ``s = max(1, ||M(t0)||_F)``
    accounting for badly scaled matrices.  If rounding prevents reaching that
    bound, a stalled iteration with ``|F| < 1e-8 (1 + xi) s`` is also accepted.
    Full steps that increase ``|F|`` are tolerated ``WATCHDOG`` times in a
    row; after that the iteration returns to the best point and backtracks.
    """
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    k = t0.size
    sc = max(1.0, float(np.linalg.norm(problem.M(t0))))
    tol = tol * sc
    loose = 1e-8 * sc
    x = problem.pack(t0, float(xi0), u0, v0)
    F = problem.residual(x, k)
    fn = float(np.linalg.norm(F))
    history = [fn]
    best = (x, F, fn)
    trial = 0
    stall = 0

    def done(x, it):
        t, xi, u, v = problem.unpack(x, k)
        return PeakSolution(t.copy(), float(xi), u, v, it, history)

    def admissible(xn):
        return xn[k] > 0 and (t_ok is None or t_ok(xn[:k]))

    for it in range(1, max_iter + 1):
        if fn < tol * (1.0 + abs(x[k])):
            return done(x, it - 1)
        dx = np.linalg.lstsq(problem.jacobian(x, k), -F, rcond=None)[0]
        xn = x + dx
        fnn = np.inf
        if admissible(xn):
            Fn = problem.residual(xn, k)
            fnn = float(np.linalg.norm(Fn))
        if not (np.isfinite(fnn) and (fnn < fn or trial < WATCHDOG)):
            # watchdog expired or full step unusable: backtrack from the best point
            x, F, fn = best
            trial = 0
            dx = np.linalg.lstsq(problem.jacobian(x, k), -F, rcond=None)[0]
            step = 1.0
            for _ in range(8):
                xn = x + step * dx
                if admissible(xn):
                    Fn = problem.residual(xn, k)
                    fnn = float(np.linalg.norm(Fn))
                    if np.isfinite(fnn) and fnn < fn:
                        break
                step *= 0.5
            else:
                if fn < loose * (1.0 + abs(x[k])):
                    return done(x, it - 1)
                raise CorrectionDiverged(
                    f"Gauss-Newton stalled at residual {fn:.3e} after {it - 1} iterations"
                )
        elif fnn >= fn:
            # tentative nonmonotone full step; Gauss-Newton often overshoots once
            # on flat peaks before converging quadratically
            trial += 1
        stall = stall + 1 if fn > fnn > 0.9 * fn and fnn < loose * (1.0 + abs(xn[k])) else 0
        x, F, fn = xn, Fn, fnn
        history.append(fn)
        if fn < best[2]:
            best = (x, F, fn)
            trial = 0
        if stall >= 2:
            return done(x, it)
    x, F, fn = best
    if fn < tol * (1.0 + abs(x[k])):
        return done(x, max_iter)
    raise MaxIterExceeded(f"no convergence in {max_iter} iterations (residual {fn:.3e})")
