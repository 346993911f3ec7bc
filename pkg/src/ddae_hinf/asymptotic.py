"""Asymptotic (high-frequency) transfer function and its strong H-infinity norm.

With ``U``/``V`` spanning the left/right nullspace of ``E``, the asymptotic
transfer function replaces every ``e^{-j omega tau_i}`` by a free phase
``e^{-j theta_i}``:

    Ta(theta) = C2 A22(theta)^{-1} B2,
    A22(theta) = -U^T A_0 V - sum_i U^T A_i V e^{-j theta_i}.

Its strong norm is the maximum of ``sigma_1(Ta(theta))`` over the torus and
does not depend on the delay values.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from ._gauss_newton import PeakProblem, normalize_pair, solve_peak
from .errors import CorrectionDiverged, SingularAtTheta
from .model import PartitionedSystem

log = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
COND_MAX = 1e14

__all__ = [
    "AsymptoticSystem",
    "TaNormResult",
    "reduce_delays",
    "ta_matrix",
    "ta_eval",
    "strong_norm_ta",
    "ta_correct",
]


@dataclass(frozen=True)
class AsymptoticSystem:
    """Algebraic part of a partitioned DDAE.

    ``A22[i] = U^T A_i V`` for ``i = 0..m``; only the delay indices listed in
    ``retained`` (1-based, as in ``A22``) enter ``A22(theta)``.
    """

    A22: tuple
    B2: np.ndarray
    C2: np.ndarray
    retained: tuple

    @property
    def nu(self) -> int:
        return self.B2.shape[0]

    @property
    def m_a(self) -> int:
        return len(self.retained)


@dataclass
class TaNormResult:
    value: float
    theta_hat: np.ndarray
    u_a: np.ndarray
    v_a: np.ndarray
    corrected: bool
    grid_value: float = 0.0
    residuals: list = field(default_factory=list)


def reduce_delays(part: PartitionedSystem, tol_prune: float | None = None) -> AsymptoticSystem:
    """Drop delay terms whose algebraic block ``U^T A_i V`` is negligible.

    The default tolerance is ``1e-12 * max_i ||A_i||_2`` computed on the blocks
    of the partitioned system (the orthogonal change of basis preserves norms).
    """
    blocks = part.A22
    if tol_prune is None:
        full = [
            np.linalg.norm(np.block([[a11, a12], [a21, a22]]), 2) if a11.size + a22.size else 0.0
            for a11, a12, a21, a22 in zip(part.A11, part.A12, part.A21, part.A22)
        ]
        tol_prune = 1e-12 * max(full) if full else 0.0
    elif tol_prune <= 0:
        raise ValueError("tol_prune must be positive")
    retained = tuple(
        i for i in range(1, len(blocks))
        if blocks[i].size and np.linalg.norm(blocks[i], 2) > tol_prune
    )
    return AsymptoticSystem(tuple(blocks), part.B2, part.C2, retained)


def ta_matrix(asys: AsymptoticSystem, theta) -> np.ndarray:
    """``A22(theta) = -A22_0 - sum_{retained} A22_i exp(-j theta_i)``."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.size != asys.m_a:
        raise ValueError(f"theta has {theta.size} entries, expected {asys.m_a}")
    M = -asys.A22[0].astype(complex)
    for th, i in zip(theta, asys.retained):
        M = M - asys.A22[i] * np.exp(-1j * th)
    return M


def _ta_solve(asys: AsymptoticSystem, M: np.ndarray) -> np.ndarray:
    if asys.nu and np.linalg.cond(M) > COND_MAX:
        raise SingularAtTheta("difference part singular: A22(theta) is not invertible")
    return np.linalg.solve(M, asys.B2.astype(complex))


def ta_eval(asys: AsymptoticSystem, theta) -> np.ndarray:
    M = ta_matrix(asys, theta)
    return asys.C2 @ _ta_solve(asys, M)


def _grid(p_a: int, m_a: int) -> np.ndarray:
    axis = TWO_PI * np.arange(p_a) / p_a
    if m_a == 0:
        return np.zeros((1, 0))
    return np.array(list(itertools.product(axis, repeat=m_a)))


def _sweep(asys: AsymptoticSystem, thetas: np.ndarray) -> np.ndarray:
    M = np.broadcast_to(-asys.A22[0].astype(complex), (len(thetas),) + asys.A22[0].shape).copy()
    for col, i in enumerate(asys.retained):
        M -= np.exp(-1j * thetas[:, col])[:, None, None] * asys.A22[i]
    s = np.linalg.svd(M, compute_uv=False)
    if np.any(s[:, -1] <= s[:, 0] / COND_MAX):
        raise SingularAtTheta("difference part singular on the theta grid")
    X = np.linalg.solve(M, np.broadcast_to(asys.B2.astype(complex), (len(thetas),) + asys.B2.shape))
    T = asys.C2 @ X
    if T.shape[1] == 0 or T.shape[2] == 0:
        return np.zeros(len(thetas))
    return np.linalg.svd(T, compute_uv=False)[:, 0]


def _certificate(asys: AsymptoticSystem, theta, xi: float):
    M = ta_matrix(asys, theta)
    T = asys.C2 @ _ta_solve(asys, M)
    Ws, s, Rh = np.linalg.svd(T)
    r = Rh[0].conj()
    left = Ws[:, 0]
    u = np.linalg.solve(M, asys.B2 @ r) / xi
    v = np.linalg.solve(M.conj().T, asys.C2.T @ left) / xi
    return u, v


def strong_norm_ta(
    asys: AsymptoticSystem, p_a: int = 20, do_correct: bool = True
) -> TaNormResult:
    """Strong H-infinity norm of the asymptotic transfer function.

    Sweeps ``sigma_1(Ta(theta))`` over the uniform grid ``{2 pi k / p_a}^{m_a}``
    (``p_a**m_a`` evaluations) and optionally refines the best grid point
    with :func:`ta_correct`.  A failed refinement falls back to the grid value
    with ``corrected=False``.
    """
    if p_a < 2:
        raise ValueError("p_a must be at least 2")
    empty = np.zeros(0)
    if asys.nu == 0 or asys.B2.shape[1] == 0 or asys.C2.shape[0] == 0:
        return TaNormResult(0.0, np.zeros(asys.m_a), empty.astype(complex), empty.astype(complex), True)

    thetas = _grid(p_a, asys.m_a)
    vals = _sweep(asys, thetas)
    best = int(np.argmax(vals))
    theta0, xi0 = thetas[best], float(vals[best])
    if xi0 <= np.finfo(float).tiny:
        z = np.zeros(asys.nu, dtype=complex)
        return TaNormResult(0.0, theta0, z, z, True, 0.0)

    u0, v0 = _certificate(asys, theta0, xi0)
    u0, v0, _ = normalize_pair(u0, v0)
    grid_result = TaNormResult(xi0, theta0, u0, v0, asys.m_a == 0, xi0)
    if asys.m_a == 0 or not do_correct:
        return grid_result
    try:
        res = ta_correct(asys, theta0, xi0)
    except CorrectionDiverged as exc:
        log.warning("Ta correction failed (%s); keeping grid value %.6g", exc, xi0)
        return grid_result
    if res.value < xi0 * (1.0 - 1e-9):
        log.warning("Ta correction moved below the grid value; keeping grid value")
        return grid_result
    res.grid_value = xi0
    return res


def ta_correct(
    asys: AsymptoticSystem, theta0, xi0: float, max_iter: int = 30, tol: float = 1e-12
) -> TaNormResult:
    """Refine a grid maximiser of ``sigma_1(Ta(theta))`` by Gauss-Newton.

    Unknowns are ``(theta, xi, u_a, v_a)``; the starting certificate is built
    from the singular vectors of ``Ta(theta0)``.
    """
    theta0 = np.atleast_1d(np.asarray(theta0, dtype=float))
    if xi0 <= 0:
        raise CorrectionDiverged("starting level must be positive")
    u0, v0 = _certificate(asys, theta0, xi0)
    u0, v0, ref = normalize_pair(u0, v0)
    mats = [asys.A22[i] for i in asys.retained]

    def dM(theta):
        return [1j * np.exp(-1j * th) * A for th, A in zip(theta, mats)]

    def d2M(theta):
        k = len(mats)
        out = [[None] * k for _ in range(k)]
        for i, (th, A) in enumerate(zip(theta, mats)):
            out[i][i] = np.exp(-1j * th) * A
        return out

    problem = PeakProblem(
        lambda th: ta_matrix(asys, th),
        dM,
        d2M,
        asys.B2 @ asys.B2.T,
        asys.C2.T @ asys.C2,
        ref,
    )
    sol = solve_peak(problem, theta0, xi0, u0, v0, tol=tol, max_iter=max_iter)
    return TaNormResult(
        float(sol.xi),
        np.mod(sol.t, TWO_PI),
        sol.u,
        sol.v,
        True,
        float(xi0),
        sol.residuals,
    )
