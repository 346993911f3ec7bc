"""Strong exponential stability check.

Two ingredients: the difference part must be stable for every phase vector
(spectral radius of ``A22_0^{-1} sum_i A22_i e^{-j theta_i}`` below one on
the torus), and the rightmost characteristic roots must lie in the open left
half plane.  Roots are estimated from the spectral discretisation and then
polished by Newton's method on the exact characteristic matrix.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .asymptotic import _grid, reduce_delays
from .discretize import DEFAULT_N, build
from .errors import AssumptionOneViolated
from .model import DdaeSystem, partition, validate

log = logging.getLogger(__name__)

RADIUS_MARGIN = 1e-6
ABSCISSA_MARGIN = 1e-8

__all__ = ["StabilityReport", "check_strong_stability", "difference_radius", "rightmost_roots"]


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    spectral_abscissa_estimate: float
    difference_radius: float

    def __iter__(self):
        return iter((self.stable, self.spectral_abscissa_estimate, self.difference_radius))


def difference_radius(sys: DdaeSystem, p_a: int = 20) -> float:
    """Max over the phase grid of the spectral radius of the difference operator."""
    part = partition(sys, validate(sys))
    asys = reduce_delays(part)
    if asys.nu == 0 or asys.m_a == 0:
        return 0.0
    A0inv = np.linalg.inv(asys.A22[0])
    mats = [A0inv @ asys.A22[i] for i in asys.retained]
    thetas = _grid(p_a, asys.m_a)
    P = np.zeros((len(thetas), asys.nu, asys.nu), dtype=complex)
    for col, Mi in enumerate(mats):
        P += np.exp(-1j * thetas[:, col])[:, None, None] * Mi
    return float(np.max(np.abs(np.linalg.eigvals(P))))


def _newton_root(sys: DdaeSystem, lam0: complex, max_iter: int = 12):
    # far-left spurious roots of the discretisation overflow exp(-lam tau)
    with np.errstate(over="ignore", invalid="ignore"):
        lam = _newton_iterate(sys, lam0, max_iter)
    return lam if lam is not None and np.isfinite(lam) else None


def _newton_iterate(sys: DdaeSystem, lam0: complex, max_iter: int):
    M = sys.char_matrix(lam0)
    if not np.all(np.isfinite(M)):
        return None
    _, _, Vh = np.linalg.svd(M)
    x = Vh[-1].conj()
    c = x.copy()
    lam = lam0
    n = sys.n
    for _ in range(max_iter):
        M = sys.char_matrix(lam)
        dM = sys.E.astype(complex)
        for A, tau in zip(sys.A[1:], sys.delays):
            dM = dM + tau * A * np.exp(-lam * tau)
        J = np.zeros((n + 1, n + 1), dtype=complex)
        J[:n, :n] = M
        J[:n, n] = dM @ x
        J[n, :n] = c.conj()
        F = np.concatenate([M @ x, [c.conj() @ x - 1.0]])
        if not (np.all(np.isfinite(J)) and np.all(np.isfinite(F))):
            return None
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return None
        x = x + step[:n]
        lam = lam + step[n]
        if abs(step[n]) < 1e-13 * (1.0 + abs(lam)):
            return lam
    return lam if abs(step[n]) < 1e-8 * (1.0 + abs(lam)) else None


def rightmost_roots(sys: DdaeSystem, N: int = DEFAULT_N, count: int = 6) -> np.ndarray:
    """Rightmost characteristic roots: discretised estimates, Newton-polished."""
    disc = build(sys, N)
    alpha, beta = la.eig(disc.AN, disc.EN, right=False, homogeneous_eigvals=True)
    finite = np.abs(beta) > 1e-12 * np.abs(alpha)
    lam = alpha[finite] / beta[finite]
    lam = lam[np.isfinite(lam)]
    if lam.size == 0:
        return lam
    order = np.argsort(-lam.real)
    picked = lam[order[:count]]
    out = []
    for l0 in picked:
        if sys.m == 0:
            out.append(l0)
            continue
        l1 = _newton_root(sys, l0)
        if l1 is not None and abs(l1 - l0) < 0.1 * (1.0 + abs(l0)):
            out.append(l1)
        else:
            out.append(l0)
    return np.array(out)


def check_strong_stability(sys: DdaeSystem, N: int = DEFAULT_N, p_a: int = 20) -> StabilityReport:
    """Return ``(stable, spectral_abscissa_estimate, difference_radius)``.

    ``stable`` requires ``difference_radius < 1 - 1e-6`` and an abscissa
    below ``-1e-8``.  Systems violating the index-one assumption are reported
    unstable.
    """
    try:
        radius = difference_radius(sys, p_a)
    except AssumptionOneViolated:
        return StabilityReport(False, np.inf, np.inf)
    roots = rightmost_roots(sys, N)
    abscissa = float(np.max(roots.real)) if roots.size else -np.inf
    stable = radius < 1.0 - RADIUS_MARGIN and abscissa < -ABSCISSA_MARGIN
    return StabilityReport(bool(stable), abscissa, radius)
