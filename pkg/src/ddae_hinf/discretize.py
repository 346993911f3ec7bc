"""Spectral (collocation) discretisation of a DDAE.

The history segment ``x(t + s), s in [-tau_max, 0]`` is represented by its
values on a Chebyshev mesh; derivatives and delayed values come from the
Lagrange interpolant through those values.  The result is a descriptor system
``(EN, AN, BN, CN)`` of dimension ``(N+1) n`` whose transfer function
``TN(lam) = CN (lam EN - AN)^{-1} BN`` is a rational approximation of ``T``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DdaeSystem, solve_checked

DEFAULT_N = 20

__all__ = [
    "Mesh",
    "DiscretizedSystem",
    "build_mesh",
    "barycentric_weights",
    "differentiation_data",
    "build",
    "tn_eval",
    "DEFAULT_N",
]


@dataclass(frozen=True)
class Mesh:
    """Mesh points in increasing order; ``points[-1] == 0``, ``points[0] == -tau_max``."""

    N: int
    points: np.ndarray
    tau_max: float


@dataclass(frozen=True)
class DiscretizedSystem:
    EN: np.ndarray
    AN: np.ndarray
    BN: np.ndarray
    CN: np.ndarray
    N: int
    mesh: Mesh
    source: str

    @property
    def size(self) -> int:
        return self.EN.shape[0]


def build_mesh(N: int, tau_max: float) -> Mesh:
    """Chebyshev extremal points ``(tau_max/2)(cos(pi i/N) - 1)``, ``i = 0..N``."""
    if N < 1:
        raise ValueError("N must be at least 1")
    if tau_max <= 0:
        raise ValueError("tau_max must be positive")
    i = np.arange(N, -1, -1)
    pts = 0.5 * tau_max * (np.cos(np.pi * i / N) - 1.0)
    pts[0] = -tau_max
    pts[-1] = 0.0
    return Mesh(N, pts, float(tau_max))


def barycentric_weights(points: np.ndarray) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    # rescale to avoid overflow for large N; weights are defined up to a constant
    scale = 4.0 / (x.max() - x.min()) if x.size > 1 else 1.0
    w = 1.0 / np.prod(diff * scale, axis=1)
    return w / np.max(np.abs(w))


def _interp_row(points: np.ndarray, w: np.ndarray, s: float) -> np.ndarray:
    """Values ``l_k(s)`` of all Lagrange basis polynomials at ``s``."""
    d = s - points
    hit = np.flatnonzero(np.abs(d) <= 1e-14 * max(1.0, np.max(np.abs(points))))
    if hit.size:
        row = np.zeros(points.size)
        row[hit[0]] = 1.0
        return row
    c = w / d
    return c / np.sum(c)


def differentiation_data(mesh: Mesh, delays) -> tuple[np.ndarray, np.ndarray]:
    """Differentiation matrix and delayed-value interpolation rows.

    Returns
    -------
    D : (N+1, N+1) array
        ``D[i, k] = l_k'(theta_i)`` in mesh order.
    L : (m, N+1) array
        ``L[l, k] = l_k(-tau_l)``.
    """
    x = mesh.points
    w = barycentric_weights(x)
    n1 = x.size
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    delays = np.asarray(delays, dtype=float)
    L = np.zeros((delays.size, n1))
    for l, tau in enumerate(delays):
        if tau < 0 or tau > mesh.tau_max * (1 + 1e-14):
            raise ValueError(f"delay {tau} outside [0, tau_max={mesh.tau_max}]")
        L[l] = _interp_row(x, w, -tau)
    return D, L


def build(sys: DdaeSystem, N: int = DEFAULT_N) -> DiscretizedSystem:
    """Assemble ``(EN, AN, BN, CN)`` for ``sys`` on an ``N+1`` point mesh.

    Delay-free systems use a unit-length dummy mesh; their last block row is
    then ``A_0`` alone and ``TN`` equals ``T`` exactly.
    """
    n = sys.n
    tau_max = sys.tau_max if sys.m else 1.0
    mesh = build_mesh(N, tau_max)
    D, L = differentiation_data(mesh, sys.delays)
    size = (N + 1) * n
    I = np.eye(n)
    AN = np.zeros((size, size))
    AN[: N * n, :] = np.kron(D[:N, :], I)
    for k in range(N + 1):
        G = sum((A * L[l, k] for l, A in enumerate(sys.A[1:])), np.zeros((n, n)))
        AN[N * n:, k * n:(k + 1) * n] = G
    AN[N * n:, N * n:] += sys.A[0]
    EN = np.eye(size)
    EN[N * n:, N * n:] = sys.E
    BN = np.zeros((size, sys.n_w))
    BN[N * n:, :] = sys.B
    CN = np.zeros((sys.n_z, size))
    CN[:, N * n:] = sys.C
    for arr in (EN, AN, BN, CN):
        arr.setflags(write=False)
    return DiscretizedSystem(EN, AN, BN, CN, N, mesh, sys.digest())


def tn_eval(disc: DiscretizedSystem, lam: complex) -> np.ndarray:
    lam = complex(lam)
    X = solve_checked(lam * disc.EN - disc.AN, disc.BN.astype(complex),
                      what=f"discretised pencil at {lam}")
    return disc.CN @ X
