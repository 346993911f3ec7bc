"""Delay differential-algebraic systems in standard form.

A system is described by

    E x'(t) = A_0 x(t) + sum_i A_i x(t - tau_i) + B w(t),
    z(t)    = C x(t),

with a possibly singular ``E``.  This module stores such systems, checks the
index-one structure (``U^T A_0 V`` nonsingular, with ``U``/``V`` spanning the
left/right nullspace of ``E``), splits them into differential and algebraic
blocks and evaluates the transfer function.
"""
from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la

from .errors import (
    AssumptionOneViolated,
    DimensionMismatch,
    NonpositiveDelay,
    SingularAtLambda,
)

RANK_TOL = 1e-10
RCOND_MIN = 1e-14

__all__ = [
    "DdaeSystem",
    "NullspaceBases",
    "PartitionedSystem",
    "SigmaCurve",
    "validate",
    "partition",
    "transfer",
    "transfer_partitioned",
    "sigma_sweep",
    "solve_checked",
]


def _as_matrix(a, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DdaeSystem:
    """Immutable DDAE ``(E, A_0..A_m, B, C, delays)``.

    ``A[0]`` is the undelayed matrix; ``A[i]`` multiplies ``x(t - delays[i-1])``.
    Equal delays are kept as separate entries.
    """

    E: np.ndarray
    A: tuple
    B: np.ndarray
    C: np.ndarray
    delays: tuple = ()

    def __post_init__(self):
        E = _as_matrix(self.E, "E")
        A = tuple(_as_matrix(a, f"A[{i}]") for i, a in enumerate(self.A))
        B = _as_matrix(self.B, "B")
        C = _as_matrix(self.C, "C")
        delays = tuple(float(t) for t in self.delays)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "delays", delays)

        n = E.shape[0]
        if E.shape != (n, n):
            raise DimensionMismatch(f"E must be square, got {E.shape}")
        if len(A) != len(delays) + 1:
            raise DimensionMismatch(
                f"{len(A)} matrices A_i for {len(delays)} delays; need m+1"
            )
        for i, a in enumerate(A):
            if a.shape != (n, n):
                raise DimensionMismatch(f"A[{i}] has shape {a.shape}, expected {(n, n)}")
        if B.shape[0] != n:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, expected {n}")
        if C.shape[1] != n:
            raise DimensionMismatch(f"C has {C.shape[1]} columns, expected {n}")
        for t in delays:
            if not (np.isfinite(t) and t > 0):
                raise NonpositiveDelay(f"delays must be strictly positive, got {t}")

    @property
    def n(self) -> int:
        return self.E.shape[0]

    @property
    def m(self) -> int:
        return len(self.delays)

    @property
    def n_w(self) -> int:
        return self.B.shape[1]

    @property
    def n_z(self) -> int:
        return self.C.shape[0]

    @property
    def tau_max(self) -> float:
        return max(self.delays) if self.delays else 0.0

    def with_delays(self, delays: Sequence[float]) -> "DdaeSystem":
        return DdaeSystem(self.E, self.A, self.B, self.C, tuple(delays))

    def char_matrix(self, lam: complex) -> np.ndarray:
        """``lam E - A_0 - sum_i A_i exp(-lam tau_i)``."""
        M = lam * self.E - self.A[0]
        for Ai, tau in zip(self.A[1:], self.delays):
            M = M - Ai * np.exp(-lam * tau)
        return M

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.E, *self.A, self.B, self.C):
            h.update(np.ascontiguousarray(arr).tobytes())
            h.update(str(arr.shape).encode())
        h.update(np.asarray(self.delays, dtype=float).tobytes())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "delays": list(self.delays),
            "E": self.E.tolist(),
            "A": [a.tolist() for a in self.A],
            "B": self.B.tolist(),
            "C": self.C.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DdaeSystem":
        try:
            n = int(doc["n"])
            delays = list(doc.get("delays", []))
            E = np.array(doc["E"], dtype=float).reshape(n, n)
            A = [np.array(a, dtype=float).reshape(n, n) for a in doc["A"]]
            B = np.array(doc["B"], dtype=float).reshape(n, -1)
            C = np.array(doc["C"], dtype=float).reshape(-1, n)
        except KeyError as exc:
            raise DimensionMismatch(f"missing field {exc.args[0]!r}") from None
        except ValueError as exc:
            raise DimensionMismatch(str(exc)) from None
        return cls(E, tuple(A), B, C, tuple(delays))


@dataclass(frozen=True)
class NullspaceBases:
    nu: int
    U: np.ndarray
    V: np.ndarray
    Uperp: np.ndarray
    Vperp: np.ndarray


@dataclass(frozen=True)
class PartitionedSystem:
    """Block form of a DDAE in the coordinates ``[Uperp U]^T (.) [Vperp V]``.

    ``A11[i]`` etc. hold the blocks of ``A_i`` for ``i = 0..m``.
    """

    E11: np.ndarray
    A11: tuple
    A12: tuple
    A21: tuple
    A22: tuple
    B1: np.ndarray
    B2: np.ndarray
    C1: np.ndarray
    C2: np.ndarray
    delays: tuple
    bases: NullspaceBases

    @property
    def nu(self) -> int:
        return self.bases.nu


@dataclass
class SigmaCurve:
    omega: np.ndarray
    sigmas: np.ndarray
    singular: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def sigma1(self) -> np.ndarray:
        return self.sigmas[:, 0]

    def peak(self) -> tuple[float, float]:
        vals = np.where(self.singular, -np.inf, self.sigma1)
        k = int(np.argmax(vals))
        return float(self.omega[k]), float(vals[k])


def solve_checked(M: np.ndarray, rhs: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Solve ``M X = rhs``; raise :class:`SingularAtLambda` when ``rcond(M) < 1e-14``."""
    if M.shape[0] == 0:
        return np.zeros((0,) + rhs.shape[1:], dtype=np.result_type(M, rhs))
    getrf, getrs, gecon = la.get_lapack_funcs(("getrf", "getrs", "gecon"), (M, rhs))
    anorm = np.linalg.norm(M, 1)
    lu, piv, info = getrf(M)
    if info > 0 or anorm == 0:
        raise SingularAtLambda(f"{what} is exactly singular")
    rcond, _ = gecon(lu, anorm, norm="1")
    if rcond < RCOND_MIN:
        raise SingularAtLambda(f"{what} is numerically singular (rcond={rcond:.2e})")
    x, info = getrs(lu, piv, rhs.astype(lu.dtype, copy=False))
    return x


def validate(sys: DdaeSystem, tol_rank: float = RANK_TOL) -> NullspaceBases:
    """Compute nullspace bases of ``E`` and check that ``U^T A_0 V`` is nonsingular.

    Parameters
    ----------
    sys : DdaeSystem
    tol_rank : float
        Singular values of ``E`` below ``tol_rank * sigma_max(E)`` count as zero.
        The same relative threshold (w.r.t. ``||A_0||``) decides singularity
        of ``U^T A_0 V``.

    Returns
    -------
    NullspaceBases

    Raises
    ------
    AssumptionOneViolated
        If ``U^T A_0 V`` is numerically singular.
    """
    if tol_rank <= 0:
        raise ValueError("tol_rank must be positive")
    n = sys.n
    Us, s, Vh = np.linalg.svd(sys.E)
    smax = s[0] if s.size else 0.0
    r = int(np.sum(s > tol_rank * smax)) if smax > 0 else 0
    bases = NullspaceBases(
        nu=n - r,
        U=Us[:, r:],
        V=Vh[r:, :].T,
        Uperp=Us[:, :r],
        Vperp=Vh[:r, :].T,
    )
    if bases.nu:
        M = bases.U.T @ sys.A[0] @ bases.V
        smin = np.linalg.svd(M, compute_uv=False)[-1]
        scale = max(np.linalg.norm(sys.A[0], 2), np.finfo(float).tiny)
        if smin <= tol_rank * scale:
            raise AssumptionOneViolated(
                f"U^T A_0 V ({bases.nu}x{bases.nu}) is singular: "
                f"smallest singular value {smin:.3e}"
            )
    return bases


def partition(sys: DdaeSystem, bases: NullspaceBases | None = None) -> PartitionedSystem:
    if bases is None:
        bases = validate(sys)
    Up, U, Vp, V = bases.Uperp, bases.U, bases.Vperp, bases.V
    return PartitionedSystem(
        E11=Up.T @ sys.E @ Vp,
        A11=tuple(Up.T @ a @ Vp for a in sys.A),
        A12=tuple(Up.T @ a @ V for a in sys.A),
        A21=tuple(U.T @ a @ Vp for a in sys.A),
        A22=tuple(U.T @ a @ V for a in sys.A),
        B1=Up.T @ sys.B,
        B2=U.T @ sys.B,
        C1=sys.C @ Vp,
        C2=sys.C @ V,
        delays=sys.delays,
        bases=bases,
    )


def transfer(sys: DdaeSystem, lam: complex) -> np.ndarray:
    """``C (lam E - A_0 - sum A_i e^{-lam tau_i})^{-1} B`` by one dense solve."""
    M = sys.char_matrix(complex(lam))
    X = solve_checked(M, sys.B.astype(complex), what=f"characteristic matrix at {lam}")
    return sys.C @ X


def transfer_partitioned(part: PartitionedSystem, lam: complex) -> np.ndarray:
    """Same value as :func:`transfer`, computed through the 2x2 block form."""
    lam = complex(lam)
    w = np.concatenate(([1.0 + 0j], np.exp(-lam * np.asarray(part.delays, dtype=float))))

    def blk(blocks):
        return sum(c * b for c, b in zip(w, blocks))

    top = np.hstack([lam * part.E11 - blk(part.A11), -blk(part.A12)])
    bot = np.hstack([-blk(part.A21), -blk(part.A22)])
    M = np.vstack([top, bot])
    rhs = np.vstack([part.B1, part.B2]).astype(complex)
    X = solve_checked(M, rhs, what=f"block characteristic matrix at {lam}")
    return np.hstack([part.C1, part.C2]) @ X


def sigma_sweep(sys: DdaeSystem, grid: Sequence[float], k: int | None = None) -> SigmaCurve:
    """Singular values of ``T(j omega)`` on a sorted frequency grid.

    Points where the characteristic matrix is singular are flagged in
    ``curve.singular`` (their sigmas are NaN) and a warning is issued.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty frequency grid")
    kmax = min(sys.n_z, sys.n_w)
    k = kmax if k is None else max(1, min(int(k), kmax))
    sig = np.full((grid.size, k), np.nan)
    bad = np.zeros(grid.size, dtype=bool)
    for idx, w in enumerate(grid):
        try:
            T = transfer(sys, 1j * w)
        except SingularAtLambda:
            bad[idx] = True
            continue
        sig[idx] = np.linalg.svd(T, compute_uv=False)[:k]
    if bad.any():
        warnings.warn(f"T(jw) singular at {int(bad.sum())} grid point(s); skipped")
    return SigmaCurve(grid, sig, bad)
