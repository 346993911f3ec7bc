"""Strong H-infinity norm by a predictor-corrector level-set method.

Prediction works on the discretised system: the frequencies where some
singular value of ``TN(j omega)`` equals a level ``xi`` are the imaginary
eigenvalues of a Hamiltonian-type pencil, and the level is raised through
the singular values at geometric midpoints of consecutive crossings until no
crossing remains.  The asymptotic strong norm acts as a floor throughout.
Correction solves the peak equations of the exact transfer function by
Gauss-Newton, which removes the discretisation error.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la

from ._gauss_newton import PeakProblem, normalize_pair, solve_peak
from .asymptotic import TaNormResult, reduce_delays, strong_norm_ta
from .discretize import DEFAULT_N, DiscretizedSystem, build, tn_eval
from .errors import (
    CorrectionDiverged,
    EigSolverFailure,
    MaxLevelsExceeded,
    NotStable,
    SingularAtLambda,
)
from .model import DdaeSystem, partition, solve_checked, transfer, validate
from .stability import check_strong_stability

log = logging.getLogger(__name__)

FLOOR_PROBE = 1e-6

ASYMPTOTIC = "asymptotic"
FREQUENCY = "frequency"

__all__ = [
    "LevelSetOptions",
    "StrongNormResult",
    "pencil_frequencies",
    "pencil_eigenvalues",
    "strong_hinf_norm",
    "correct_peak",
    "ASYMPTOTIC",
    "FREQUENCY",
]


@dataclass
class LevelSetOptions:
    """Tuning knobs of :func:`strong_hinf_norm`.

    ``plain=True`` switches to the diagnostic plain-norm mode: the asymptotic
    floor is dropped and an exact dense sweep of ``sigma_1(T(j omega))`` on
    ``[0, plain_wmax]`` (step ``plain_step / tau_max``) supplements the
    level-set search, because isolated high-frequency peaks lie far outside
    the range resolved by the discretisation.
    """

    N: int = DEFAULT_N
    tol: float = 1e-3
    p_a: int = 20
    seed_frequencies: Sequence[float] = ()
    auto_seed: bool = True
    axis_tol: float = 1e-6
    max_levels: int = 50
    check_stability: bool = True
    plain: bool = False
    plain_wmax: float = 1e4
    plain_step: float = 0.025

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.N < 5:
            raise ValueError("N must be at least 5")


@dataclass
class LevelTrace:
    """One predictor step: the tested level, its crossings, the next lower bound.

    ``candidates`` is only set on the final step and holds the frequencies
    handed to the corrector (crossings at the last lower bound).
    """

    level: float
    crossings: np.ndarray
    next_level: float
    candidates: np.ndarray | None = None


@dataclass
class StrongNormResult:
    value: float
    branch: str
    omega_hat: float | None
    theta_hat: np.ndarray | None
    u: np.ndarray
    v: np.ndarray
    iterations: int
    corrected: bool
    ta: TaNormResult | None = None
    predicted: float | None = None
    trace: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    peaks: list = field(default_factory=list)

    def as_dict(self) -> dict:
        out = {
            "value": self.value,
            "branch": self.branch,
            "iterations": self.iterations,
            "corrected": self.corrected,
            "predicted": self.predicted,
            "ta_norm": None if self.ta is None else self.ta.value,
        }
        if self.branch == FREQUENCY:
            out["omega_hat"] = self.omega_hat
        else:
            out["theta_hat"] = None if self.theta_hat is None else list(map(float, self.theta_hat))
        out["levels"] = [
            {
                "level": t.level,
                "crossings": list(map(float, t.crossings)),
                "next_level": t.next_level,
                **({} if t.candidates is None else {"candidates": list(map(float, t.candidates))}),
            }
            for t in self.trace
        ]
        if self.warnings:
            out["warnings"] = list(self.warnings)
        return out


def pencil_matrices(disc: DiscretizedSystem, xi: float):
    """``(Hmat, Emat)`` with ``lam Emat - Hmat`` the level-``xi`` pencil."""
    A, E, B, C = disc.AN, disc.EN, disc.BN, disc.CN
    Z = np.zeros_like(E)
    Emat = np.block([[E, Z], [Z, E.T]])
    Hmat = np.block([[A, (B @ B.T) / xi], [-(C.T @ C) / xi, -A.T]])
    return Hmat, Emat


def pencil_eigenvalues(disc: DiscretizedSystem, xi: float) -> np.ndarray:
    """Finite generalised eigenvalues of the level-``xi`` pencil."""
    if xi <= 0:
        raise ValueError("level must be positive")
    Hmat, Emat = pencil_matrices(disc, xi)
    try:
        alpha, beta = la.eig(Hmat, Emat, right=False, homogeneous_eigvals=True)
    except (la.LinAlgError, ValueError) as exc:
        raise EigSolverFailure(str(exc)) from exc
    finite = np.abs(beta) > 1e-12 * np.abs(alpha)
    lam = alpha[finite] / beta[finite]
    return lam[np.isfinite(lam)]


def pencil_frequencies(disc: DiscretizedSystem, xi: float, axis_tol: float = 1e-6) -> np.ndarray:
    """Sorted, deduplicated ``omega >= 0`` where a singular value of ``TN(j omega)`` equals ``xi``."""
    lam = pencil_eigenvalues(disc, xi)
    on_axis = np.abs(lam.real) <= axis_tol * np.maximum(1.0, np.abs(lam.imag))
    w = np.sort(np.abs(lam[on_axis].imag))
    if w.size == 0:
        return w
    keep = [w[0]]
    for x in w[1:]:
        if x - keep[-1] > 1e-6 * max(1.0, x):
            keep.append(x)
    return np.array(keep)


def _sigma1(T: np.ndarray) -> float:
    if T.size == 0:
        return 0.0
    return float(np.linalg.svd(T, compute_uv=False)[0])


def _sigma1_tn(disc, w: float) -> float:
    try:
        return _sigma1(tn_eval(disc, 1j * w))
    except SingularAtLambda:
        return np.inf


def _auto_seeds(sys: DdaeSystem, disc: DiscretizedSystem, points: int = 200) -> list[float]:
    scale = 1.0 / sys.tau_max if sys.m else 1.0
    grid = np.concatenate([[0.0], np.logspace(-3, 3, points) * scale])
    vals = np.array([_sigma1_tn(disc, w) for w in grid])
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    seeds = []
    for k in range(grid.size):
        left = vals[k - 1] if k > 0 else -np.inf
        right = vals[k + 1] if k + 1 < grid.size else -np.inf
        if vals[k] >= left and vals[k] >= right and np.isfinite(vals[k]):
            seeds.append(float(grid[k]))
    return seeds


def _midpoints(crossings: np.ndarray) -> np.ndarray:
    a, b = crossings[:-1], crossings[1:]
    geo = np.sqrt(a * b)
    return np.where(a <= 0.0, 0.5 * (a + b), geo)


def _freq_problem(sys: DdaeSystem, ref: int) -> PeakProblem:
    E = sys.E.astype(complex)
    taus = np.asarray(sys.delays, dtype=float)

    def M(t):
        return sys.char_matrix(1j * t[0])

    def dM(t):
        D = E.copy()
        for A, tau in zip(sys.A[1:], taus):
            D = D + tau * A * np.exp(-1j * t[0] * tau)
        return [1j * D]

    def d2M(t):
        D = np.zeros_like(E)
        for A, tau in zip(sys.A[1:], taus):
            D = D + tau**2 * A * np.exp(-1j * t[0] * tau)
        return [[D]]

    return PeakProblem(M, dM, d2M, sys.B @ sys.B.T, sys.C.T @ sys.C, ref)


def hamiltonian_matrix(sys: DdaeSystem, omega: float, xi: float) -> np.ndarray:
    """``H(j omega, xi)`` of the exact system."""
    M = sys.char_matrix(1j * omega)
    return np.block([
        [M, -(sys.B @ sys.B.T) / xi],
        [(sys.C.T @ sys.C) / xi, -M.conj().T],
    ])


def _freq_certificate(sys: DdaeSystem, omega: float):
    """``(u, v, sigma_1)`` solving the linear peak equations exactly at ``omega``."""
    M = sys.char_matrix(1j * omega)
    X = solve_checked(M, sys.B.astype(complex), what=f"characteristic matrix at {omega}j")
    T = sys.C @ X
    Ws, sv, Rh = np.linalg.svd(T)
    if sv.size == 0 or sv[0] <= 0:
        raise ZeroDivisionError("zero transfer function")
    xi = float(sv[0])
    u = X @ Rh[0].conj() / xi
    v = solve_checked(M.conj().T, (sys.C.T @ Ws[:, 0]).astype(complex), what="adjoint") / xi
    return u, v, xi


def correct_peak(
    sys: DdaeSystem,
    omega0: float,
    xi0: float,
    u0: np.ndarray | None = None,
    v0: np.ndarray | None = None,
    max_iter: int = 30,
    tol: float = 1e-12,
):
    """Refine an approximate singular-value peak of ``T(j omega)``.

    Returns ``(omega_hat, xi_hat, u, v, solution)``.  Without starting
    vectors the iteration starts from the singular-vector certificate of
    ``T(j omega0)`` at level ``sigma_1(T(j omega0))``; ``xi0`` is then only
    used if ``T(j omega0)`` cannot be evaluated, with the least singular
    vector of ``H(j omega0, xi0)`` as start.
    """
    n = sys.n
    if u0 is None or v0 is None:
        try:
            u0, v0, xi0 = _freq_certificate(sys, omega0)
        except (SingularAtLambda, ZeroDivisionError):
            _, _, Vh = np.linalg.svd(hamiltonian_matrix(sys, omega0, xi0))
            zeta = Vh[-1].conj()
            u0, v0 = zeta[:n], zeta[n:]
    u0, v0, ref = normalize_pair(np.asarray(u0, complex), np.asarray(v0, complex))
    sol = solve_peak(
        _freq_problem(sys, ref), [omega0], xi0, u0, v0, tol=tol, max_iter=max_iter
    )
    return abs(float(sol.t[0])), float(sol.xi), sol.u, sol.v, sol


def _frequency_result(sys, candidates, xi_tilde, ta, trace, iterations, samples, notes):
    """Correct every candidate frequency; return the best verified peak."""
    best = None
    peaks = []
    for w0 in candidates:
        try:
            w_hat, xi_hat, u, v, _ = correct_peak(sys, w0, xi_tilde)
        except (CorrectionDiverged, SingularAtLambda, np.linalg.LinAlgError) as exc:
            log.debug("correction from %.6g failed: %s", w0, exc)
            continue
        try:
            s1 = _sigma1(transfer(sys, 1j * w_hat))
        except SingularAtLambda:
            continue
        samples.append((w_hat, s1))
        if abs(s1 - xi_hat) > 1e-6 * max(xi_hat, 1e-300):
            log.debug("correction from %.6g reached a non-maximal singular value", w0)
            continue
        peaks.append((w_hat, xi_hat))
        if best is None or xi_hat > best[1]:
            best = (w_hat, xi_hat, u, v)
    floor = ta.value if ta is not None else 0.0
    if best is None and ta is not None and xi_tilde <= floor * (1.0 + 1e-2):
        return _asymptotic_result(ta, iterations, trace, samples, notes, predicted=xi_tilde)
    if best is None:
        msg = f"peak correction failed; returning predicted value {xi_tilde:.6g}"
        warnings.warn(msg)
        notes.append(msg)
        w0 = float(candidates[0]) if len(candidates) else None
        return StrongNormResult(
            xi_tilde, FREQUENCY, w0, None, np.zeros(0), np.zeros(0), iterations, False,
            ta, xi_tilde, trace, samples, notes,
        )
    w_hat, xi_hat, u, v = best
    if ta is not None and xi_hat < floor:
        res = _asymptotic_result(ta, iterations, trace, samples, notes, predicted=xi_tilde)
    else:
        res = StrongNormResult(
            xi_hat, FREQUENCY, w_hat, None, u, v, iterations, True, ta, xi_tilde, trace,
            samples, notes,
        )
    res.peaks = peaks
    return res


def _asymptotic_result(ta, iterations, trace, samples, notes, predicted=None):
    return StrongNormResult(
        ta.value, ASYMPTOTIC, None, ta.theta_hat, ta.u_a, ta.v_a, iterations, ta.corrected,
        ta, predicted, trace, samples, notes,
    )


def _plain_sweep(sys: DdaeSystem, wmax: float, step: float, top: int = 12):
    """Exact ``sigma_1(T(j omega))`` on a uniform grid; returns the best local maxima."""
    scale = sys.tau_max if sys.m else 1.0
    dw = step / scale
    grid = np.arange(0.0, wmax + dw, dw)
    vals = np.empty(grid.size)
    n = sys.n
    chunk = max(1, int(2e6 // max(n * n, 1)))
    B = sys.B.astype(complex)
    for s in range(0, grid.size, chunk):
        w = grid[s:s + chunk]
        lam = 1j * w
        M = lam[:, None, None] * sys.E - sys.A[0]
        for A, tau in zip(sys.A[1:], sys.delays):
            M = M - np.exp(-lam * tau)[:, None, None] * A
        try:
            X = np.linalg.solve(M, np.broadcast_to(B, (w.size,) + B.shape))
            T = sys.C @ X
            vals[s:s + chunk] = np.linalg.svd(T, compute_uv=False)[:, 0]
        except np.linalg.LinAlgError:
            for j, wj in enumerate(w):
                try:
                    vals[s + j] = _sigma1(transfer(sys, 1j * wj))
                except SingularAtLambda:
                    vals[s + j] = np.nan
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    inner = (vals[1:-1] >= vals[:-2]) & (vals[1:-1] >= vals[2:])
    idx = np.flatnonzero(inner) + 1
    if vals[0] >= vals[1]:
        idx = np.concatenate([[0], idx])
    idx = idx[np.argsort(-vals[idx])][:top]
    return grid[idx], vals[idx]


def strong_hinf_norm(sys: DdaeSystem, opts: LevelSetOptions | None = None) -> StrongNormResult:
    """Strong H-infinity norm of a strongly stable DDAE.

    The value is ``max(||T||_inf, strong norm of Ta)``.  The result records
    which branch is active, its certificate (``omega_hat`` and ``(u, v)`` of
    the exact peak equations, or ``theta_hat`` and ``(u_a, v_a)``), and the
    sequence of levels visited by the predictor.

    Raises
    ------
    NotStable
        If the stability pre-check fails (``opts.check_stability``).
    MaxLevelsExceeded
        If the prediction loop does not terminate within ``opts.max_levels``.
    """
    opts = opts or LevelSetOptions()
    bases = validate(sys)
    if opts.check_stability:
        rep = check_strong_stability(sys, opts.N, opts.p_a)
        if not rep.stable:
            raise NotStable(
                f"system not strongly exponentially stable (abscissa "
                f"{rep.spectral_abscissa_estimate:.4g}, difference radius "
                f"{rep.difference_radius:.4g})"
            )
    ta = strong_norm_ta(reduce_delays(partition(sys, bases)), opts.p_a)
    floor = 0.0 if opts.plain else ta.value
    disc = build(sys, opts.N)
    notes: list[str] = []
    samples: list[tuple[float, float]] = []

    seeds = [float(w) for w in opts.seed_frequencies]
    if opts.auto_seed:
        seeds += _auto_seeds(sys, disc)
    seed_vals = []
    for w in seeds:
        try:
            s1 = _sigma1(transfer(sys, 1j * w))
        except SingularAtLambda:
            continue
        samples.append((w, s1))
        seed_vals.append((s1, w))

    xi_l = floor
    best_seed = None
    for s1, w in seed_vals:
        if s1 > xi_l:
            xi_l, best_seed = s1, w

    if xi_l <= 0.0:
        if opts.plain:
            xi_l = 0.0
        else:
            return _asymptotic_result(ta, 0, [], samples, notes)

    trace: list[LevelTrace] = []
    last_crossings = None
    result = None
    for it in range(1, opts.max_levels + 1):
        if xi_l <= 0.0:
            break
        xi = xi_l * (1.0 + 2.0 * opts.tol)
        crossings = pencil_frequencies(disc, xi, opts.axis_tol)
        if crossings.size == 0:
            trace.append(LevelTrace(xi, crossings, xi_l))
            xi_tilde = 0.5 * (xi + xi_l)
            at_floor = not opts.plain and xi_l == ta.value
            if at_floor:
                # frequency peaks within the tolerance band of the floor (or
                # tied with it) are corrected too, so ties are not missed
                cands = pencil_frequencies(disc, xi_l * (1.0 - FLOOR_PROBE), opts.axis_tol)
                if cands.size == 0:
                    result = _asymptotic_result(ta, it, trace, samples, notes)
                    break
                cands = _midpoints(cands) if cands.size > 1 else cands
            else:
                cands = pencil_frequencies(disc, xi_l, opts.axis_tol)
                if cands.size == 0 and last_crossings is not None:
                    cands = last_crossings
                if cands.size == 0 and best_seed is not None:
                    cands = np.array([best_seed])
            trace[-1].candidates = cands
            result = _frequency_result(sys, cands, xi_tilde, None if opts.plain else ta,
                                       trace, it, samples, notes)
            break
        if crossings.size % 2 == 1 and crossings[0] > 0.0:
            crossings = np.concatenate([[0.0], crossings])
        mids = _midpoints(crossings) if crossings.size > 1 else crossings
        new = max([_sigma1_tn(disc, w) for w in mids] + [floor])
        trace.append(LevelTrace(xi, crossings, new))
        last_crossings = crossings
        xi_l = max(new, xi_l)
    else:
        raise MaxLevelsExceeded(f"no convergence within {opts.max_levels} levels")

    if result is None:
        result = StrongNormResult(0.0, FREQUENCY, 0.0, None, np.zeros(0), np.zeros(0), 0,
                                  True, None, 0.0, trace, samples, notes)

    if opts.plain:
        result = _plain_refine(sys, result, opts, samples)
    return result


def _plain_refine(sys, result, opts, samples):
    ws, vals = _plain_sweep(sys, opts.plain_wmax, opts.plain_step)
    best = result
    for w0, v0 in zip(ws, vals):
        samples.append((float(w0), float(v0)))
        if v0 <= best.value * (1.0 - 1e-3):
            continue
        try:
            w_hat, xi_hat, u, v, _ = correct_peak(sys, w0, v0)
            s1 = _sigma1(transfer(sys, 1j * w_hat))
        except (CorrectionDiverged, SingularAtLambda, np.linalg.LinAlgError):
            w_hat, xi_hat, u, v, s1 = w0, v0, np.zeros(0), np.zeros(0), v0
        if abs(s1 - xi_hat) > 1e-6 * xi_hat:
            w_hat, xi_hat = w0, v0
        if xi_hat > best.value:
            best = StrongNormResult(
                xi_hat, FREQUENCY, float(w_hat), None, u, v, result.iterations, u.size > 0,
                None, result.predicted, result.trace, samples, result.warnings,
            )
    best.ta = None
    return best
