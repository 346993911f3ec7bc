"""Fixed-structure controller synthesis by minimising the strong H-infinity norm.

The objective ``xi(p)`` is the strong norm of the closed loop at controller
parameters ``p``; unstable closed loops evaluate to ``+inf``.  Where the norm
is attained at a single simple peak the objective is differentiable and its
gradient follows from the peak certificate ``(u, v)``:

    d xi / d p_k = -2 xi^2 Re(v^* dM/dp_k u) / (v^* B B^T v + u^* C^T C u),

with ``M = j omega E - A_0 - sum_i A_i exp(-j omega tau_i)`` on the frequency
branch and ``M = A22(theta)`` (algebraic blocks, phases frozen) on the
asymptotic branch.  Minimisation runs BFGS with a weak Wolfe line search,
then gradient sampling with shrinking radii.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import nnls

from .errors import (
    AssumptionOneViolated,
    DdaeError,
    InfeasibleStart,
    NonsmoothPoint,
)
from .interconnect import ParamClosedLoop, instantiate, parameter_jacobian
from .levelset import ASYMPTOTIC, LevelSetOptions, StrongNormResult, strong_hinf_norm
from .asymptotic import reduce_delays, ta_eval
from .model import partition, transfer, validate
from .stability import check_strong_stability

log = logging.getLogger(__name__)

TIE_TOL = 1e-9

__all__ = [
    "ObjectiveEval",
    "OptimizeOptions",
    "objective",
    "gradient",
    "optimize",
    "check_strong_stability",
]


@dataclass
class ObjectiveEval:
    """Objective value at ``p``; ``grad`` is ``None`` at nonsmooth or infinite points."""

    p: np.ndarray
    xi: float
    branch: str | None = None
    result: StrongNormResult | None = None
    grad: np.ndarray | None = None
    cause: str | None = None

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.xi))


@dataclass
class OptimizeOptions:
    max_iter: int = 400
    c1: float = 1e-4
    c2: float = 0.5
    radii: tuple = (1e-2, 1e-3, 1e-4)
    samples_per_dim: int = 2
    gs_max_iter: int = 20
    rng_seed: int = 0
    step_tol: float = 1e-8
    levelset: LevelSetOptions = field(default_factory=LevelSetOptions)

    def __post_init__(self):
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")


def _stability_opts(opts: LevelSetOptions) -> LevelSetOptions:
    return replace(opts, check_stability=False)


def objective(pcl: ParamClosedLoop, p, opts: LevelSetOptions | None = None,
              want_grad: bool = True) -> ObjectiveEval:
    """Strong norm of the closed loop at ``p`` (``+inf`` if not strongly stable)."""
    opts = opts or LevelSetOptions()
    p = np.array(p, dtype=float).ravel()
    sys = instantiate(pcl, p)
    try:
        validate(sys)
    except AssumptionOneViolated as exc:
        return ObjectiveEval(p, np.inf, cause=f"algebraic loop: {exc}")
    rep = check_strong_stability(sys, opts.N, opts.p_a)
    if not rep.stable:
        return ObjectiveEval(p, np.inf, cause=(
            f"unstable (abscissa {rep.spectral_abscissa_estimate:.3g}, "
            f"difference radius {rep.difference_radius:.3g})"))
    try:
        res = strong_hinf_norm(sys, _stability_opts(opts))
    except DdaeError as exc:
        log.info("objective failed at p=%s: %s", p, exc)
        return ObjectiveEval(p, np.inf, cause=f"{type(exc).__name__}: {exc}")
    ev = ObjectiveEval(p, float(res.value), res.branch, res)
    if want_grad:
        try:
            ev.grad = gradient(pcl, p, ev)
        except NonsmoothPoint as exc:
            ev.cause = f"nonsmooth: {exc}"
    return ev


def _freq_peaks_near(res: StrongNormResult, xi: float, omega: float | None) -> bool:
    """True if some other verified frequency peak ties with ``xi``."""
    for w, s in res.peaks:
        if omega is not None and abs(w - omega) <= 1e-6 * max(1.0, omega):
            continue
        if abs(s - xi) <= TIE_TOL * xi:
            return True
    return False


def gradient(pcl: ParamClosedLoop, p, ev: ObjectiveEval) -> np.ndarray:
    """Gradient of the strong norm from the peak certificate in ``ev``.

    Raises
    ------
    NonsmoothPoint
        If the active singular value is multiple, the two branches (or two
        peaks) tie within ``1e-9 xi``, or the certificate is degenerate.
    """
    if not ev.finite or ev.result is None:
        raise NonsmoothPoint("objective is infinite")
    res = ev.result
    xi = ev.xi
    p = np.asarray(p, dtype=float).ravel()
    sys = instantiate(pcl, p)
    k_all = range(pcl.n_params)
    if xi == 0.0:
        return np.zeros(pcl.n_params)
    if res.u.size == 0 or not res.corrected:
        raise NonsmoothPoint("no converged peak certificate")
    ta = res.ta
    if res.branch == ASYMPTOTIC:
        if _freq_peaks_near(res, xi, None):
            raise NonsmoothPoint("frequency peak ties with the asymptotic norm")
        bases = validate(sys)
        asys = reduce_delays(partition(sys, bases))
        s = np.linalg.svd(ta_eval(asys, res.theta_hat), compute_uv=False)
        if s.size > 1 and s[0] - s[1] <= TIE_TOL * s[0]:
            raise NonsmoothPoint("multiple largest singular value of Ta")
        U, V = bases.U, bases.V
        B2, C2 = asys.B2, asys.C2
        u, v = res.u, res.v
        den = np.vdot(v, B2 @ (B2.T @ v)).real + np.vdot(u, C2.T @ (C2 @ u)).real
        phase = {i: np.exp(-1j * th) for th, i in zip(res.theta_hat, asys.retained)}
        g = np.zeros(pcl.n_params)
        for k in k_all:
            dA = parameter_jacobian(pcl, k)
            dM = -(U.T @ dA[0] @ V).astype(complex)
            for i in range(1, len(dA)):
                blk = U.T @ dA[i] @ V
                if not np.any(blk):
                    continue
                if i not in phase:
                    raise NonsmoothPoint(
                        f"parameter {k} activates pruned delay {i} in the algebraic part")
                dM = dM - blk * phase[i]
            g[k] = np.real(np.vdot(v, dM @ u))
    else:
        w = res.omega_hat
        if ta is not None and abs(ta.value - xi) <= TIE_TOL * xi:
            raise NonsmoothPoint("asymptotic norm ties with the frequency peak")
        if _freq_peaks_near(res, xi, w):
            raise NonsmoothPoint("two frequency peaks tie")
        s = np.linalg.svd(transfer(sys, 1j * w), compute_uv=False)
        if s.size > 1 and s[0] - s[1] <= TIE_TOL * s[0]:
            raise NonsmoothPoint("multiple largest singular value of T")
        B, C = sys.B, sys.C
        u, v = res.u, res.v
        den = np.vdot(v, B @ (B.T @ v)).real + np.vdot(u, C.T @ (C @ u)).real
        ph = [np.exp(-1j * w * tau) for tau in sys.delays]
        g = np.zeros(pcl.n_params)
        for k in k_all:
            i, r, c, coeff = pcl.sens[k]
            # dM/dp_k has the single entry -coeff * phase at (r, c)
            f = 1.0 if i == 0 else ph[i - 1]
            g[k] = np.real(-coeff * f * np.conj(v[r]) * u[c])
    if den <= 1e-14 * (np.vdot(u, u).real + np.vdot(v, v).real):
        raise NonsmoothPoint("degenerate certificate (vanishing denominator)")
    return -2.0 * xi**2 * g / den


# ---------------------------------------------------------------- optimiser

class _Oracle:
    """Caches evaluations and fills in gradients at nonsmooth points."""

    def __init__(self, pcl, lopts, rng):
        self.pcl, self.lopts, self.rng = pcl, lopts, rng
        self.count = 0

    def __call__(self, p) -> ObjectiveEval:
        self.count += 1
        return objective(self.pcl, p, self.lopts)

    def smooth(self, ev: ObjectiveEval) -> ObjectiveEval:
        """Return ``ev`` or, if it lacks a gradient, a nearby differentiable point."""
        if not ev.finite or ev.grad is not None:
            return ev
        scale = 1e-8 * (1.0 + np.linalg.norm(ev.p))
        for _ in range(3):
            q = ev.p + scale * self.rng.standard_normal(ev.p.size)
            e2 = self(q)
            if e2.finite and e2.grad is not None:
                return e2
            scale *= 10.0
        return ev


def _wolfe(oracle, x_ev, d, c1, c2, max_trials=40):
    """Weak Wolfe bisection line search; ``+inf`` counts as insufficient decrease."""
    f0, g0 = x_ev.xi, x_ev.grad
    slope = float(g0 @ d)
    lo, hi, t = 0.0, np.inf, 1.0
    best = None
    for _ in range(max_trials):
        ev = oracle.smooth(oracle(x_ev.p + t * d))
        if ev.finite and ev.xi < f0 and (best is None or ev.xi < best.xi):
            best = ev
        if not ev.finite or ev.xi > f0 + c1 * t * slope:
            hi = t
        elif ev.grad is None:
            return ev, False
        elif float(ev.grad @ d) < c2 * slope:
            lo = t
        else:
            return ev, True
        t = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * lo
        if np.isfinite(hi) and hi - lo < 1e-14 * max(hi, 1.0):
            break
    return best, False


def _min_norm_hull(G: np.ndarray) -> np.ndarray:
    """Smallest-norm vector in the convex hull of the columns of ``G``."""
    A = np.vstack([G, np.ones((1, G.shape[1]))])
    b = np.zeros(G.shape[0] + 1)
    b[-1] = 1.0
    lam, _ = nnls(A, b)
    s = lam.sum()
    if s <= 0:
        return G[:, np.argmin(np.linalg.norm(G, axis=0))]
    return G @ (lam / s)


def _record(trace, ev, phase):
    trace.append({"p": ev.p.copy(), "xi": ev.xi, "branch": ev.branch, "phase": phase})


def optimize(pcl: ParamClosedLoop, p0, opts: OptimizeOptions | None = None):
    """Minimise the strong norm over the controller parameters.

    Returns
    -------
    p_star : ndarray
    xi_star : float
    trace : list of dict
        Accepted iterates with keys ``p``, ``xi``, ``branch``, ``phase``
        (``"start"``, ``"bfgs"`` or ``"gs"``); ``xi`` is nonincreasing.

    Raises
    ------
    InfeasibleStart
        If the closed loop at ``p0`` is not strongly stable.
    """
    opts = opts or OptimizeOptions()
    rng = np.random.default_rng(opts.rng_seed)
    oracle = _Oracle(pcl, opts.levelset, rng)
    p0 = np.array(p0, dtype=float).ravel()
    ev = oracle(p0)
    if not ev.finite:
        raise InfeasibleStart(f"objective infinite at the starting point ({ev.cause})")
    trace = []
    _record(trace, ev, "start")
    ev = oracle.smooth(ev)
    best = ev
    dim = p0.size
    if dim == 0:
        return p0, ev.xi, trace

    # phase 1: BFGS
    H = np.eye(dim)
    it = 0
    while it < opts.max_iter and ev.grad is not None:
        it += 1
        g = ev.grad
        if np.linalg.norm(g) == 0:
            break
        d = -H @ g
        if g @ d >= 0:
            H = np.eye(dim)
            d = -g
        new, ok = _wolfe(oracle, ev, d, opts.c1, opts.c2)
        if new is None:
            break
        s = new.p - ev.p
        if ok and new.grad is not None:
            y = new.grad - g
            sy = float(s @ y)
            if sy > 1e-16 * np.linalg.norm(s) * np.linalg.norm(y):
                if it == 1:
                    H = (sy / float(y @ y)) * np.eye(dim)
                rho = 1.0 / sy
                V = np.eye(dim) - rho * np.outer(s, y)
                H = V @ H @ V.T + rho * np.outer(s, s)
        ev = new
        if ev.xi < best.xi:
            best = ev
            _record(trace, ev, "bfgs")
        if np.linalg.norm(s) < opts.step_tol * (1.0 + np.linalg.norm(ev.p)) or not ok:
            break

    # phase 2: gradient sampling around the best point
    x = best
    scale = 1.0 + np.linalg.norm(p0)
    m = max(1, opts.samples_per_dim * dim)
    for r in opts.radii:
        eps = r * scale
        for _ in range(opts.gs_max_iter):
            grads = [x.grad] if x.grad is not None else []
            for _ in range(m):
                z = rng.standard_normal(dim)
                z *= eps * rng.random() ** (1.0 / dim) / np.linalg.norm(z)
                e = oracle(x.p + z)
                if e.finite and e.grad is not None:
                    grads.append(e.grad)
            if not grads:
                break
            d = -_min_norm_hull(np.array(grads).T)
            dn = float(np.linalg.norm(d))
            if dn <= 1e-6 * max(1.0, x.xi):
                break
            t, accepted = 1.0, None
            for _ in range(30):
                e = oracle(x.p + t * d)
                if e.finite and e.xi < x.xi - 1e-8 * t * dn**2:
                    accepted = oracle.smooth(e)
                    break
                t *= 0.5
            if accepted is None or accepted.xi >= x.xi:
                break
            step = np.linalg.norm(accepted.p - x.p)
            x = accepted
            _record(trace, x, "gs")
            if step < opts.step_tol * (1.0 + np.linalg.norm(x.p)):
                break
    best = x if x.xi <= best.xi else best
    log.info("optimize: %d objective evaluations, xi* = %.6g", oracle.count, best.xi)
    return best.p.copy(), best.xi, trace
