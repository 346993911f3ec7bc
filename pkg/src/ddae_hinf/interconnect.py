"""Closed-loop DDAE from a delayed plant and a structured controller.

Plant ``G`` (every channel a sum of delayed terms)::

    x_G' = sum A^i x_G(t-.) + sum B1^i w(t-.) + sum B2^i u(t-.)
    z    = sum C1^i x_G(t-.) + sum D11^i w(t-.) + sum D12^i u(t-.)
    y    = sum C2^i x_G(t-.) + sum D21^i w(t-.) + sum D22^i u(t-.)

Controller ``K``::

    x_K' = sum AK^i x_K(t-.) + sum BK^i y(t-.)
    u    = sum CK^i x_K(t-.) + sum DK^i y(t-.)

Delayed or fed-through signals are replaced by algebraic slack states, so the
closed loop is a DDAE in standard form whose matrices ``A_i`` are affine in
the controller entries while ``E``, ``B`` and ``C`` do not depend on them.

Closed-loop state layout (``ClosedLoopLayout``)::

    X = [x_G, x_K, g_u, g_y, g_w (optional), g_z (optional)]

Rows (note ``y`` before ``u``)::

    E_G x_G' = ...                                 (plant dynamics)
    x_K'     = ...                                 (controller dynamics)
    0    = sum C2 x_G + sum D22 g_u + sum D21 g_w - g_y
    0    = g_u - sum CK x_K - sum DK g_y
    0    = -g_w + w
    0    = -g_z + sum C1 x_G + sum D12 g_u + sum D11 g_w

``g_w`` exists when some ``D11``/``D21`` term or delayed ``B1`` term is
present; ``g_z`` exists when some term of the ``z`` equation is delayed.  If
``B1`` has a delayed term, all of ``w`` enters the plant through ``g_w``;
otherwise the undelayed ``B1`` sits in ``B``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import (
    AlgebraicLoop,
    AssumptionOneViolated,
    DimensionMismatch,
    IndexOutOfRange,
    ParseError,
)
from .model import DdaeSystem, validate

__all__ = [
    "DelayTermSeries",
    "PlantSpec",
    "ControllerTemplate",
    "ClosedLoopLayout",
    "ParamClosedLoop",
    "FREE",
    "assemble",
    "instantiate",
    "parameter_jacobian",
    "plant_from_dict",
    "template_from_dict",
    "load_plant",
    "load_template",
]

FREE = None  # mask entry for a free parameter; frozen entries hold their value

PLANT_CHANNELS = ("A", "B1", "B2", "C1", "D11", "D12", "C2", "D21", "D22")
CTRL_CHANNELS = ("AK", "BK", "CK", "DK")


@dataclass(frozen=True)
class DelayTermSeries:
    """Sum of ``matrix @ signal(t - delay)`` terms; delay 0 is the undelayed term."""

    terms: tuple = ()
    shape: tuple | None = None

    def __post_init__(self):
        terms = []
        seen = set()
        for delay, mat in self.terms:
            delay = float(delay)
            if not np.isfinite(delay) or delay < 0:
                raise DimensionMismatch(f"term delays must be nonnegative, got {delay}")
            if delay in seen:
                raise DimensionMismatch(f"duplicate delay {delay} in one term series")
            seen.add(delay)
            mat = np.array(mat, dtype=float)
            if mat.ndim != 2:
                mat = np.atleast_2d(mat)
            mat.setflags(write=False)
            terms.append((delay, mat))
        shapes = {m.shape for _, m in terms}
        if self.shape is not None:
            shapes.add(tuple(self.shape))
        if len(shapes) > 1:
            raise DimensionMismatch(f"term matrices disagree in shape: {sorted(shapes)}")
        object.__setattr__(self, "terms", tuple(terms))
        object.__setattr__(self, "shape", shapes.pop() if shapes else None)

    def __len__(self) -> int:
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    @property
    def delayed(self) -> bool:
        return any(d > 0 for d, _ in self.terms)

    def at(self, delay: float) -> np.ndarray | None:
        for d, m in self.terms:
            if d == delay:
                return m
        return None


def _series(x) -> DelayTermSeries:
    if x is None:
        return DelayTermSeries()
    if isinstance(x, DelayTermSeries):
        return x
    if isinstance(x, np.ndarray) or (isinstance(x, list) and x and not isinstance(x[0], tuple)):
        return DelayTermSeries(((0.0, x),))
    return DelayTermSeries(tuple(x))


@dataclass(frozen=True)
class PlantSpec:
    """Delayed plant ``E x_G' = ...``; channels default to empty series.

    ``E`` defaults to the identity; a singular ``E`` describes a descriptor plant.

    Dimensions not implied by any given matrix must be passed explicitly.
    """

    A: DelayTermSeries
    B1: DelayTermSeries = DelayTermSeries()
    B2: DelayTermSeries = DelayTermSeries()
    C1: DelayTermSeries = DelayTermSeries()
    D11: DelayTermSeries = DelayTermSeries()
    D12: DelayTermSeries = DelayTermSeries()
    C2: DelayTermSeries = DelayTermSeries()
    D21: DelayTermSeries = DelayTermSeries()
    D22: DelayTermSeries = DelayTermSeries()
    n_w: int | None = None
    n_u: int | None = None
    n_y: int | None = None
    n_z: int | None = None
    E: np.ndarray | None = None

    def __post_init__(self):
        for ch in PLANT_CHANNELS:
            object.__setattr__(self, ch, _series(getattr(self, ch)))
        if self.A.shape is None:
            raise DimensionMismatch("plant needs at least one A term")
        nG = self.A.shape[0]
        if self.A.shape != (nG, nG):
            raise DimensionMismatch(f"A terms must be square, got {self.A.shape}")
        E = np.eye(nG) if self.E is None else np.array(self.E, dtype=float)
        if E.shape != (nG, nG):
            raise DimensionMismatch(f"plant E has shape {E.shape}, expected {(nG, nG)}")
        E.setflags(write=False)
        object.__setattr__(self, "E", E)
        # (channel, row dim, col dim) with symbolic names
        layout = {
            "B1": ("nG", "nw"), "B2": ("nG", "nu"),
            "C1": ("nz", "nG"), "D11": ("nz", "nw"), "D12": ("nz", "nu"),
            "C2": ("ny", "nG"), "D21": ("ny", "nw"), "D22": ("ny", "nu"),
        }
        dims = {"nG": nG, "nw": self.n_w, "nu": self.n_u, "ny": self.n_y, "nz": self.n_z}
        for ch, (r, c) in layout.items():
            shape = getattr(self, ch).shape
            if shape is None:
                continue
            for name, val in ((r, shape[0]), (c, shape[1])):
                if dims[name] is None:
                    dims[name] = val
                elif dims[name] != val:
                    raise DimensionMismatch(
                        f"channel {ch} has shape {shape}, inconsistent with {name}={dims[name]}"
                    )
        for name in ("nw", "nu", "ny", "nz"):
            if dims[name] is None:
                dims[name] = 0
        object.__setattr__(self, "n_w", dims["nw"])
        object.__setattr__(self, "n_u", dims["nu"])
        object.__setattr__(self, "n_y", dims["ny"])
        object.__setattr__(self, "n_z", dims["nz"])

    @property
    def n_G(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class ControllerTemplate:
    """Controller of order ``n_K`` with per-entry FREE/FROZEN structure.

    ``masks[channel][t]`` is an object array shaped like the ``t``-th matrix of
    that channel; an entry ``FREE`` (``None``) marks a parameter, any number a
    frozen value.  Parameters are enumerated over channels ``AK, BK, CK, DK``,
    then terms in series order, then entries row-major.
    """

    n_K: int
    n_u: int
    n_y: int
    AK: DelayTermSeries = DelayTermSeries()
    BK: DelayTermSeries = DelayTermSeries()
    CK: DelayTermSeries = DelayTermSeries()
    DK: DelayTermSeries = DelayTermSeries()
    masks: dict = field(default_factory=dict)
    p0: np.ndarray | None = None

    def __post_init__(self):
        if self.n_K < 0:
            raise DimensionMismatch("controller order must be nonnegative")
        expected = {
            "AK": (self.n_K, self.n_K), "BK": (self.n_K, self.n_y),
            "CK": (self.n_u, self.n_K), "DK": (self.n_u, self.n_y),
        }
        masks = {}
        for ch in CTRL_CHANNELS:
            s = _series(getattr(self, ch))
            object.__setattr__(self, ch, s)
            if s.shape is not None and s.shape != expected[ch]:
                raise DimensionMismatch(f"{ch} has shape {s.shape}, expected {expected[ch]}")
            given = self.masks.get(ch)
            chan = []
            for t, (_, mat) in enumerate(s):
                if given is None or t >= len(given) or given[t] is None:
                    mk = np.full(mat.shape, FREE, dtype=object)
                else:
                    mk = np.empty(mat.shape, dtype=object)
                    rows = list(given[t])
                    if len(rows) != mat.shape[0] or any(len(r) != mat.shape[1] for r in rows):
                        raise DimensionMismatch(f"mask of {ch}[{t}] does not match {mat.shape}")
                    for i, row in enumerate(rows):
                        for j, e in enumerate(row):
                            mk[i, j] = FREE if e is None else float(e)
                chan.append(mk)
            masks[ch] = tuple(chan)
        object.__setattr__(self, "masks", masks)
        if self.p0 is not None:
            p0 = np.asarray(self.p0, dtype=float).ravel()
            if p0.size != self.n_params:
                raise DimensionMismatch(f"p0 has {p0.size} entries, template has {self.n_params}")
            object.__setattr__(self, "p0", p0)

    def free_entries(self) -> list:
        """``(channel, term index, row, col)`` of each parameter, in parameter order."""
        out = []
        for ch in CTRL_CHANNELS:
            for t, mk in enumerate(self.masks[ch]):
                for i in range(mk.shape[0]):
                    for j in range(mk.shape[1]):
                        if mk[i, j] is FREE:
                            out.append((ch, t, i, j))
        return out

    @property
    def n_params(self) -> int:
        return len(self.free_entries())

    def initial_point(self) -> np.ndarray:
        """``p0`` if given, else the template matrices read at the free entries."""
        if self.p0 is not None:
            return self.p0.copy()
        return np.array([getattr(self, ch).terms[t][1][i, j] for ch, t, i, j in self.free_entries()])

    @classmethod
    def static_output_feedback(cls, n_u: int, n_y: int, delay: float = 0.0, K0=None):
        """All-free static gain ``u = K y(t - delay)``."""
        K0 = np.zeros((n_u, n_y)) if K0 is None else np.asarray(K0, dtype=float).reshape(n_u, n_y)
        return cls(0, n_u, n_y, DK=DelayTermSeries(((delay, K0),)))

    @classmethod
    def full_order(cls, n_K: int, n_u: int, n_y: int, AK=None, BK=None, CK=None, DK=None):
        """All-free dynamic controller without internal delays."""
        def mat(x, shape):
            return np.zeros(shape) if x is None else np.asarray(x, dtype=float).reshape(shape)
        return cls(
            n_K, n_u, n_y,
            AK=DelayTermSeries(((0.0, mat(AK, (n_K, n_K))),)),
            BK=DelayTermSeries(((0.0, mat(BK, (n_K, n_y))),)),
            CK=DelayTermSeries(((0.0, mat(CK, (n_u, n_K))),)),
            DK=DelayTermSeries(((0.0, mat(DK, (n_u, n_y))),)),
        )


@dataclass(frozen=True)
class ClosedLoopLayout:
    """Column (and row) offsets of the closed-loop state blocks."""

    n_G: int
    n_K: int
    n_u: int
    n_y: int
    n_gw: int
    n_gz: int

    @property
    def blocks(self) -> dict:
        out, o = {}, 0
        for name, w in (("x_G", self.n_G), ("x_K", self.n_K), ("g_u", self.n_u),
                        ("g_y", self.n_y), ("g_w", self.n_gw), ("g_z", self.n_gz)):
            out[name] = slice(o, o + w)
            o += w
        return out

    @property
    def row_blocks(self) -> dict:
        """Row ranges of the defining equations, keyed by the state they define.

        The ``y`` equation precedes the ``u`` equation, so the rows of the two
        slack blocks are swapped with respect to the columns.
        """
        out, o = {}, 0
        for name, w in (("x_G", self.n_G), ("x_K", self.n_K), ("g_y", self.n_y),
                        ("g_u", self.n_u), ("g_w", self.n_gw), ("g_z", self.n_gz)):
            out[name] = slice(o, o + w)
            o += w
        return out

    @property
    def n(self) -> int:
        return self.n_G + self.n_K + self.n_u + self.n_y + self.n_gw + self.n_gz

    @property
    def n_slack(self) -> int:
        return self.n_u + self.n_y + self.n_gw + self.n_gz


@dataclass(frozen=True)
class ParamClosedLoop:
    """Closed loop ``A_i(p) = A_i(0) + sum_k p_k dA_i/dp_k``.

    ``sens[k]`` is a sparse description ``(i, row, col, coeff)`` of the single
    entry that parameter ``k`` touches.
    """

    base: DdaeSystem
    sens: tuple
    layout: ClosedLoopLayout
    template: ControllerTemplate

    @property
    def delays(self) -> tuple:
        return self.base.delays

    @property
    def n_params(self) -> int:
        return len(self.sens)

    @property
    def jacobians(self) -> list:
        return [parameter_jacobian(self, k) for k in range(self.n_params)]

    def initial_point(self) -> np.ndarray:
        return self.template.initial_point()


def _distinct_delays(series: Iterable[DelayTermSeries]) -> tuple:
    ds = sorted({d for s in series for d, _ in s if d > 0})
    return tuple(ds)


def assemble(plant: PlantSpec, ctrl: ControllerTemplate, check_at=None) -> ParamClosedLoop:
    """Assemble the parametrised closed loop.

    Parameters
    ----------
    plant, ctrl : PlantSpec, ControllerTemplate
    check_at : array_like, optional
        Parameter vector at which the index-one assumption is checked.  The
        default is the template's initial point.

    Raises
    ------
    DimensionMismatch
        If the signal sizes of plant and controller disagree.
    AlgebraicLoop
        If ``U^T A_0 V`` is singular at the check point.
    """
    if (plant.n_u, plant.n_y) != (ctrl.n_u, ctrl.n_y):
        raise DimensionMismatch(
            f"plant has n_u={plant.n_u}, n_y={plant.n_y}; controller expects "
            f"n_u={ctrl.n_u}, n_y={ctrl.n_y}"
        )
    need_gw = bool(len(plant.D11) or len(plant.D21) or plant.B1.delayed)
    need_gz = plant.C1.delayed or plant.D11.delayed or plant.D12.delayed
    lay = ClosedLoopLayout(
        plant.n_G, ctrl.n_K, plant.n_u, plant.n_y,
        plant.n_w if need_gw else 0, plant.n_z if need_gz else 0,
    )
    blk = lay.blocks
    rows = lay.row_blocks
    all_series = [getattr(plant, ch) for ch in PLANT_CHANNELS] + [getattr(ctrl, ch) for ch in CTRL_CHANNELS]
    delays = _distinct_delays(all_series)
    index = {0.0: 0, **{d: i + 1 for i, d in enumerate(delays)}}
    n = lay.n
    A = [np.zeros((n, n)) for _ in range(len(delays) + 1)]

    def put(row: str, col: str, series: DelayTermSeries, sign: float = 1.0):
        for d, M in series:
            A[index[d]][rows[row], blk[col]] += sign * M

    xG, xK, gu, gy, gw, gz = (blk[k] for k in ("x_G", "x_K", "g_u", "g_y", "g_w", "g_z"))
    # plant dynamics
    put("x_G", "x_G", plant.A)
    put("x_G", "g_u", plant.B2)
    if need_gw and plant.B1.delayed:
        put("x_G", "g_w", plant.B1)
    # y row
    put("g_y", "x_G", plant.C2)
    put("g_y", "g_u", plant.D22)
    put("g_y", "g_w", plant.D21)
    A[0][rows["g_y"], gy] -= np.eye(lay.n_y)
    # u row: frozen controller entries go into the base, free ones stay zero
    A[0][rows["g_u"], gu] += np.eye(lay.n_u)
    ctrl_rows = {"AK": ("x_K", "x_K", 1.0), "BK": ("x_K", "g_y", 1.0),
                 "CK": ("g_u", "x_K", -1.0), "DK": ("g_u", "g_y", -1.0)}
    for ch, (r, c, sign) in ctrl_rows.items():
        for (d, M), mk in zip(getattr(ctrl, ch), ctrl.masks[ch]):
            frozen = np.array([[0.0 if e is FREE else e for e in row] for row in mk]).reshape(M.shape)
            A[index[d]][rows[r], blk[c]] += sign * frozen
    sens = []
    for ch, t, i, j in ctrl.free_entries():
        r, c, sign = ctrl_rows[ch]
        d = getattr(ctrl, ch).terms[t][0]
        sens.append((index[d], rows[r].start + i, blk[c].start + j, sign))
    # w slack and z
    B = np.zeros((n, plant.n_w))
    if need_gw:
        A[0][gw, gw] -= np.eye(lay.n_gw)
        B[gw, :] = np.eye(plant.n_w)
    if not plant.B1.delayed:
        b1 = plant.B1.at(0.0)
        if b1 is not None:
            B[xG, :] = b1
    C = np.zeros((plant.n_z, n))
    if need_gz:
        put("g_z", "x_G", plant.C1)
        put("g_z", "g_u", plant.D12)
        put("g_z", "g_w", plant.D11)
        A[0][gz, gz] -= np.eye(lay.n_gz)
        C[:, gz] = np.eye(plant.n_z)
    else:
        for s, col in ((plant.C1, xG), (plant.D12, gu), (plant.D11, gw)):
            m0 = s.at(0.0)
            if m0 is not None:
                C[:, col] = m0
    E = np.zeros((n, n))
    E[xG, xG] = plant.E
    E[xK, xK] = np.eye(lay.n_K)
    base = DdaeSystem(E, tuple(A), B, C, delays)
    pcl = ParamClosedLoop(base, tuple(sens), lay, ctrl)
    p_chk = ctrl.initial_point() if check_at is None else np.asarray(check_at, dtype=float)
    _check_loop(instantiate(pcl, p_chk), lay)
    return pcl


def _check_loop(sys: DdaeSystem, lay: ClosedLoopLayout) -> None:
    try:
        validate(sys)
    except AssumptionOneViolated as exc:
        bases = np.linalg.svd(sys.E)
        r = int(np.sum(bases[1] > 1e-10 * max(bases[1].max(initial=0.0), 1e-300)))
        U, V = bases[0][:, r:], bases[2][r:].T
        culprit = []
        if V.shape[1]:
            z = V @ np.linalg.svd(U.T @ sys.A[0] @ V)[2][-1].conj()
            for k, sl in lay.blocks.items():
                if sl.stop > sl.start and np.linalg.norm(z[sl]) > 1e-6:
                    culprit.append(k)
        raise AlgebraicLoop(
            f"algebraic loop through block(s) {', '.join(culprit) or '?'}: {exc}"
        ) from None


def instantiate(pcl: ParamClosedLoop, p) -> DdaeSystem:
    """Closed-loop system at parameter vector ``p``."""
    p = np.asarray(p, dtype=float).ravel()
    if p.size != pcl.n_params:
        raise DimensionMismatch(f"p has {p.size} entries, expected {pcl.n_params}")
    A = [a.copy() for a in pcl.base.A]
    for pk, (i, r, c, coeff) in zip(p, pcl.sens):
        A[i][r, c] += coeff * pk
    b = pcl.base
    return DdaeSystem(b.E, tuple(A), b.B, b.C, b.delays)


def parameter_jacobian(pcl: ParamClosedLoop, k: int) -> list:
    """``[dA_0/dp_k, ..., dA_m/dp_k]`` (exact, constant)."""
    if not 0 <= k < pcl.n_params:
        raise IndexOutOfRange(f"parameter index {k} outside [0, {pcl.n_params})")
    n = pcl.base.n
    out = [np.zeros((n, n)) for _ in pcl.base.A]
    i, r, c, coeff = pcl.sens[k]
    out[i][r, c] = coeff
    return out


# ---------------------------------------------------------------- JSON

def _terms_from_json(items, where: str) -> DelayTermSeries:
    if items is None:
        return DelayTermSeries()
    if not isinstance(items, list):
        raise ParseError(f"{where}: expected a list of terms")
    terms = []
    for t, it in enumerate(items):
        if not isinstance(it, dict) or "matrix" not in it:
            raise ParseError(f"{where}[{t}]: term needs a 'matrix'")
        terms.append((float(it.get("delay", 0.0)), np.array(it["matrix"], dtype=float)))
    return DelayTermSeries(tuple(terms))


def plant_from_dict(doc: dict) -> PlantSpec:
    """Plant JSON: ``{"A": [{"delay": t, "matrix": [[..]]}, ...], "B1": [...], ...}``.

    Optional ``"E"`` (descriptor matrix) and ``"dims"`` with keys
    ``n_w, n_u, n_y, n_z``.
    """
    if not isinstance(doc, dict):
        raise ParseError("plant document must be an object")
    unknown = set(doc) - set(PLANT_CHANNELS) - {"E", "dims", "name", "description"}
    if unknown:
        raise ParseError(f"unknown plant fields: {sorted(unknown)}")
    kw = {ch: _terms_from_json(doc.get(ch), ch) for ch in PLANT_CHANNELS}
    dims = doc.get("dims", {})
    return PlantSpec(**kw, **{k: dims.get(k) for k in ("n_w", "n_u", "n_y", "n_z")}, E=doc.get("E"))


def _mask_entry(e):
    if e == "free" or e is None:
        return FREE
    if isinstance(e, dict) and "frozen" in e:
        return float(e["frozen"])
    raise ParseError(f"mask entries must be 'free' or {{'frozen': value}}, got {e!r}")


def template_from_dict(doc: dict) -> ControllerTemplate:
    """Template JSON with ``nK``, channel term lists, optional ``mask`` and ``p0``.

    A mask is given either per term (``"mask"`` key inside the term) or as a
    top-level ``"mask"`` object parallel to the channel lists.  Missing masks
    mean all entries free.  ``n_u``/``n_y`` are inferred from ``DK``/``CK``/``BK``
    or taken from ``"n_u"``/``"n_y"``.
    """
    if not isinstance(doc, dict) or "nK" not in doc:
        raise ParseError("template needs 'nK'")
    series, masks = {}, {}
    top = doc.get("mask", {}) or {}
    for ch in CTRL_CHANNELS:
        items = doc.get(ch) or []
        series[ch] = _terms_from_json(items, ch)
        chan = []
        for t, it in enumerate(items):
            raw = it.get("mask")
            if raw is None and ch in top and t < len(top[ch]):
                raw = top[ch][t]
            chan.append(None if raw is None else [[_mask_entry(e) for e in row] for row in raw])
        masks[ch] = chan
    nK = int(doc["nK"])
    n_u = doc.get("n_u")
    n_y = doc.get("n_y")
    for ch, ru, cy in (("DK", 0, 1), ("CK", 0, None), ("BK", None, 1)):
        sh = series[ch].shape
        if sh is None:
            continue
        if ru is not None and n_u is None:
            n_u = sh[ru]
        if cy is not None and n_y is None:
            n_y = sh[cy]
    if n_u is None or n_y is None:
        raise ParseError("cannot infer n_u/n_y; give them explicitly")
    return ControllerTemplate(nK, int(n_u), int(n_y), masks=masks, p0=doc.get("p0"), **series)


def _load(path_or_doc):
    if isinstance(path_or_doc, dict):
        return path_or_doc
    try:
        with open(path_or_doc) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path_or_doc}: {exc}") from None


def load_plant(path_or_doc) -> PlantSpec:
    return plant_from_dict(_load(path_or_doc))


def load_template(path_or_doc) -> ControllerTemplate:
    return template_from_dict(_load(path_or_doc))
