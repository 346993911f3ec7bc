"""Registry of benchmark plants with published controllers and closed-loop norms.

Each case bundles a plant, a controller template, a parameter vector and the
published strong H-infinity norm of the resulting closed loop.  The plant
data are transcribed from the literature collection; ``DIGESTS`` locks the
transcriptions so accidental edits show up as test failures.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .interconnect import (
    ControllerTemplate,
    DelayTermSeries,
    ParamClosedLoop,
    PlantSpec,
    assemble,
)

__all__ = ["BenchmarkCase", "REGISTRY", "DIGESTS", "get", "select", "plant_digest"]


def _t(*terms) -> DelayTermSeries:
    return DelayTermSeries(tuple((d, np.array(m, dtype=float)) for d, m in terms))


@dataclass(frozen=True)
class BenchmarkCase:
    name: str
    source: str
    plant: Callable[[], PlantSpec]
    template: Callable[[], ControllerTemplate]
    p: tuple
    published: float
    tol: float
    note: str = ""

    def closed_loop(self) -> ParamClosedLoop:
        return assemble(self.plant(), self.template(), check_at=np.array(self.p))


# ---------------------------------------------------------------- plants

def fridman2002_ex4() -> PlantSpec:
    h = 0.999
    return PlantSpec(
        A=_t((0, [[0, 0], [0, 1]]), (h, [[-1, -1], [0, -0.9]])),
        B1=_t((0, [[1], [1]])),
        B2=_t((0, [[0], [1]])),
        C1=_t((0, [[0, 1], [0, 0]])),
        D12=_t((0, [[0], [0.1]])),
        C2=_t((0, np.eye(2))),
    )


def fridman1998_ex1() -> PlantSpec:
    h = 0.1
    return PlantSpec(
        A=_t((0, [[2, 1], [0, -1]]), (h, [[-1, 0], [-1, 1]])),
        B1=_t((0, [[-0.5], [1]])),
        B2=_t((0, [[3], [1]])),
        C1=_t((0, [[1, -0.5], [0, 0]])),
        D12=_t((0, [[0], [1]])),
        C2=_t((0, np.eye(2))),
    )


def fridman_ex2() -> PlantSpec:
    h = 1.2
    return PlantSpec(
        E=np.diag([1.0, 0.0]),
        A=_t((0, np.zeros((2, 2))), (h, [[-1, 0], [1, -1]])),
        B1=_t((0, [[1], [1]])),
        B2=_t((0, [[-0.5], [1]])),
        C1=_t((0, [[1, 0.2]])),
        D12=_t((0, [[0.1]])),
        C2=_t((0, np.eye(2))),
    )


def fridman_ex3() -> PlantSpec:
    h = 1.2
    return PlantSpec(
        E=np.diag([1.0, 0.0]),
        A=_t((0, [[0, 0], [0, 1]]), (h, [[-1, 0], [1, -1]])),
        B1=_t((0, [[1, 0], [1, 0]])),
        B2=_t((0, [[0], [1]])),
        C1=_t((0, [[1, 0.2]])),
        D12=_t((0, [[0.1]])),
        C2=_t((0, [[1, 0]])),
        D21=_t((0, [[0, 0.1]])),
    )


def fridman_ex4(h: float) -> Callable[[], PlantSpec]:
    def build() -> PlantSpec:
        return PlantSpec(
            A=_t((0, [[0, 0], [0, 1]]), (h, [[-1, -1], [0, -0.9]])),
            B1=_t((0, [[1, 0], [1, 0]])),
            B2=_t((0, [[0], [1]])),
            C1=_t((0, [[0, 1], [0, 0]])),
            D12=_t((0, [[0], [0.1]])),
            C2=_t((0, [[0, 1]])),
            D21=_t((0, [[0, 0.1]])),
        )
    return build


def robust_ex() -> PlantSpec:
    A = [[-0.08, -0.03, 0.2], [0.2, -0.04, -0.005], [-0.06, 0.2, -0.07]]
    B = [[-0.1], [-0.2], [0.1]]
    return PlantSpec(
        A=_t((0, A)),
        B1=_t((0, B)),
        B2=_t((5.0, B)),
        C1=_t((0, np.eye(3))),
        C2=_t((0, np.eye(3))),
    )


def heat11(B=None, a0_66: float = -0.0588, a0_1111: float = 0.0) -> PlantSpec:
    """Eleven-state heat-transfer plant.

    The input matrix ``B`` is not part of the available data; the default is
    a placeholder (``e_11``) and the reproduction of the published norm is
    not expected to succeed with it.  ``A_0(6,6)`` is listed twice in the
    source (``-0.0588`` and ``-1``) while row 11 carries no entry; both
    readings are selectable.
    """
    n = 11
    A = [np.zeros((n, n)) for _ in range(6)]

    def s(i, k, l, val):
        A[i][k - 1, l - 1] = val

    for k in (1, 3, 5, 9):
        s(0, k, k, -0.2)
    for k, l in ((4, 7), (4, 8), (8, 3), (8, 4)):
        s(0, k, l, 0.1417)
    s(0, 2, 2, -0.04)
    s(0, 6, 6, a0_66)
    s(0, 11, 11, a0_1111)
    s(0, 10, 10, -0.0667)
    s(0, 4, 3, 0.1917)
    s(0, 8, 7, 0.1917)
    s(0, 4, 4, -0.04)
    s(0, 8, 8, -0.04)
    s(1, 5, 4, 0.195)
    s(2, 3, 2, 0.1966)
    s(2, 6, 5, 0.0529)
    s(2, 9, 8, 0.194)
    s(2, 10, 9, 0.0613)
    s(3, 1, 6, 0.1946)
    s(4, 2, 1, 0.0384)
    s(5, 7, 7, -0.0159)
    delays = (3.0, 5.0, 15.0, 23.0, 29.0)
    if B is None:
        B = np.zeros((n, 1))
        B[-1, 0] = 1.0
    return PlantSpec(
        A=DelayTermSeries(((0.0, A[0]),) + tuple(zip(delays, A[1:]))),
        B1=_t((0, np.eye(n))),
        B2=_t((7.0, np.asarray(B, dtype=float).reshape(n, 1))),
        C1=_t((0, np.eye(n))),
        C2=_t((0, np.eye(n))),
    )


def bfg_ex2() -> PlantSpec:
    A0 = [[-4.4656, -0.4271, 0.4427, -0.1854],
          [-0.8601, -5.6257, 0.8577, -0.5210],
          [0.9001, -0.7177, -6.5358, 0.0417],
          [-0.6836, 0.0242, 0.4997, -3.5618]]
    A1 = [[0.6848, -0.0618, 0.5399, 0.5057],
          [0.3259, -0.3810, 0.6592, -0.0066],
          [0.6325, 0.3752, 0.4122, 0.7303],
          [0.5878, 0.9737, 0.1907, -0.8639]]
    A2 = [[0.9371, -0.7859, 0.1332, 0.7429],
          [-0.8025, 0.4483, 0.6226, 0.0152],
          [0.0940, 0.2274, 0.1536, 0.5776],
          [-0.1941, 0.5659, 0.8881, -0.0539]]
    A3 = [[0.6576, -0.8543, -0.3460, 0.6415],
          [-0.3550, 0.5024, 0.6081, 0.9038],
          [0.9523, 0.6624, 0.0765, -0.8475],
          [-0.4436, 0.8447, -0.0734, 0.4173]]
    return PlantSpec(
        A=_t((0, A0), (3.2, A1), (3.4, A2), (3.9, A3)),
        B1=_t((0, [[1, 0], [-1.6, 1], [0, 0], [0, 0]])),
        B2=_t((0.2, [[0.2], [-1], [0.1], [-0.4]])),
        C1=_t((0, [[1, 0, 0, -1], [0, -1, 1, 0]])),
        D11=_t((0, [[0.1, 1], [-1, 0.2]])),
        D12=_t((0, [[1], [-1]])),
        C2=_t((0, [[1, 0, -1, 0]])),
        D21=_t((0, [[-2, 0.1]])),
        D22=_t((0.2, [[0.4]])),
    )


# ---------------------------------------------------------------- templates

def _sof(n_u: int, n_y: int) -> Callable[[], ControllerTemplate]:
    return lambda: ControllerTemplate.static_output_feedback(n_u, n_y)


def _dyn(n_K: int, n_u: int = 1, n_y: int = 1) -> Callable[[], ControllerTemplate]:
    return lambda: ControllerTemplate.full_order(n_K, n_u, n_y)


def _open_loop(n_u: int, n_y: int) -> Callable[[], ControllerTemplate]:
    def build():
        return ControllerTemplate(
            0, n_u, n_y, DK=DelayTermSeries(((0.0, np.zeros((n_u, n_y))),)),
            masks={"DK": [[[0.0] * n_y for _ in range(n_u)]]},
        )
    return build


def _pack_dyn(AK, BK, CK, DK) -> tuple:
    """Parameter vector of a full-order template (AK, BK, CK, DK row-major)."""
    return tuple(np.concatenate([np.ravel(AK), np.ravel(BK), np.ravel(CK), np.ravel(DK)]))


REGISTRY: dict[str, BenchmarkCase] = {}


def _add(case: BenchmarkCase):
    REGISTRY[case.name] = case


_add(BenchmarkCase("c1_fridman2002_ex4", "state feedback, retarded", fridman2002_ex4,
                   _sof(1, 2), (-2.3273, -9.5004e3), 0.1000, 1e-2))
_add(BenchmarkCase("c2_fridman1998_ex1", "state feedback, retarded", fridman1998_ex1,
                   _sof(1, 2), (-17.8065, 9.5915), 0.4005, 1e-2))
_add(BenchmarkCase("c3_fridman_ex2", "state feedback, DDAE", fridman_ex2,
                   _sof(1, 2), (-1.1151e3, -1.6189e4), 2.9091, 5e-2))
_add(BenchmarkCase("c4_fridman_ex3", "static output feedback, DDAE", fridman_ex3,
                   _sof(1, 1), (-8.6961,), 3.7654, 1e-2))
_add(BenchmarkCase("c4_fridman_ex3_order1", "first-order controller, DDAE", fridman_ex3,
                   _dyn(1), _pack_dyn(-7.1827, -37.3389, 18.6767, 90.4893), 1.2618, 1e-2))
_add(BenchmarkCase("c4_fridman_ex3_order2", "second-order controller, DDAE", fridman_ex3,
                   _dyn(2),
                   _pack_dyn([[-2.6837, -15.1028], [0.3607, 1.2086]], [-6.2101, 3.6959],
                             [0.1379, -3.9720], 10.4548),
                   1.2428, 1e-2))
_add(BenchmarkCase("c5_fridman_ex4_h0999", "static output feedback", fridman_ex4(0.999),
                   _sof(1, 1), (-16.1692,), 0.1617, 1e-2))
_add(BenchmarkCase("c5_fridman_ex4_h128", "static output feedback", fridman_ex4(1.28),
                   _sof(1, 1), (-16.1692,), 0.1617, 1e-2))
_add(BenchmarkCase("c6_robust", "state feedback, input delay 5", robust_ex,
                   _sof(1, 3), (0.7763, 1.1119, 0.5433), 3.3145, 1e-2))
_add(BenchmarkCase("c7_heat11", "state feedback, 11 states, 5 state delays", heat11,
                   _sof(1, 11),
                   (-1.3414, -5.7544, 1.0440, 0.5181, -29.9649, -5.0182,
                    -12.4284, 0.6694, 4.7125, -23.6380, 2.3902),
                   386.3491, 1.0, note="input matrix B unavailable; placeholder e_11, A0(6,6)=-0.0588"))
_add(BenchmarkCase("c7_heat11_a66m1", "as c7_heat11 with the second reading A0(6,6)=-1",
                   lambda: heat11(a0_66=-1.0), _sof(1, 11), REGISTRY["c7_heat11"].p,
                   386.3491, 1.0, note="input matrix B unavailable; placeholder e_11, A0(6,6)=-1"))
_add(BenchmarkCase("c8_bfg_ex2", "open loop", bfg_ex2, _open_loop(1, 1), (), 1.3907, 1e-2))
_add(BenchmarkCase("c8_bfg_ex2_order1", "first-order controller", bfg_ex2, _dyn(1),
                   _pack_dyn(-0.3068, 0.9590, 0.0166, 0.0186), 1.2513, 1e-2))
_add(BenchmarkCase("c8_bfg_ex2_order2", "second-order controller", bfg_ex2, _dyn(2),
                   _pack_dyn([[-0.0959, -0.0624], [-0.0024, -0.1984]], [-0.0982, 0.0883],
                             [-0.0756, 0.0347], 0.0234),
                   1.2508, 1e-2))
_add(BenchmarkCase("c8_bfg_ex2_order3", "third-order controller", bfg_ex2, _dyn(3),
                   _pack_dyn([[-0.0861, -0.0673, -0.0953], [0.0046, -0.2170, -0.0233],
                              [-0.0016, 0.0010, -0.2973]], [-0.0519, 0.1083, 0.1995],
                             [-0.1734, -0.1040, -0.0475], 0.0362),
                   1.2493, 1e-2))


def plant_digest(plant: PlantSpec) -> str:
    h = hashlib.sha256()
    for ch in ("A", "B1", "B2", "C1", "D11", "D12", "C2", "D21", "D22"):
        for d, m in getattr(plant, ch):
            h.update(f"{ch}:{d!r}:{m.shape}".encode())
            h.update(np.ascontiguousarray(m).tobytes())
    h.update(np.ascontiguousarray(plant.E).tobytes())
    return h.hexdigest()[:16]


DIGESTS: dict[str, str] = {
    "c1_fridman2002_ex4": "d02b600da20a9ad5",
    "c2_fridman1998_ex1": "9b0a8c825cde6ff0",
    "c3_fridman_ex2": "dcf50a66b903a253",
    "c4_fridman_ex3": "4cb5a689df08fae6",
    "c5_fridman_ex4_h0999": "575a8a5c19f605d6",
    "c5_fridman_ex4_h128": "019ef4494abb5c21",
    "c6_robust": "914ddeb169cda420",
    "c7_heat11": "5fdef0b7890e2057",
    "c7_heat11_a66m1": "d094a65ccfc1411b",
    "c8_bfg_ex2": "1d02eab84120573d",
}


def get(name: str) -> BenchmarkCase:
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown benchmark {name!r}; available: {', '.join(REGISTRY)}") from None


def select(name: str) -> list:
    """The case called ``name`` plus its variants (``name_*``)."""
    out = [c for k, c in REGISTRY.items() if k == name or k.startswith(name + "_")]
    if not out:
        raise KeyError(f"unknown benchmark {name!r}; available: {', '.join(REGISTRY)}")
    return out
