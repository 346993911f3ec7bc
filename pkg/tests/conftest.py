"""Shared systems and the acceptance report hook."""
import numpy as np
import pytest

from ddae_hinf import DdaeSystem
from ddae_hinf.interconnect import ControllerTemplate, DelayTermSeries, PlantSpec, assemble

ACCEPTANCE_LINES: list = []


def two_delay_ddae(delays=(1.0, 2.0)) -> DdaeSystem:
    """Scalar DDAE with an algebraic output loop; strong norm 4, plain norm 2.5788."""
    return DdaeSystem(
        np.diag([1.0, 0.0]),
        [[[-0.1, -1.0], [1.0, -1.0]], [[0.0, 0.0], [0.0, 0.25]], [[0.0, 0.0], [0.0, -0.5]]],
        [[0.0], [1.0]],
        [[2.0, -1.0]],
        delays,
    )


def frequency_peak_ddae(delays=(1.0, 2.0)) -> DdaeSystem:
    """DDAE whose strong norm 2.3859 is a frequency peak above its Ta norm 16/7."""
    return DdaeSystem(
        np.diag([1.0, 0.0]),
        [[[0.0, -1.0], [1.0, -1.0]], [[0.0, 0.0], [0.0, 1.0 / 16.0]], [[0.0, 0.0], [0.0, -0.5]]],
        [[2.0], [1.0]],
        [[0.0, 1.0]],
        delays,
    )


def scalar_plant() -> PlantSpec:
    """Scalar retarded plant with input and feedthrough delay 0.2; stable for -7.9 < K < 1.5."""
    return PlantSpec(
        A=DelayTermSeries(((0.0, [[-1.0]]), (1.0, [[-0.5]]))),
        B1=[[1.0]],
        B2=DelayTermSeries(((0.2, [[1.0]]),)),
        C1=[[1.0]],
        D12=DelayTermSeries(((0.2, [[1.0]]),)),
        C2=[[1.0]],
    )


def descriptor_plant() -> PlantSpec:
    """Descriptor plant with delayed measurements; closed loop at K=(0.25,-0.5) is two_delay_ddae."""
    return PlantSpec(
        A=DelayTermSeries(((0.0, [[-0.1, -1.0], [1.0, -1.0]]),)),
        B1=[[0.0], [1.0]],
        B2=[[0.0], [1.0]],
        C1=[[2.0, -1.0]],
        C2=DelayTermSeries(((1.0, [[0.0, 1.0], [0.0, 0.0]]), (2.0, [[0.0, 0.0], [0.0, 1.0]]))),
        E=np.diag([1.0, 0.0]),
    )


@pytest.fixture(scope="session")
def scalar_loop():
    return assemble(scalar_plant(), ControllerTemplate.static_output_feedback(1, 1), check_at=[-3.0])


@pytest.fixture(scope="session")
def descriptor_loop():
    return assemble(
        descriptor_plant(), ControllerTemplate.static_output_feedback(1, 2), check_at=[0.25, -0.5]
    )


def random_stable_system(rng, n=3, m=2, nw=2, nz=2, rank_def=1) -> DdaeSystem:
    """Random DDAE with ``rank(E) = n - rank_def`` and a well-conditioned algebraic part."""
    k = n - rank_def
    E = np.zeros((n, n))
    E[:k, :k] = np.eye(k)
    A = [rng.standard_normal((n, n)) * 0.3 for _ in range(m + 1)]
    A[0][:k, :k] -= 3.0 * np.eye(k)
    A[0][k:, k:] = -np.eye(rank_def) * 2.0
    for a in A[1:]:
        a[k:, k:] *= 0.2
    Q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return DdaeSystem(
        Q1 @ E @ Q2,
        [Q1 @ a @ Q2 for a in A],
        Q1 @ rng.standard_normal((n, nw)),
        rng.standard_normal((nz, n)) @ Q2,
        tuple(rng.uniform(0.2, 2.0, m)),
    )


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
