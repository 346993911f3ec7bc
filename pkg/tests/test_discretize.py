import numpy as np
from hypothesis import given, settings, strategies as st

from conftest import two_delay_ddae
from ddae_hinf.benchmarks import get
from ddae_hinf.discretize import (
    barycentric_weights,
    build,
    build_mesh,
    differentiation_data,
    tn_eval,
)
from ddae_hinf.interconnect import instantiate
from ddae_hinf.model import DdaeSystem, transfer


def test_mesh_small_cases():
    assert np.array_equal(build_mesh(1, 2.0).points, [-2.0, 0.0])
    assert np.allclose(build_mesh(2, 2.0).points, [-2.0, -1.0, 0.0], atol=1e-15)


def test_mesh_benchmark_delay_range():
    case = get("c8_bfg_ex2")
    tau_max = instantiate(case.closed_loop(), case.p).tau_max
    assert np.isclose(tau_max, 3.9)
    pts = build_mesh(20, tau_max).points
    assert pts.size == 21 and np.unique(pts).size == 21 and pts.max() == 0.0
    assert np.all(np.diff(pts) > 0) and pts[0] == -tau_max


def test_linear_differentiation_by_hand():
    D, L = differentiation_data(build_mesh(1, 2.0), [1.0])
    assert np.allclose(D, [[-0.5, 0.5], [-0.5, 0.5]], atol=1e-15)
    assert np.allclose(L, [[0.5, 0.5]], atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 40), st.floats(0.1, 10.0), st.lists(st.floats(0.0, 1.0), min_size=1, max_size=4))
def test_partition_of_unity_and_cardinality(N, tau_max, fracs):
    mesh = build_mesh(N, tau_max)
    delays = [f * tau_max for f in fracs]
    D, L = differentiation_data(mesh, delays)
    assert np.allclose(D.sum(axis=1), 0, atol=1e-13 * max(1, np.abs(D).max()))
    assert np.allclose(L.sum(axis=1), 1, atol=1e-13)
    _, Lm = differentiation_data(mesh, -mesh.points)
    assert np.allclose(Lm, np.eye(N + 1), atol=1e-13)


def test_cardinal_property_at_mesh_points():
    mesh = build_mesh(12, 3.0)
    _, L = differentiation_data(mesh, -mesh.points)
    assert np.allclose(L, np.eye(13), atol=1e-13)


def test_differentiation_exact_for_polynomials():
    mesh = build_mesh(8, 2.0)
    D, _ = differentiation_data(mesh, [])
    x = mesh.points
    assert np.allclose(D @ x**5, 5 * x**4, atol=1e-10)


def test_weights_normalised():
    w = barycentric_weights(build_mesh(30, 5.0).points)
    assert np.isclose(np.abs(w).max(), 1.0) and np.all(np.isfinite(w))


def test_block_structure():
    s = two_delay_ddae()
    d = build(s, 5)
    n = s.n
    assert d.size == 12 and d.AN.shape == (12, 12)
    assert np.array_equal(d.EN[:10, :10], np.eye(10)) and np.array_equal(d.EN[10:, 10:], s.E)
    assert np.all(d.BN[:10] == 0) and np.array_equal(d.BN[10:], s.B)
    assert np.all(d.CN[:, :10] == 0) and np.array_equal(d.CN[:, 10:], s.C)
    # last block row reproduces A_0 + sum A_i at constant functions
    G = sum(d.AN[5 * n:, k * n:(k + 1) * n] for k in range(6))
    assert np.allclose(G, s.A[0] + s.A[1] + s.A[2], atol=1e-13)


def test_delay_free_exact():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((4, 4)) - 4 * np.eye(4)
    s = DdaeSystem(np.eye(4), [A], rng.standard_normal((4, 2)), rng.standard_normal((3, 4)))
    for N in (5, 9, 20):
        d = build(s, N)
        for w in (0.0, 1.0, 50.0):
            ref = s.C @ np.linalg.solve(1j * w * np.eye(4) - A, s.B)
            assert np.abs(tn_eval(d, 1j * w) - ref).max() <= 1e-12


def test_matches_transfer_at_low_frequency():
    s = two_delay_ddae()
    assert np.abs(tn_eval(build(s, 20), 1j) - transfer(s, 1j)).max() <= 1e-6
    assert abs(abs(tn_eval(build(s, 20), 1.6555j).item()) - 2.5788) <= 1e-3


def test_spectral_convergence():
    s = two_delay_ddae()
    ref = abs(transfer(s, 1.6555j).item())
    errs = [abs(abs(tn_eval(build(s, N), 1.6555j).item()) - ref) for N in (5, 10, 20)]
    assert errs[1] <= errs[0] / 10 and errs[2] <= max(errs[1] / 10, 1e-14)


def test_zero_input():
    s = two_delay_ddae()
    s0 = DdaeSystem(s.E, s.A, np.zeros((2, 1)), s.C, s.delays)
    assert np.all(tn_eval(build(s0, 10), 0.5j) == 0)
