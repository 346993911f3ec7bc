import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_stable_system, two_delay_ddae
from ddae_hinf.asymptotic import reduce_delays, ta_eval
from ddae_hinf.errors import AssumptionOneViolated, DimensionMismatch, NonpositiveDelay
from ddae_hinf.model import (
    DdaeSystem,
    partition,
    sigma_sweep,
    transfer,
    transfer_partitioned,
    validate,
)


def sigma1(M):
    return np.linalg.svd(M, compute_uv=False)[0]


# ---------------------------------------------------------------- validate

def test_validate_descriptor_nullity_one():
    b = validate(two_delay_ddae())
    assert b.nu == 1
    assert np.allclose(np.abs(b.U.ravel()), [0, 1]) and np.allclose(np.abs(b.V.ravel()), [0, 1])
    s = two_delay_ddae()
    assert np.isclose((b.U.T @ s.A[0] @ b.V).item(), -1.0)


def test_validate_identity_E_has_empty_bases():
    s = DdaeSystem(np.eye(3), [-np.eye(3)], np.ones((3, 1)), np.ones((1, 3)))
    b = validate(s)
    assert b.nu == 0 and b.U.shape == (3, 0) and b.V.shape == (3, 0)


def test_validate_rejects_singular_algebraic_part():
    s = DdaeSystem(np.zeros((2, 2)), [[[0, 1], [0, 0]]], np.ones((2, 1)), np.ones((1, 2)))
    with pytest.raises(AssumptionOneViolated, match="U\\^T A_0 V"):
        validate(s)


def test_constructor_errors():
    with pytest.raises(DimensionMismatch):
        DdaeSystem(np.eye(2), [np.eye(3)], np.ones((2, 1)), np.ones((1, 2)))
    with pytest.raises(DimensionMismatch):
        DdaeSystem(np.eye(2), [np.eye(2), np.eye(2)], np.ones((2, 1)), np.ones((1, 2)))
    with pytest.raises(NonpositiveDelay):
        DdaeSystem(np.eye(2), [np.eye(2), np.eye(2)], np.ones((2, 1)), np.ones((1, 2)), (0.0,))


def test_dict_round_trip():
    s = two_delay_ddae()
    t = DdaeSystem.from_dict(s.to_dict())
    assert t.digest() == s.digest()


def test_equal_delays_are_kept():
    s = DdaeSystem(np.eye(1), [[[-2.0]], [[0.1]], [[0.2]]], [[1.0]], [[1.0]], (1.0, 1.0))
    assert s.delays == (1.0, 1.0) and len(s.A) == 3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(0, 2))
def test_nullspace_invariants(seed, n, rank_def):
    rank_def = min(rank_def, n - 1)
    s = random_stable_system(np.random.default_rng(seed), n=n, rank_def=rank_def)
    b = validate(s)
    nE = np.linalg.norm(s.E, 2)
    assert b.nu == rank_def
    assert np.linalg.norm(b.U.T @ s.E) <= 1e-12 * nE
    assert np.linalg.norm(s.E @ b.V) <= 1e-12 * nE
    for Q in (np.hstack([b.Uperp, b.U]), np.hstack([b.Vperp, b.V])):
        assert np.allclose(Q.T @ Q, np.eye(n), atol=1e-12)


# ---------------------------------------------------------------- partition

def test_partition_blocks_of_descriptor_example():
    p = partition(two_delay_ddae())
    assert p.nu == 1 and np.isclose(abs(p.A22[0].item()), 1.0)
    assert np.isclose(abs(p.A22[1].item()), 0.25) and np.isclose(abs(p.A22[2].item()), 0.5)


def test_partition_full_rank_E():
    s = DdaeSystem(np.eye(2), [-np.eye(2)], np.ones((2, 1)), np.ones((1, 2)))
    p = partition(s)
    assert p.A22[0].shape == (0, 0) and p.A12[0].shape == (2, 0) and np.allclose(p.E11, np.eye(2))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_partition_reassembly(seed):
    s = random_stable_system(np.random.default_rng(seed), n=4, rank_def=1)
    p = partition(s)
    Ur = np.hstack([p.bases.Uperp, p.bases.U])
    Vr = np.hstack([p.bases.Vperp, p.bases.V])
    for i, a in enumerate(s.A):
        blocks = np.block([[p.A11[i], p.A12[i]], [p.A21[i], p.A22[i]]])
        assert np.allclose(Ur.T @ a @ Vr, blocks, atol=1e-12)


# ---------------------------------------------------------------- transfer

def test_transfer_values():
    s = two_delay_ddae()
    assert np.isclose(abs(transfer(s, 0).item()), 2.1 / (0.1 * 1.25 + 1.0), atol=1e-12)
    assert abs(abs(transfer(s, 1.6555j).item()) - 2.5788) <= 5e-3


def test_transfer_zero_input():
    s = DdaeSystem(two_delay_ddae().E, two_delay_ddae().A, np.zeros((2, 1)), [[2.0, -1.0]], (1, 2))
    assert np.all(transfer(s, 0.3j) == 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_transfer_forms_agree(seed):
    rng = np.random.default_rng(seed)
    s = random_stable_system(rng, n=4, rank_def=2)
    p = partition(s)
    for w in rng.uniform(0, 20, 20):
        T, Tp = transfer(s, 1j * w), transfer_partitioned(p, 1j * w)
        assert np.linalg.norm(T - Tp) <= 1e-10 * max(1.0, np.linalg.norm(T))


def test_transfer_partitioned_full_rank():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 3)) - 3 * np.eye(3)
    s = DdaeSystem(np.eye(3), [A], rng.standard_normal((3, 1)), rng.standard_normal((1, 3)))
    p = partition(s)
    ref = s.C @ np.linalg.solve(0.4j * np.eye(3) - A, s.B)
    assert np.allclose(transfer_partitioned(p, 0.4j), ref, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 50))
def test_conjugate_symmetry(w):
    s = two_delay_ddae()
    assert np.allclose(transfer(s, -1j * w), np.conj(transfer(s, 1j * w)), atol=1e-12)


def test_high_frequency_approach_to_asymptotic_transfer():
    s = two_delay_ddae()
    asys = reduce_delays(partition(s))
    gaps = []
    for w in (1e2, 1e3, 1e4):
        theta = np.mod(w * np.array(s.delays), 2 * np.pi)
        gaps.append(sigma1(transfer(s, 1j * w) - ta_eval(asys, theta)))
    assert gaps[-1] < 1e-2
    assert gaps[0] > gaps[1] > gaps[2]


# ---------------------------------------------------------------- sweep

def test_sweep_bounded_by_strong_norm():
    curve = sigma_sweep(two_delay_ddae(), np.logspace(-2, 3, 2000))
    assert 2.57 <= curve.sigma1.max() <= 4.0
    assert np.all(np.diff(curve.omega) > 0)
    assert np.all(curve.sigmas >= 0) and np.all(np.diff(curve.sigmas, axis=1) <= 0)


def test_sweep_delay_free_matches_direct_svd():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((3, 3)) - 2 * np.eye(3)
    B, C = rng.standard_normal((3, 2)), rng.standard_normal((2, 3))
    s = DdaeSystem(np.eye(3), [A], B, C)
    grid = np.linspace(0, 5, 11)
    curve = sigma_sweep(s, grid)
    for w, sig in zip(grid, curve.sigmas):
        ref = np.linalg.svd(C @ np.linalg.solve(1j * w * np.eye(3) - A, B), compute_uv=False)
        assert np.allclose(sig, ref, atol=1e-12)


def test_sweep_zero_output():
    s = DdaeSystem(np.eye(2), [-np.eye(2)], np.ones((2, 1)), np.zeros((1, 2)))
    assert np.all(sigma_sweep(s, [0, 1, 2]).sigmas == 0)
