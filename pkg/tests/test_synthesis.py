import numpy as np
import pytest

from ddae_hinf.asymptotic import reduce_delays
from ddae_hinf.benchmarks import get
from ddae_hinf.errors import InfeasibleStart, NonsmoothPoint
from ddae_hinf.interconnect import ControllerTemplate, PlantSpec, assemble, instantiate
from ddae_hinf.levelset import ASYMPTOTIC, FREQUENCY
from ddae_hinf.model import partition
from ddae_hinf.synthesis import OptimizeOptions, gradient, objective, optimize


def fd(pcl, p, h=1e-6):
    p = np.asarray(p, dtype=float)
    return np.array([
        (objective(pcl, p + h * e, want_grad=False).xi - objective(pcl, p - h * e, want_grad=False).xi) / (2 * h)
        for e in np.eye(p.size)
    ])


# ---------------------------------------------------------------- objective

def test_scalar_loop_values(scalar_loop):
    assert abs(objective(scalar_loop, [-0.8813]).xi - 0.2137) <= 1e-3
    for K in (1.6, -7.95):
        ev = objective(scalar_loop, [K])
        assert ev.xi == np.inf and not ev.finite and "unstable" in ev.cause


def test_descriptor_loop_near_published_optimum(descriptor_loop):
    ev = objective(descriptor_loop, [-0.3533, -0.1012])
    assert abs(ev.xi - 1.8333) <= 1e-2


def test_tie_at_exact_optimum_is_nonsmooth(descriptor_loop):
    p = [-53 / 150, -167 / 1650]
    ev = objective(descriptor_loop, p)
    assert abs(ev.xi - 11 / 6) <= 1e-9
    assert ev.grad is None and ev.cause.startswith("nonsmooth")
    with pytest.raises(NonsmoothPoint):
        gradient(descriptor_loop, p, ev)


def test_algebraic_loop_gives_infinity():
    plant = PlantSpec(A=[[-1.0]], B1=[[1.0]], B2=[[1.0]], C1=[[1.0]], C2=[[1.0]], D22=[[1.0]])
    pcl = assemble(plant, ControllerTemplate.static_output_feedback(1, 1), check_at=[0.5])
    ev = objective(pcl, [1.0])
    assert ev.xi == np.inf and "algebraic loop" in ev.cause


# ---------------------------------------------------------------- gradient

def test_gradient_matches_finite_differences(scalar_loop):
    ev = objective(scalar_loop, [-3.0])
    assert ev.branch == FREQUENCY
    g = fd(scalar_loop, [-3.0])
    assert np.allclose(ev.grad, g, rtol=1e-5)


def test_gradient_on_asymptotic_branch(descriptor_loop):
    p = np.array([0.2, -0.45])
    ev = objective(descriptor_loop, p)
    assert ev.branch == ASYMPTOTIC
    assert np.allclose(ev.grad, fd(descriptor_loop, p), rtol=1e-5, atol=1e-8)


def test_parameter_absent_from_active_branch():
    # zero measurement: the gain never reaches the closed-loop dynamics
    quiet = PlantSpec(A=[[-1.0]], B1=[[1.0]], B2=[[1.0]], C1=[[1.0]], C2=[[0.0]])
    pcl = assemble(quiet, ControllerTemplate.static_output_feedback(1, 1))
    ev = objective(pcl, [0.7])
    assert ev.grad is not None and np.all(ev.grad == 0.0)


def test_pruned_delay_parameter_uses_frequency_branch():
    case = get("c2_fridman1998_ex1")
    pcl = case.closed_loop()
    sys_ = instantiate(pcl, case.p)
    assert reduce_delays(partition(sys_)).retained == ()
    p = [-12.0, 5.0]  # the published gain balances two peaks, so step away from it
    ev = objective(pcl, p)
    assert ev.branch == FREQUENCY and ev.grad is not None
    assert np.allclose(ev.grad, fd(pcl, p), rtol=1e-5, atol=1e-9)


# ---------------------------------------------------------------- optimize

def test_optimize_monotone_and_deterministic(scalar_loop):
    opts = OptimizeOptions(rng_seed=3, max_iter=30)
    p1, xi1, tr1 = optimize(scalar_loop, [-5.0], opts)
    p2, xi2, tr2 = optimize(scalar_loop, [-5.0], opts)
    assert np.array_equal(p1, p2) and xi1 == xi2
    assert [t["xi"] for t in tr1] == [t["xi"] for t in tr2]
    # the trace holds accepted iterates only
    assert np.all(np.diff([t["xi"] for t in tr1]) <= 0)
    assert tr1[0]["phase"] == "start"
    assert abs(p1[0] + 0.8813) <= 0.05


def test_optimize_from_minimiser(scalar_loop):
    p0, xi0, _ = optimize(scalar_loop, [-1.0])
    p, xi, tr = optimize(scalar_loop, p0)
    assert abs(p[0] - p0[0]) <= 1e-6 and xi <= xi0 + 1e-12
    assert len([t for t in tr if t["phase"] != "gs"]) <= 3


def test_infeasible_start(scalar_loop):
    with pytest.raises(InfeasibleStart):
        optimize(scalar_loop, [1.6])


def test_option_validation():
    with pytest.raises(ValueError):
        OptimizeOptions(c1=0.6, c2=0.5)
