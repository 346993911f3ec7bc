import numpy as np
import pytest

from ddae_hinf import benchmarks
from ddae_hinf.benchmarks import DIGESTS, REGISTRY, get, plant_digest, select
from ddae_hinf.interconnect import instantiate
from ddae_hinf.stability import check_strong_stability
from ddae_hinf.synthesis import objective

REPRODUCIBLE = [
    "c1_fridman2002_ex4",
    "c2_fridman1998_ex1",
    "c3_fridman_ex2",
    "c5_fridman_ex4_h0999",
    "c5_fridman_ex4_h128",
    "c6_robust",
    "c8_bfg_ex2",
    "c8_bfg_ex2_order1",
    "c8_bfg_ex2_order2",
    "c8_bfg_ex2_order3",
]


@pytest.mark.parametrize("name", sorted(DIGESTS))
def test_plant_data_locked(name):
    assert plant_digest(REGISTRY[name].plant()) == DIGESTS[name]


@pytest.mark.parametrize("name", REPRODUCIBLE)
def test_published_values(name):
    case = get(name)
    ev = objective(case.closed_loop(), case.p, want_grad=False)
    assert abs(ev.xi - case.published) <= case.tol


def test_select_by_prefix():
    names = [c.name for c in select("c8")]
    assert names == ["c8_bfg_ex2", "c8_bfg_ex2_order1", "c8_bfg_ex2_order2", "c8_bfg_ex2_order3"]
    assert [c.name for c in select("c6_robust")] == ["c6_robust"]
    with pytest.raises(KeyError):
        select("nope")


def test_parameter_counts_match_templates():
    for case in REGISTRY.values():
        assert len(case.p) == case.closed_loop().n_params, case.name


def test_transcribed_difference_operator_is_marginal():
    # the controller cannot act on the algebraic component x2(t) = x2(t - h)
    case = get("c4_fridman_ex3")
    rep = check_strong_stability(instantiate(case.closed_loop(), case.p))
    assert abs(rep.difference_radius - 1.0) <= 1e-9 and not rep.stable


def test_heat_plant_placeholder_input_documented():
    case = get("c7_heat11")
    assert "placeholder" in case.note
    plant = benchmarks.heat11()
    assert plant.n_G == 11
    assert sum(np.count_nonzero(M) for _, M in plant.B2.terms) == 1
