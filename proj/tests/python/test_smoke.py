import math

import pytest

import auxskip

TINY = [
    "space.num_inputs=1",
    "space.num_nodes=2",
    "space.ops=none,skip,conv3x3",
    "space.num_cells=1",
    "space.channels=4",
    "space.aggregation=sum",
    "data.samples=32",
    "search.epochs=2",
    "search.batch_size=8",
    "discretize.k=1",
]


def test_version():
    assert auxskip.__version__ == "0.1.0"


def test_linear_schedule_endpoints():
    assert auxskip.beta_at("linear", 1.0, 50, 0) == 1.0
    assert auxskip.beta_at("linear", 1.0, 50, 25) == 0.5
    assert auxskip.beta_at("linear", 1.0, 50, 50) == 0.0
    with pytest.raises(ValueError):
        auxskip.beta_at("exponential", 1.0, 50, 0)


def test_lambda_hand_case():
    conv = {(0, 1): 0.5, (0, 2): 0.5, (1, 2): 0.5}
    skip = {k: 0.15 for k in conv}
    assert math.isclose(auxskip.lambda_proxy(conv, skip, 1.0, 3), 0.25 + 0.25 * 1.15**2, rel_tol=0, abs_tol=1e-12)


def test_gradient_flow_identity_blocks():
    rep = auxskip.gradient_flow_check(6, 1.0, "identity")
    assert rep["max_relative_error"] < 1e-12
    norms = rep["grad_norms"]
    assert math.isclose(norms[0] / norms[-1], 2.0**6, rel_tol=1e-12)


def test_resnet_beta_rises_from_zero():
    betas = auxskip.resnet_beta_demo(init_beta=0.0, epochs=20)
    assert len(betas) == 20
    assert betas[-1] > 0.5


def test_search_is_deterministic():
    a = auxskip.search(overrides=TINY)
    b = auxskip.search(overrides=TINY)
    assert a["final_alpha"] == b["final_alpha"]
    assert len(a["trajectory"]) == 2
    assert a["trajectory"][0]["beta"] == 1.0
    assert 1 <= a["best_epoch"] <= 2
    assert auxskip.parse_genotype(a["best"]["text"])["key"] == a["best"]["key"]


def test_config_errors_raise_value_error():
    with pytest.raises(ValueError, match="unknown key"):
        auxskip.dump_config("bogus = 1\n")
    assert "search.epochs = 3" in auxskip.dump_config("", ["search.epochs=3"])


def test_bench_space_has_27_genotypes():
    keys = auxskip.bench_genotypes(overrides=[
        "space.num_inputs=1", "space.num_nodes=2", "space.ops=none,skip,conv3x3", "space.aggregation=sum",
        "bench.discretization=dense"])
    assert len(keys) == 27
    assert len(set(keys)) == 27
