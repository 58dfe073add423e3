import json
import math

import pytest

import milpevo


def test_generate_and_solve():
    inst = milpevo.generate("KS", seed=3)
    assert inst.n_vars > 0
    lp = milpevo.solve_lp(inst)
    res = milpevo.solve_milp(inst)
    assert res["status"] == "optimal"
    # Maximization: the LP bound is at least the integer optimum.
    assert lp["objective"] >= res["objective"] - 1e-6
    again = milpevo.read_mps(inst.to_mps())
    assert again.n_vars == inst.n_vars
    assert again.n_cons == inst.n_cons


def test_filter_rules():
    space = milpevo.param_search_space({"n": 10, "flag": True})
    assert space["n"] == [5, 7, 10, 20, 30, 50, 70, 90, 100, 150]
    assert space["flag"] == [True, False]
    ok, reasons = milpevo.accept(
        dict(solve_time=10, presolve_time=1, n_vars=1000, n_bin_int=500, n_cons=800, n_nodes=100, gap=0.5)
    )
    assert not ok and reasons == ["solve_time"]


def test_losses_and_metrics():
    assert milpevo.huber_loss(1.0, 0.5) == pytest.approx(0.125)
    assert milpevo.branch_ce_loss([1.0, 0.0], 0) == pytest.approx(0.31326, abs=1e-5)
    assert milpevo.contrastive_loss([[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]) == pytest.approx(
        math.log1p(math.e), abs=1e-9
    )
    assert milpevo.time_improvement([3.0, 4.0], [3.0, 4.0]) == 0.0
    assert milpevo.histogram_similarity([0.1, 0.5, 0.9], [0.1, 0.5, 0.9]) == pytest.approx((1, 1, 0, 0))
    v = milpevo.text_embed("a set cover problem", 32)
    assert len(v) == 32 and math.isclose(sum(x * x for x in v), 1.0)


def test_errors_carry_codes():
    with pytest.raises(milpevo.MilpevoError):
        milpevo.pearson([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])
    with pytest.raises(milpevo.MilpevoError):
        milpevo.generate("NOPE")


def test_seed_gen_is_reproducible(tmp_path):
    cfg = milpevo.default_config("desk")
    cfg["workspace"] = str(tmp_path)
    cfg["seed_instances"] = 1
    a = milpevo.seed_gen(cfg)
    b = milpevo.seed_gen(cfg)
    assert a["manifest_hash"] == b["manifest_hash"]
    manifest = json.loads(open(a["manifest_path"]).read())
    assert len(manifest["classes"]) == 8
