"""Smoke test for the compiled module. Run with `python python/smoke_test.py` or pytest."""

import math
import tempfile

import competence_lab as cl


def test_world():
    w = cl.GridWorld()
    assert w.state_space_size() == 2208
    assert len(w.enumerate_states()) == 2208
    s = w.initial_state()
    nxt, events = w.step(s, 3)
    assert isinstance(nxt, cl.State) and events == []
    assert len(w.features(nxt)) == w.feature_dim
    assert hash(s) == hash(w.initial_state()) and s == w.initial_state()
    try:
        w.step(s, 9)
    except cl.CompetenceLabError:
        pass
    else:
        raise AssertionError("bad action accepted")


def test_formulas():
    assert math.isclose(cl.impact_reward([0, 0], [3, 4], 25), 1.0)
    assert math.isclose(cl.rig_reward([3, 4], [0, 0]), -5.0)
    assert math.isclose(cl.rig_reward([1, 0], [0, 0], [[4, 0], [0, 1]]), -2.0)
    assert math.isclose(cl.diayn_reward([0, 0, 0, 0], 1), math.log(0.25))
    assert abs(cl.vic_reward([0, 0, 0, 0], [0.25] * 4, 2)) < 1e-12
    p = cl.module_probabilities([0.3, 0.1], 0.1)
    assert all(math.isclose(a, b) for a, b in zip(p, [0.725, 0.275]))
    assert cl.competence([True, False, True, True]) == 0.75
    assert cl.learning_progress([False, False, True, True]) == 1.0
    assert math.isclose(cl.mutual_information([[5, 0], [0, 5]]), math.log(2))
    assert cl.js_divergence([0.5, 0.5], [0.5, 0.5]) == 0.0
    picks = cl.thompson_select([(100, 1), (1, 100)], seed=3, draws=200)
    assert picks.count(0) >= 198

    m = cl.MultiTimeModel(0.2, 0.9)
    s = cl.GridWorld().initial_state()
    rewards = []
    for _ in range(50):
        rewards.append(m.reward(s, ["light_on"]))
        m.update(s, "light_on", 1, True)
    assert rewards[0] == 1.0 and abs(rewards[-1] - 0.1) < 1e-3


def test_run_and_compare():
    cfg = '{"environment":"builtin:playroom","facet":"%s","total_steps":2000,"seed":%d}'
    out = cl.run(cfg % ("diayn", 1))
    assert out["summary"]["steps"] == 2000
    assert "coverage" in out["series"]
    assert cl.validate(cfg % ("rig", 2))["facet"] == "rig"
    with tempfile.TemporaryDirectory() as root:
        dirs = [cl.run(cfg % (f, 0), out_dir=root)["run_dir"] for f in ("effectance", "diayn")]
        res = cl.compare(dirs, root + "/cmp")
        assert len(res["pairs"]) == 1 and res["pairs"][0]["js_divergence"] > 0


if __name__ == "__main__":
    test_world()
    test_formulas()
    test_run_and_compare()
    print("smoke test passed")
