"""Smoke tests for the python bindings (run by ctest with PYTHONPATH set)."""

import math
import sys

import cdqn


def test_default_scenario():
    cfg = cdqn.default_scenario()
    assert cfg.ess.capacity_kwh == 100.0
    assert cfg.ess.charge_rate_kw == 20.0
    assert cfg.ess.soc_init == 0.2
    assert cfg.hyper.batch_size == 120
    assert cfg.hyper.replay_capacity == 1200
    assert list(cfg.hyper.bid_grid) == [0.06, 0.09, 0.12, 0.15, 0.18, 0.21]
    assert len(cfg.devices) == 5
    assert cfg.devices[4].window_end == 28
    text = cdqn.serialize_config(cfg)
    again = cdqn.parse_config(text, "roundtrip")
    assert cdqn.serialize_config(again) == text
    assert cdqn.config_hash(again) == cdqn.config_hash(cfg)


def test_clear_market():
    offers = [cdqn.Offer(1, 40.0, 0.09), cdqn.Offer(2, 20.0, 0.12)]
    res = cdqn.clear_market(offers, 50.0, 0.20, 0.10)
    assert math.isclose(res.clearing_price, 0.12)
    assert math.isclose(res.dispatch[0].in_mg_kwh, 40.0)
    assert math.isclose(res.dispatch[1].to_grid_kwh, 10.0)
    assert math.isclose(res.dispatch[1].avg_sell_price, 0.11)
    assert res.grid_import_kwh == 0.0


def test_env_roundtrip():
    cfg = cdqn.default_scenario()
    state = cdqn.reset(cfg)
    assert state.hour == 1
    assert state.waiting[0] == 8
    space = cdqn.JointActionSpace.from_config(cfg)
    assert space.size() == 1536
    mask = cdqn.joint_feasible_mask(state, cfg)
    assert len(mask) == 1536 and any(mask)
    idx = next(j for j, ok in enumerate(mask) if ok)
    out = cdqn.step(state, space.action(idx), cfg)
    assert out.next_state.hour == 2
    assert all(math.isfinite(r) for r in out.rewards)


def test_solve_ce_prisoners_dilemma():
    g = cdqn.GameMatrix()
    g.num_agents = 2
    g.local_counts = [2, 2]
    g.feasible = [1, 1, 1, 1]
    g.q = [[3.0, 0.0, 4.0, 1.0], [3.0, 4.0, 0.0, 1.0]]
    dist = cdqn.solve_ce(g)
    assert math.isclose(dist.objective, 2.0, abs_tol=1e-8)
    assert cdqn.select_joint_action(dist) == 3
    assert cdqn.ce_residual(g, dist) <= 1e-7


def test_training_determinism():
    cfg = cdqn.default_scenario()
    cfg.hyper.episodes = 30
    cfg.hyper.epsilon_decay_episodes = 20
    cfg.hyper.hidden_size = 6
    cfg.hyper.train_steps_per_event = 1
    a = cdqn.train(cfg, seed=5)
    b = cdqn.train(cfg, seed=5)
    assert list(a.metrics.reward[1]) == list(b.metrics.reward[1])
    assert a.metrics.transitions_per_agent == 30 * 28
    trace = cdqn.evaluate(a.policy, cfg)
    assert len(trace.hours) == cfg.hyper.horizon_h
    for h in trace.hours:
        assert cfg.ess.soc_min <= h.soc <= cfg.ess.soc_max


def main():
    tests = [(name, fn) for name, fn in sorted(globals().items()) if name.startswith("test_")]
    failures = 0
    for name, fn in tests:
        try:
            fn()
            print(f"ok   {name}")
        except Exception as exc:  # noqa: BLE001 - report and continue
            failures += 1
            print(f"FAIL {name}: {exc!r}")
    if failures:
        sys.exit(1)


if __name__ == "__main__":
    main()
