import math

import numpy as np
import pytest

from acerac.envs import Chain, Pendulum, PointMass, make_env, pendulum_energy_controller, wrap_angle
from acerac.harness import evaluate, eval_seed


@pytest.mark.parametrize("name", ["pendulum", "point_mass", "chain"])
def test_reset_seeded(name):
    a, b = make_env(name), make_env(name)
    np.testing.assert_array_equal(a.reset(seed=3), b.reset(seed=3))
    assert a.steps == 0


def test_different_seeds_differ():
    env = Pendulum()
    assert not np.array_equal(env.reset(seed=1), env.reset(seed=2))
    pm = PointMass()
    assert not np.array_equal(pm.reset(seed=1), pm.reset(seed=2))


def test_reset_ranges():
    env = Pendulum()
    for seed in range(50):
        env.reset(seed=seed)
        assert -math.pi <= env.th <= math.pi and -1 <= env.thdot <= 1
    pm = PointMass()
    for seed in range(50):
        obs = pm.reset(seed=seed)
        assert np.all(np.abs(obs[:2]) <= 1) and not obs[2:4].any() and np.all(np.abs(obs[4:]) <= 1)


def test_unknown_env():
    with pytest.raises(ValueError):
        make_env("hopper")


def test_pendulum_rewards():
    env = Pendulum()
    env.reset(seed=0)
    env.set_state(0.0, 0.0)
    assert env.step([0.0])[1] == 0.0
    env.set_state(math.pi, 0.0)
    assert math.isclose(env.step([0.0])[1], -math.pi**2)
    assert math.isclose(-(math.pi**2), -9.869604401089358)


def test_pendulum_energy_non_increasing_with_damping():
    env = Pendulum(damping=0.2)
    rng = np.random.default_rng(0)
    for _ in range(20):
        env.reset(seed=int(rng.integers(1 << 30)))
        env.set_state(rng.uniform(-math.pi, math.pi), rng.uniform(-4, 4))
        prev = env.energy()
        for _ in range(500):
            env.step([0.0])
            e = env.energy()
            assert e <= prev + 1e-9
            prev = e


def test_pendulum_energy_error_bounded_without_damping():
    """Semi-implicit Euler oscillates around the true energy but does not drift."""
    env = Pendulum()
    env.reset(seed=0)
    env.set_state(1.0, 0.0)
    start = env.energy()
    dev = []
    for _ in range(20000):
        env.step([0.0])
        dev.append(abs(env.energy() - start))
    early, overall = max(dev[:400]), max(dev)
    assert early < 0.3 * abs(start)
    assert overall < 1.05 * early


def test_non_finite_action_rejected():
    env = Pendulum()
    env.reset(seed=0)
    with pytest.raises(ValueError):
        env.step([np.nan])


def test_step_limit_truncates():
    env = PointMass(max_episode_steps=5)
    env.reset(seed=0)
    flags = [env.step(np.zeros(2))[2] for _ in range(5)]
    assert flags == [False] * 4 + [True]
    assert env.truncated


@pytest.mark.parametrize("name", ["pendulum", "point_mass"])
def test_deterministic_trajectories(name):
    rng = np.random.default_rng(1)
    actions = rng.uniform(-1, 1, size=(300, make_env(name).spec.action_dim))

    def rollout():
        env = make_env(name)
        obs = [env.reset(seed=7)]
        for a in actions:
            s, r, terminal = env.step(a)
            obs.append(np.append(s, r))
            if terminal:
                obs.append(env.reset())
        return np.concatenate(obs)

    assert np.array_equal(rollout(), rollout())


@pytest.mark.parametrize("name", ["pendulum", "point_mass"])
def test_fuzzed_states_stay_finite_and_rewards_bounded(name):
    env = make_env(name)
    spec = env.spec
    rng = np.random.default_rng(2)
    steps = 5 * 10**5  # 10^6 fuzzed steps across both tasks
    actions = rng.uniform(spec.action_low, spec.action_high, size=(steps, spec.action_dim))
    env.reset(seed=0)
    worst = 0.0
    for a in actions:
        s, r, terminal = env.step(a)
        worst = min(worst, r)
        if terminal:
            env.reset()
    assert np.all(np.isfinite(s))
    if name == "pendulum":
        bound = -(math.pi**2 + 0.1 * 8**2 + 0.001 * 2**2)
    else:
        # |p| <= 1 + steps * dt * max_speed per axis, |g| <= 1
        reach = 1 + spec.max_episode_steps * spec.dt * PointMass.max_speed + 1
        bound = -2 * reach**2
    assert worst >= bound


def test_chain_values():
    env = Chain(r0=1.0, r1=0.0)
    s = env.reset()
    assert np.array_equal(s, [1.0, 0.0])
    _, r, _ = env.step([0.0])
    assert r == 1.0
    v0, v1 = env.true_values(0.9)
    assert math.isclose(v0, 1 / (1 - 0.81)) and math.isclose(v1, 0.9 * v0)


def test_wrap_angle():
    assert math.isclose(wrap_angle(math.pi), -math.pi)
    assert math.isclose(wrap_angle(3 * math.pi / 2), -math.pi / 2)


def test_energy_controller_is_near_optimal():
    means = [evaluate(pendulum_energy_controller, Pendulum(), 10, eval_seed(s))[0] for s in range(3)]
    assert np.mean(means) > -150
    # far better than doing nothing
    idle = [evaluate(lambda s: np.zeros(1), Pendulum(), 10, eval_seed(s))[0] for s in range(3)]
    assert np.mean(idle) < 3 * np.mean(means)
