import numpy as np
import pytest

from acerac.learner import AceracLearner, LearnerConfig
from acerac.replay import ReplayMemory, Transition

_ACCEPTANCE = []


@pytest.fixture
def report():
    """Record one acceptance line: ``report(name, ok, detail)``."""

    def _report(name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


def random_problem(
    rng,
    state_dim=3,
    action_dim=2,
    hidden=(5,),
    tau=3,
    alpha=0.5,
    sigma=0.4,
    trials=4,
    max_len=7,
    drift=0.1,
    penalty=0.7,
    bound=1.0,
    terminal_prob=0.3,
):
    """Small learner plus a buffer of random trials collected by the learner's actor.

    After collection the actor weights are shifted by ``drift`` so replayed
    segments are off-policy.
    """
    cfg = LearnerConfig(
        hidden_layers=hidden,
        tau=tau,
        alpha=alpha,
        sigma=sigma,
        action_low=-bound * np.ones(action_dim),
        action_high=bound * np.ones(action_dim),
        bound_penalty_weight=penalty,
    )
    learner = AceracLearner(state_dim, action_dim, cfg, rng)
    learner.theta = rng.normal(scale=0.7, size=learner.theta.size)
    learner.nu = rng.normal(scale=0.7, size=learner.nu.size)
    buf = ReplayMemory(1000, state_dim, action_dim)
    from acerac.noise import reset_trial

    for trial in range(trials):
        noise = reset_trial(learner.noise)
        s = rng.normal(size=state_dim)
        length = int(rng.integers(1, max_len + 1))
        for k in range(length):
            a, A, noise = learner.act(s, noise, rng)
            s_next = rng.normal(size=state_dim)
            last = k == length - 1
            terminal = bool(last and rng.random() < terminal_prob)
            buf.push(Transition(s, A, a, float(rng.normal()), s_next, terminal, trial, k))
            s = s_next
    if drift:
        learner.theta = learner.theta + drift * rng.normal(size=learner.theta.size)
    return learner, buf


def relative_error(x, ref):
    x, ref = np.asarray(x, float), np.asarray(ref, float)
    scale = max(np.linalg.norm(ref), 1e-12)
    return float(np.linalg.norm(x - ref) / scale)


def central_difference(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g
