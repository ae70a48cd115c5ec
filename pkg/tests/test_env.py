"""Tests for the task environment: reward terms, agent division, goal
sampling, observation layout, and the step loop."""
import math

import numpy as np
import pytest

from spacearm.env import (
    ACT_DIM,
    OBS_DIM,
    ROLE_BASE,
    ROLE_ORIENTATION,
    ROLE_POSITION,
    AgentSpec,
    DisturbanceSpec,
    RewardConfig,
    SpaceRobotEnv,
    TaskSpec,
    divide_agents,
    euler_error,
    home_ee_eulers,
    sample_goals,
    shared_attitude_reward,
    tracking_reward,
)
from spacearm.errors import ModelError

Z3 = np.zeros(3)
CFG = RewardConfig()


# ---------------------------------------------------------------- rewards


def test_default_reward_weights():
    assert CFG.w_error_sq == 0.001
    assert CFG.w_error_log == 1.0
    assert CFG.w_smooth == 0.01
    assert CFG.w_effort == 0.05
    assert CFG.w_collision == 0.50
    assert CFG.log_epsilon == 1e-3


def test_reward_at_goal_with_zero_action():
    # only the log barrier survives: -log(eps)
    r = tracking_reward(Z3, Z3, Z3, CFG)
    assert r == -math.log(1e-3)
    assert r == pytest.approx(6.907755278982137, abs=1e-12)


def test_reward_at_ten_centimeter_error():
    e = np.array([0.1, 0.0, 0.0])
    r = tracking_reward(e, Z3, Z3, CFG)
    e2 = float(e @ e)
    assert r == pytest.approx(-(0.001 * e2 + math.log(e2 + 1e-3)), rel=1e-12)
    assert r == pytest.approx(4.509850006183766, abs=1e-9)


def test_reward_action_terms():
    u = np.array([1.0, 0.0, 0.0])
    r = tracking_reward(Z3, u, Z3, CFG)
    # smoothness 0.01*1 plus effort 0.05*1 on top of the log barrier
    assert r == pytest.approx(-math.log(1e-3) - 0.06, rel=1e-12)
    # constant action drops the smoothness term
    r2 = tracking_reward(Z3, u, u, CFG)
    assert r2 == pytest.approx(-math.log(1e-3) - 0.05, rel=1e-12)
    assert r2 > r


def test_reward_monotone_in_error():
    norms = [0.0, 0.01, 0.05, 0.1, 0.5, 1.0]
    vals = [tracking_reward(np.array([n, 0.0, 0.0]), Z3, Z3, CFG)
            for n in norms]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_reward_monotone_in_action_magnitude():
    e = np.array([0.05, 0.0, 0.0])
    vals = [tracking_reward(e, np.full(3, s), Z3, CFG)
            for s in (0.0, 0.2, 0.5, 1.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_shared_reward_formula():
    e = np.array([0.1, -0.05, 0.02])
    u = np.array([0.3, -0.1, 0.0, 0.2, 0.1, -0.4])
    up = np.zeros(6)
    r = shared_attitude_reward(e, u, up, False, CFG)
    e2 = float(e @ e)
    expect = -(0.001 * e2 + math.log(e2 + 1e-3)
               + 0.01 * float(u @ u) + 0.05 * float(u @ u))
    assert r == pytest.approx(expect, rel=1e-12)


def test_collision_changes_reward_by_exactly_half():
    rng = np.random.default_rng(3)
    for _ in range(20):
        e = rng.normal(size=3) * 0.3
        u = rng.uniform(-1, 1, 6)
        up = rng.uniform(-1, 1, 6)
        r_free = shared_attitude_reward(e, u, up, False, CFG)
        r_hit = shared_attitude_reward(e, u, up, True, CFG)
        assert r_hit - r_free == -0.50


def test_reward_config_rejects_negative_weight():
    with pytest.raises(ModelError):
        RewardConfig(w_effort=-0.1)
    with pytest.raises(ModelError):
        RewardConfig(log_epsilon=0.0)


# ------------------------------------------------------------ euler error


def test_euler_error_wraps_across_pi():
    d = euler_error(np.array([3.0]), np.array([-3.0]))
    assert d[0] == pytest.approx(6.0 - 2.0 * math.pi, abs=1e-12)
    d = euler_error(np.array([-3.0]), np.array([3.0]))
    assert d[0] == pytest.approx(2.0 * math.pi - 6.0, abs=1e-12)


def test_euler_error_zero_and_antisymmetric():
    a = np.array([0.3, -1.2, 0.9])
    b = np.array([-0.4, 0.8, 1.1])
    assert np.all(euler_error(a, a) == 0.0)
    assert np.allclose(euler_error(a, b), -euler_error(b, a))


# --------------------------------------------------------- agent division


def test_desk_division_single_triple_arms(desk2):
    agents = divide_agents(desk2, TaskSpec("trajectory"))
    assert [a.agent_id for a in agents] == [1, 2]
    assert [a.arm for a in agents] == [0, 1]
    assert [a.joints for a in agents] == [(0, 1, 2), (3, 4, 5)]
    assert all(a.role == ROLE_POSITION for a in agents)


def test_full_division_two_agents_per_arm(full4):
    agents = divide_agents(full4, TaskSpec("trajectory"))
    assert [a.agent_id for a in agents] == list(range(1, 9))
    assert [a.arm for a in agents] == [0, 0, 1, 1, 2, 2, 3, 3]
    for a in agents:
        lo = a.arm * 6 + (0 if a.agent_id % 2 == 1 else 3)
        assert a.joints == (lo, lo + 1, lo + 2)
        # odd ids steer the shoulder triple, even ids the wrist triple
        want = ROLE_POSITION if a.agent_id % 2 == 1 else ROLE_ORIENTATION
        assert a.role == want


def test_reorientation_makes_every_agent_a_base_agent(full4):
    tr = divide_agents(full4, TaskSpec("trajectory"))
    br = divide_agents(full4, TaskSpec("reorientation"))
    assert [a.joints for a in br] == [a.joints for a in tr]
    assert all(a.role == ROLE_BASE for a in br)


def test_mixed_division(desk2):
    task = TaskSpec("mixed", arm_tasks=("trajectory", "reorientation"))
    agents = divide_agents(desk2, task)
    assert agents[0].role == ROLE_POSITION
    assert agents[1].role == ROLE_BASE


def test_joint_sets_partition(desk2, full4):
    for model in (desk2, full4):
        agents = divide_agents(model, TaskSpec("trajectory"))
        flat = sorted(j for a in agents for j in a.joints)
        assert flat == list(range(model.n_joints))


def test_task_spec_validation():
    with pytest.raises(ModelError, match="kind"):
        TaskSpec("juggling")
    with pytest.raises(ModelError, match="episode_length"):
        TaskSpec("trajectory", episode_length=0)
    with pytest.raises(ModelError, match="mixed"):
        TaskSpec("mixed")
    with pytest.raises(ModelError, match="assignment"):
        TaskSpec("mixed", arm_tasks=("trajectory", "mixed"))
    with pytest.raises(ModelError, match="mixed"):
        TaskSpec("trajectory", arm_tasks=("trajectory",))


def test_share_reward_flag():
    assert not TaskSpec("trajectory").share_reward
    assert TaskSpec("reorientation").share_reward


def test_agent_spec_validation():
    with pytest.raises(ModelError, match="joints"):
        AgentSpec(1, 0, (0, 1), ROLE_POSITION)
    with pytest.raises(ModelError, match="role"):
        AgentSpec(1, 0, (0, 1, 2), "leader")


# ----------------------------------------------------------------- goals


def test_goal_samples_cover_their_boxes(desk2):
    rng = np.random.default_rng(0)
    ref = home_ee_eulers(desk2)
    lo = desk2.target_centers - desk2.target_half[:, None]
    hi = desk2.target_centers + desk2.target_half[:, None]
    pos, base = [], []
    for _ in range(2000):
        g = sample_goals(desk2, rng, ref)
        pos.append(g.ee_pos)
        base.append(g.base_euler)
        d = euler_error(g.ee_euler, ref)
        assert np.all(np.abs(d) <= 0.2 + 1e-12)
    pos = np.stack(pos)
    base = np.stack(base)
    assert np.all(pos >= lo - 1e-12) and np.all(pos <= hi + 1e-12)
    assert np.all(np.abs(base) <= 0.2)
    # each axis should come close to both edges of its range
    span = hi - lo
    assert np.all(pos.min(axis=0) < lo + 0.05 * span)
    assert np.all(pos.max(axis=0) > hi - 0.05 * span)
    assert np.all(base.min(axis=0) < -0.18) and np.all(base.max(axis=0) > 0.18)


def test_goal_stream_is_task_independent(desk2):
    # same seed must yield the same goals for every task kind so that a
    # reassembled policy can replay another task's episodes exactly
    kinds = [TaskSpec("trajectory"), TaskSpec("reorientation"),
             TaskSpec("mixed", arm_tasks=("trajectory", "reorientation"))]
    envs = [SpaceRobotEnv(desk2, t, n_envs=2, seed=11) for t in kinds]
    for e in envs:
        e.reset()
    g0 = envs[0].goals
    for e in envs[1:]:
        assert np.array_equal(e.goals.ee_pos, g0.ee_pos)
        assert np.array_equal(e.goals.ee_euler, g0.ee_euler)
        assert np.array_equal(e.goals.base_euler, g0.base_euler)


# ----------------------------------------------------------- observations


def test_observation_shape_and_home_content(desk2):
    env = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=3, seed=0)
    obs = env.reset()
    assert obs.shape == (3, 2, OBS_DIM)
    assert obs.dtype == np.float64
    home_q = desk2.home_q
    for e in range(3):
        for i, a in enumerate(env.agents):
            row = obs[e, i]
            assert np.all(row[:12] == 0.0)  # base at rest at the origin
            assert np.allclose(row[12:15], home_q[list(a.joints)])
            assert np.all(row[15:18] == 0.0)
    # arm tails: current frame then its goal
    ee0 = np.array([0.75404648, 0.0, -0.03916635])
    assert np.allclose(obs[0, 0, 18:21], ee0, atol=1e-6)
    assert np.allclose(obs[0, 1, 18:21], ee0 * np.array([-1, 1, -1]),
                       atol=1e-6)
    for e in range(3):
        for i in range(2):
            assert np.array_equal(obs[e, i, 21:24], env.goals.ee_pos[e, i])


def test_reorientation_tail_is_base_attitude(desk2):
    env = SpaceRobotEnv(desk2, TaskSpec("reorientation"), n_envs=2, seed=4)
    obs = env.reset()
    for i in range(env.n_agents):
        assert np.allclose(obs[:, i, 18:21], 0.0, atol=1e-12)
        assert np.array_equal(obs[:, i, 21:24], env.goals.base_euler)
    # every agent sees the same shared tail
    assert np.array_equal(obs[:, 0, 18:24], obs[:, 1, 18:24])


def test_orientation_agent_tail(full4):
    env = SpaceRobotEnv(full4, TaskSpec("trajectory"), n_envs=1, seed=2)
    obs = env.reset()
    ref = home_ee_eulers(full4)
    for i, a in enumerate(env.agents):
        if a.role == ROLE_ORIENTATION:
            assert np.allclose(obs[0, i, 18:21], ref[a.arm], atol=1e-9)
            assert np.array_equal(obs[0, i, 21:24],
                                  env.goals.ee_euler[0, a.arm])


def test_observing_twice_is_pure(desk2):
    env = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=2, seed=9)
    env.reset()
    o1 = env.observations()
    o2 = env.observations()
    assert np.array_equal(o1, o2)
    env.step(np.full((2, 2, 3), 0.3))
    o3 = env.observations()
    o4 = env.observations()
    assert np.array_equal(o3, o4)
    assert not np.array_equal(o1, o3)


def test_global_state_layout(desk2, full4):
    env = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=2, seed=1)
    obs = env.reset()
    gs = env.global_state()
    assert gs.shape == (2, 12 + 2 * 6 + 6 * 2)
    assert np.array_equal(gs[:, :12], obs[:, 0, :12])
    assert np.allclose(gs[:, 12:18], np.tile(desk2.home_q, (2, 1)))
    assert np.all(gs[:, 18:24] == 0.0)
    for i in range(2):
        seg = gs[:, 24 + 6 * i:24 + 6 * (i + 1)]
        assert np.array_equal(seg, obs[:, i, 18:24])
    env4 = SpaceRobotEnv(full4, TaskSpec("trajectory"), n_envs=1, seed=1)
    env4.reset()
    assert env4.global_state().shape == (1, 12 + 2 * 24 + 6 * 8)


def test_reset_determinism(desk2):
    a = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=4, seed=123)
    b = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=4, seed=123)
    assert np.array_equal(a.reset(), b.reset())
    assert np.array_equal(a.goals.ee_pos, b.goals.ee_pos)
    c = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=4, seed=124)
    c.reset()
    assert not np.array_equal(a.goals.ee_pos, c.goals.ee_pos)


def test_consecutive_resets_draw_fresh_goals(desk2):
    env = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=1, seed=5)
    env.reset()
    g1 = env.goals.ee_pos.copy()
    env.reset()
    assert not np.array_equal(env.goals.ee_pos, g1)


# --------------------------------------------------------------- stepping


def test_step_rejects_wrong_action_shape(desk2):
    env = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=2, seed=0)
    env.reset()
    with pytest.raises(ModelError, match="shape"):
        env.step(np.zeros((2, 2, 4)))
    with pytest.raises(ModelError, match="shape"):
        env.step(np.zeros((1, 2, 3)))


def test_actions_are_clipped(desk2):
    a = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=1, seed=7)
    b = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=1, seed=7)
    a.reset()
    b.reset()
    oa, ra, _, _ = a.step(np.full((1, 2, 3), 5.0))
    ob, rb, _, _ = b.step(np.full((1, 2, 3), 1.0))
    assert np.array_equal(oa, ob)
    assert np.array_equal(ra, rb)


def test_done_after_episode_length(desk2):
    env = SpaceRobotEnv(desk2, TaskSpec("trajectory", episode_length=3),
                        n_envs=2, seed=0)
    env.reset()
    u = np.zeros((2, 2, 3))
    assert env.step(u)[2] is False
    assert env.step(u)[2] is False
    assert env.step(u)[2] is True


def test_step_trajectory_is_deterministic(desk2):
    a = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=2, seed=42)
    b = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=2, seed=42)
    a.reset()
    b.reset()
    rng = np.random.default_rng(0)
    acts = rng.uniform(-1, 1, (10, 2, 2, 3))
    for t in range(10):
        oa, ra, da, ia = a.step(acts[t])
        ob, rb, db, ib = b.step(acts[t])
        assert np.array_equal(oa, ob)
        assert np.array_equal(ra, rb)
        assert da == db
        assert np.array_equal(ia["pos_err"], ib["pos_err"])


def test_time_and_momentum_bookkeeping(desk2):
    env = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=2, seed=8)
    env.reset()
    rng = np.random.default_rng(1)
    for _ in range(10):
        env.step(rng.uniform(-1, 1, (2, 2, 3)))
    assert env.bs.time == pytest.approx(10 * 20 * 1e-3, abs=1e-12)
    # internal motion must not create momentum
    assert np.all(np.abs(env.momenta()) < 1e-10)


def test_shared_reward_is_identical_across_agents(desk2, full4):
    for model in (desk2, full4):
        env = SpaceRobotEnv(model, TaskSpec("reorientation"), n_envs=2,
                            seed=3)
        env.reset()
        rng = np.random.default_rng(2)
        for _ in range(3):
            _, r, _, _ = env.step(
                rng.uniform(-1, 1, (2, env.n_agents, 3)))
            assert np.all(r == r[:, :1])


def test_tracking_reward_ignores_other_arms_goal(desk2):
    a = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=2, seed=21)
    b = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=2, seed=21)
    a.reset()
    b.reset()
    b.goals.ee_pos[:, 1, :] += 0.03  # move only the second arm's goal
    rng = np.random.default_rng(5)
    for _ in range(3):
        u = rng.uniform(-1, 1, (2, 2, 3))
        oa, ra, _, _ = a.step(u)
        ob, rb, _, _ = b.step(u)
        assert np.array_equal(ra[:, 0], rb[:, 0])
        assert not np.array_equal(ra[:, 1], rb[:, 1])
        assert np.array_equal(oa[:, 0, :], ob[:, 0, :])


def test_collision_flag_wiring_in_env_rewards(desk2):
    env = SpaceRobotEnv(desk2, TaskSpec("reorientation"), n_envs=2, seed=6)
    env.reset()
    u = np.full((2, 2, 3), 0.1)
    env.step(u)
    env.collided[:] = False
    r_free = env._rewards(u)
    env.collided[:] = True
    r_hit = env._rewards(u)
    assert np.all(r_hit - r_free == -0.50)
    # arm tracking rewards carry no collision term
    envt = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=2, seed=6)
    envt.reset()
    envt.step(u)
    envt.collided[:] = False
    r0 = envt._rewards(u)
    envt.collided[:] = True
    r1 = envt._rewards(u)
    assert np.array_equal(r0, r1)


def test_failed_arm_stays_frozen(desk2):
    env = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=2, seed=13,
                        disturbance=DisturbanceSpec(failed_arm=1))
    env.reset()
    idx = desk2.arm_joint_indices(1)
    rng = np.random.default_rng(0)
    for _ in range(50):
        env.step(rng.uniform(-1, 1, (2, 2, 3)))
        assert np.array_equal(env.bs.q[:, idx],
                              np.tile(desk2.home_q[idx], (2, 1)))
        assert np.all(env.bs.qdot[:, idx] == 0.0)
    # the healthy arm still moved
    healthy = desk2.arm_joint_indices(0)
    assert not np.allclose(env.bs.q[:, healthy], desk2.home_q[healthy])


def test_disturbance_onset_is_exact(desk2):
    # 1 N along x from t=0.1 s for 0.04 s: impulse rises 0.02 kg m/s per
    # control step while active, then stays put
    d = DisturbanceSpec(onset_time=0.1, duration=0.04, body=-1,
                        force=(1.0, 0.0, 0.0))
    env = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=2, seed=0,
                        disturbance=d, info_momenta=True)
    env.reset()
    u = np.zeros((2, 2, 3))
    px = []
    for t in range(9):
        _, _, _, info = env.step(u)
        px.append(info["momenta"][:, 0].copy())
        assert info["wrench_on"] == (t in (5, 6))
    px = np.stack(px)
    assert np.all(np.abs(px[:5]) < 1e-12)
    assert np.allclose(px[5], 0.02, atol=1e-12)
    assert np.allclose(px[6:], 0.04, atol=1e-12)
    assert np.all(np.abs(np.stack(
        [info["momenta"][:, k] for k in (1, 2)])) < 1e-12)


def test_disturbance_onset_inside_a_control_step(desk2):
    # onset lands 5 substeps into step 5, so only 15 of its 20 substeps
    # carry the force
    d = DisturbanceSpec(onset_time=0.105, duration=0.4, body=-1,
                        force=(1.0, 0.0, 0.0))
    env = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=1, seed=0,
                        disturbance=d, info_momenta=True)
    env.reset()
    u = np.zeros((1, 2, 3))
    for _ in range(5):
        _, _, _, info = env.step(u)
    assert np.all(np.abs(info["momenta"]) < 1e-12)
    _, _, _, info = env.step(u)
    assert info["momenta"][0, 0] == pytest.approx(0.015, abs=1e-12)
    _, _, _, info = env.step(u)
    assert info["momenta"][0, 0] == pytest.approx(0.035, abs=1e-12)


def test_info_fields(desk2):
    env = SpaceRobotEnv(desk2, TaskSpec("trajectory"), n_envs=3, seed=0)
    env.reset()
    _, r, done, info = env.step(np.zeros((3, 2, 3)))
    assert r.shape == (3, 2)
    assert done is False
    assert info["pos_err"].shape == (3, 2)
    assert info["ori_err"].shape == (3, 2)
    assert info["base_err"].shape == (3,)
    assert info["collided"].dtype == np.bool_
    assert info["min_clearance"].shape == (3,)
    assert info["wrench_on"] is False
    assert "momenta" not in info
    assert np.all(np.isfinite(info["ee_pos"]))


def test_momenta_shape(full4):
    env = SpaceRobotEnv(full4, TaskSpec("reorientation"), n_envs=2, seed=0)
    env.reset()
    m = env.momenta()
    assert m.shape == (2, 6)
    assert np.all(np.abs(m) < 1e-12)
