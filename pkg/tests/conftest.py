import numpy as np
import pytest

from spacearm.robot import load_preset


@pytest.fixture(scope="session")
def desk2():
    return load_preset("desk2")


@pytest.fixture(scope="session")
def full4():
    return load_preset("full4")


def random_state(model, rng, vel_scale=0.5):
    """A random in-limits state with a random base pose."""
    from spacearm.rotations import quat_normalize

    st = model.tree.home_state()
    st.pos = rng.uniform(-0.5, 0.5, 3)
    st.quat = quat_normalize(rng.standard_normal(4))
    st.q = rng.uniform(-0.8, 0.8, model.n_joints) * model.tree.q_max
    st.qdot = rng.uniform(-vel_scale, vel_scale, model.n_joints)
    st.lin_vel = rng.uniform(-vel_scale, vel_scale, 3)
    st.ang_vel = rng.uniform(-vel_scale, vel_scale, 3)
    return st
