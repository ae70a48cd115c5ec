import copy

import numpy as np
import pytest
import yaml
from importlib import resources

from spacearm.dynamics import check_collision
from spacearm.errors import ModelError
from spacearm.robot import (
    PRESETS,
    RobotModel,
    build_space_robot,
    load_preset,
    model_from_dict,
    load_model,
    resolve_model,
    default_target_volume,
)


def _preset_cfg(name):
    ref = resources.files("spacearm") / "model_files" / f"{name}.yaml"
    return yaml.safe_load(ref.read_text())


def test_presets_load(desk2, full4):
    assert desk2.n_arms == 2 and desk2.n_joints == 6
    assert full4.n_arms == 4 and full4.n_joints == 24
    for model in (desk2, full4):
        assert isinstance(model, RobotModel)
        assert model.tree.nv == 6 + model.n_joints
        assert model.home_q.shape == (model.n_joints,)
        assert model.kp.shape == model.kd.shape == (model.n_joints,)
        assert len(model.config_hash) == 64


def test_home_is_collision_free(desk2, full4):
    for model in (desk2, full4):
        res = check_collision(model.tree, model.home_state())
        assert not res.collided and res.min_clearance > 0.0


def test_arm_joint_indices(full4):
    seen = []
    for a in range(full4.n_arms):
        idx = full4.arm_joint_indices(a)
        assert len(idx) == 6
        assert np.all(np.diff(idx) > 0)
        seen.extend(idx.tolist())
    assert sorted(seen) == list(range(24))


def test_config_hash_stable_and_sensitive():
    cfg = _preset_cfg("desk2")
    m1 = model_from_dict(copy.deepcopy(cfg))
    m2 = model_from_dict(copy.deepcopy(cfg))
    assert m1.config_hash == m2.config_hash
    cfg2 = copy.deepcopy(cfg)
    cfg2["base"]["mass"] = cfg["base"]["mass"] * 1.01
    assert model_from_dict(cfg2).config_hash != m1.config_hash


def test_load_model_file_matches_preset(tmp_path, desk2):
    ref = resources.files("spacearm") / "model_files" / "desk2.yaml"
    p = tmp_path / "copy.yaml"
    p.write_text(ref.read_text())
    m = load_model(p)
    assert m.config_hash == desk2.config_hash
    assert np.allclose(m.tree.mass, desk2.tree.mass)
    assert np.allclose(m.home_q, desk2.home_q)


def test_resolve_model(tmp_path):
    assert resolve_model("desk2").name == resolve_model("desk2").name
    with pytest.raises(ModelError):
        resolve_model("no_such_model_anywhere")
    ref = resources.files("spacearm") / "model_files" / "full4.yaml"
    p = tmp_path / "m.yaml"
    p.write_text(ref.read_text())
    assert resolve_model(str(p)).n_arms == 4


def test_default_target_volume(desk2):
    c, h = default_target_volume(desk2, 0)
    assert c.shape == (3,) and h > 0
    with pytest.raises(ModelError):
        default_target_volume(desk2, 5)


def test_bad_model_version():
    cfg = _preset_cfg("desk2")
    cfg["model_version"] = 99
    with pytest.raises(ModelError, match="model_version"):
        build_space_robot(cfg)


def test_bad_axis_rejected():
    cfg = _preset_cfg("desk2")
    cfg["arms"][0]["links"][0]["axis"] = [0.0, 0.0, 2.0]
    with pytest.raises(ModelError, match="axis"):
        model_from_dict(cfg)


def test_bad_inertia_rejected():
    cfg = _preset_cfg("desk2")
    cfg["arms"][0]["links"][1]["inertia_diag"] = [1.0, 0.1, 2.0]
    with pytest.raises(ModelError, match="triangle"):
        model_from_dict(cfg)
    cfg = _preset_cfg("desk2")
    cfg["arms"][0]["links"][1]["mass"] = -3.0
    with pytest.raises(ModelError, match="mass"):
        model_from_dict(cfg)


def test_bad_limits_rejected():
    cfg = _preset_cfg("desk2")
    cfg["arms"][0]["links"][0]["q_max"] = 0.0
    with pytest.raises(ModelError, match="q_max"):
        model_from_dict(cfg)


def test_bad_gain_length_rejected():
    cfg = _preset_cfg("desk2")
    cfg["pd"]["kp"] = [1.0, 2.0]
    with pytest.raises(ModelError, match="pd gain"):
        model_from_dict(cfg)


def test_bad_home_length_rejected():
    cfg = _preset_cfg("desk2")
    cfg["home_q_arm"] = [0.0]
    with pytest.raises(ModelError, match="home_q_arm"):
        model_from_dict(cfg)


def test_mount_composition():
    """The first link's joint frame composes the arm mount with the link
    offset; later links chain in their parent frames."""
    cfg = _preset_cfg("desk2")
    m = model_from_dict(cfg)
    arm0 = cfg["arms"][0]
    assert np.allclose(m.tree.mount_pos[0], arm0["mount_pos"])
    # second link offset is expressed in the first link frame, unchanged
    assert np.allclose(m.tree.mount_pos[1], arm0["links"][1]["offset"])


def test_preset_names():
    assert set(PRESETS) == {"full4", "desk2"}
    for name in PRESETS:
        load_preset(name)
    with pytest.raises(ModelError):
        load_preset("desk3")
