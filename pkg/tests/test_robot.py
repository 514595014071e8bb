import json
import math
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import fk_homogeneous
from rdcbf.robot import (
    KinematicModel,
    RobotState,
    forward_kinematics,
    kinematics,
    link_jacobians,
    save_model,
    self_collision_pairs,
    wrap_angle,
)

FIXTURES = Path(__file__).parent / "fixtures"

angle = st.floats(-10, 10, allow_nan=False)
state_vec = st.tuples(st.floats(-5, 5), st.floats(-5, 5), *[angle] * 6).map(np.array)


@pytest.fixture(scope="module")
def model_dict():
    return json.loads(resources.files("rdcbf").joinpath("data/default_robot.json").read_text())


def chain(n):
    joints = [{"name": f"j{k}", "parent": k - 1, "origin": [0, 0, 0.3 if k else 0.1], "axis": [0, 1, 0]}
              for k in range(n)]
    links = [{"name": f"l{k}", "frame": k, "p0": [0, 0, 0], "p1": [0, 0, 0.3], "radius": 0.05} for k in range(n)]
    return {"joints": joints, "links": links, "base": {"height": 0.0}}


def test_state_wraps_and_validates():
    s = RobotState([0, 0], [math.pi, -math.pi, 3 * math.pi, 0.5, 0, 0])
    assert np.allclose(s.joints[:3], math.pi)
    assert s.vector.shape == (8,)
    assert float(wrap_angle(-math.pi)) == math.pi
    with pytest.raises(ValueError):
        RobotState([0, math.inf], np.zeros(6))
    with pytest.raises(ValueError):
        RobotState([0, 0, 0], np.zeros(6))


def test_home_pose_matches_golden_fixture(model):
    golden = json.loads((FIXTURES / "default_robot_home.json").read_text())
    geo = forward_kinematics(model, RobotState([0, 0], np.zeros(6)))
    assert len(geo) == 6
    assert np.allclose(geo.segments, golden["segments"], atol=1e-15)
    assert np.array_equal(geo.radii, golden["radii"])


@given(state_vec)
def test_fk_matches_homogeneous_transform_oracle(model, model_dict, x):
    assert np.allclose(forward_kinematics(model, x).segments, fk_homogeneous(model_dict, x), atol=1e-12)


@given(state_vec)
def test_base_translation_is_exact(model, x):
    y = x.copy()
    y[:2] += [1.0, 2.0]
    a = forward_kinematics(model, x).segments
    b = forward_kinematics(model, y).segments
    assert np.allclose(b - a, [1.0, 2.0, 0.0], atol=1e-12)


def test_joint_periodicity(model, rng):
    for _ in range(20):
        x = rng.uniform(-3, 3, 8)
        for k in range(2, 8):
            y = x.copy()
            y[k] += 2 * math.pi
            d = forward_kinematics(model, y).segments - forward_kinematics(model, x).segments
            assert np.max(np.abs(d)) <= 1e-12


def test_rigid_body_consistency(model, rng):
    ref = forward_kinematics(model, np.zeros(8)).segments
    ref_len = np.linalg.norm(ref[:, 1] - ref[:, 0], axis=1)
    for _ in range(100):
        seg = forward_kinematics(model, rng.uniform(-4, 4, 8)).segments
        assert np.max(np.abs(np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1) - ref_len)) <= 1e-12


def test_base_jacobian_columns(model, rng):
    J = link_jacobians(model, rng.uniform(-3, 3, 8))
    assert J.shape == (6, 2, 3, 8)
    assert np.array_equal(J[..., :2], np.broadcast_to([[1, 0], [0, 1], [0, 0]], J[..., :2].shape))


def test_revolute_column_is_axis_cross_lever(model, rng):
    x = rng.uniform(-3, 3, 8)
    _, pos, _, axes = model.frames(x)
    geo, J = kinematics(model, x)
    # hand endpoint is moved by every joint
    p = geo.segments[5, 1]
    for k in range(6):
        assert np.allclose(J[5, 1, :, 2 + k], np.cross(axes[k], p - pos[k]), atol=1e-14)
    # the column does not move with the elbow
    assert np.array_equal(J[1, :, :, 4], np.zeros((2, 3)))


def test_jacobian_matches_central_differences(model, rng):
    h = 1e-6
    for _ in range(30):
        x = rng.uniform(-3, 3, 8)
        J = link_jacobians(model, x)
        fd = np.empty_like(J)
        for k in range(8):
            e = np.zeros(8)
            e[k] = h
            fd[..., k] = (forward_kinematics(model, x + e).segments
                          - forward_kinematics(model, x - e).segments) / (2 * h)
        assert np.max(np.abs(J - fd)) <= 1e-5 * max(1.0, np.max(np.abs(fd)))


def test_jacobian_first_order_consistency(model, rng):
    for _ in range(50):
        x = rng.uniform(-3, 3, 8)
        d = rng.normal(size=8)
        d *= 1e-6 / np.linalg.norm(d)
        J = link_jacobians(model, x)
        lin = forward_kinematics(model, x).segments + J @ d
        assert np.max(np.abs(forward_kinematics(model, x + d).segments - lin)) <= 1e-10


def test_determinism(model, rng):
    x = rng.uniform(-3, 3, 8)
    a, Ja = kinematics(model, x)
    b, Jb = kinematics(model, x.copy())
    assert a.segments.tobytes() == b.segments.tobytes() and Ja.tobytes() == Jb.tobytes()


def test_default_self_collision_pairs(model):
    pairs = self_collision_pairs(model)
    adjacent = {(0, 1), (1, 2), (2, 3), (3, 4), (4, 5)}
    assert not adjacent & set(pairs)
    assert (3, 5) not in pairs
    assert len(pairs) == 15 - len(adjacent) - 1


def test_three_link_chain_pairs():
    assert self_collision_pairs(KinematicModel.from_dict(chain(3))) == [(0, 2)]


def test_exclusions_honoured():
    d = chain(4)
    assert self_collision_pairs(KinematicModel.from_dict(d)) == [(0, 2), (0, 3), (1, 3)]
    d["self_collision_exclusions"] = [[3, 1]]
    assert self_collision_pairs(KinematicModel.from_dict(d)) == [(0, 2), (0, 3)]


def test_model_validation():
    d = chain(2)
    d["links"][0]["radius"] = 0.0
    with pytest.raises(ValueError, match="radius"):
        KinematicModel.from_dict(d)
    d = chain(2)
    d["joints"][0]["parent"] = 1
    with pytest.raises(ValueError, match="parent"):
        KinematicModel.from_dict(d)


def test_model_round_trip(model, tmp_path):
    save_model(model, tmp_path / "m.json")
    again = KinematicModel.load(tmp_path / "m.json")
    assert again.to_dict() == model.to_dict()
