import json
import math
import pathlib

import numpy as np
import pytest

import crowd

ROOT = pathlib.Path(__file__).resolve().parents[2]
GOLDEN = str(ROOT / "scenarios" / "square_room.json")


def test_head_on_pair_is_stopped():
    pos = np.array([[0.0, 0.0], [1.0, 0.0]])
    res = crowd.project(pos, [0.5], np.array([[1.0, 0.0], [-1.0, 0.0]]), h=0.1)
    assert res["converged"]
    assert res["status"] == "converged"
    assert np.abs(res["velocity"]).max() < 1e-7
    assert res["multipliers"][0] == pytest.approx(10.0, rel=1e-6)
    assert res["kkt_passed"]
    assert res["constraints"][0]["kind"] == "disk_disk"


def test_uzawa_matches_oracle_with_a_wall():
    rng = np.random.default_rng(3)
    pos = np.array([[0.0, 0.5], [1.0, 0.5], [0.5, 0.5 + math.sqrt(3) / 2]])
    walls = [np.array([[-3.0, 0.0], [3.0, 0.0]])]
    for _ in range(20):
        target = rng.normal(size=(3, 2))
        a = crowd.project(pos, [0.5], target, h=0.1, walls=walls, cutoff=0.1)
        b = crowd.oracle_project(pos, [0.5], target, h=0.1, walls=walls, cutoff=0.1)
        assert np.abs(a["velocity"] - b["velocity"]).max() < 1e-6
        fast = crowd.project(pos, [0.5], target, h=0.1, walls=walls, cutoff=0.1,
                             accelerate=True, finish=True)
        assert np.abs(fast["velocity"] - b["velocity"]).max() < 1e-6


def test_iteration_cap_is_reported():
    pos = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    res = crowd.project(pos, [0.5], np.array([[1.0, 0], [0, 0], [-1.0, 0]]), h=0.1,
                        max_iter=1, tol=1e-14)
    assert not res["converged"]
    assert res["status"] == "max-iterations-exceeded"


def test_errors_map_to_exceptions():
    with pytest.raises(crowd.GeometryError):
        crowd.project(np.zeros((2, 2)), [0.5], np.zeros((2, 2)), h=0.1)
    with pytest.raises(crowd.ValidationError):
        crowd.project(np.array([[0.0, 0.0]]), [0.5], np.zeros((1, 2)), h=0.0)
    with pytest.raises(crowd.IoError):
        crowd.canonical_scenario(str(ROOT / "scenarios" / "absent.json"))
    assert issubclass(crowd.SolverError, crowd.CrowdError)


def test_prox_regularity_of_orthogonal_contacts():
    pos = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    d = crowd.prox_regularity(pos, [0.5])
    assert d["contacts"] == 2
    assert d["min_quadratic"] == pytest.approx(1.0)
    assert d["gamma"] == pytest.approx(math.sqrt(2.0))


def test_min_gap():
    pos = np.array([[0.0, 0.0], [1.5, 0.0]])
    assert crowd.min_gap(pos, [0.5, 0.25]) == pytest.approx(0.75)


def test_distance_field_of_the_golden_room():
    d = crowd.distance_field(GOLDEN, spacing=0.25)
    v = d["values"]
    assert v.ndim == 2
    assert np.isfinite(v).any()
    assert np.nanmin(v[np.isfinite(v)]) == 0.0
    assert d["spacing"] == 0.25


def test_canonical_scenario_and_short_run():
    text = crowd.canonical_scenario(GOLDEN)
    assert json.loads(text)["population"]["count"] == 20
    out = crowd.run(GOLDEN, horizon=0.1, stride=5)
    assert out["steps"] == 10
    assert out["initial_count"] == 20
    assert len(out["positions"]) == 2
    assert out["positions"][0].shape == (20, 2)
    assert out["min_gap"] >= -1e-6


def test_cli_check():
    code, out, err = crowd.cli(["check", GOLDEN])
    assert code == 0
    assert "ok: 20 disks placed" in out
    code, _, _ = crowd.cli(["bogus"])
    assert code == 1
