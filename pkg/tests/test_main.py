import numpy as np
import pandas as pd
import pytest
import yaml

from rhgc.main import EXIT_CONFIG, EXIT_OK, main
from tests.conftest import SWEEP_A, SWEEP_B


@pytest.fixture
def sweep_file(tmp_path, sweep_config_data):
    path = tmp_path / "sweep.yaml"
    sweep_config_data["W"] = [1, 3]
    path.write_text(yaml.safe_dump(sweep_config_data))
    return path


def test_transform_prints_canonical_form(tmp_path, capsys):
    np.savetxt(tmp_path / "A.txt", np.array(SWEEP_A))
    np.savetxt(tmp_path / "B.txt", np.array(SWEEP_B))
    assert main(["transform", str(tmp_path / "A.txt"), str(tmp_path / "B.txt")]) == EXIT_OK
    report = yaml.safe_load(capsys.readouterr().out)
    assert report["p"] == 2
    assert report["p_list"] == [2]
    np.testing.assert_allclose(report["A_hat"], SWEEP_A, atol=1e-12)


def test_transform_missing_file(tmp_path):
    assert main(["transform", str(tmp_path / "A.txt"), str(tmp_path / "B.txt")]) == EXIT_CONFIG


def test_run_writes_table(tmp_path, sweep_file):
    out = tmp_path / "run.csv"
    assert main(["run", "--config", str(sweep_file), "--out", str(out)]) == EXIT_OK
    table = pd.read_csv(out)
    assert len(table) == 5 * 2 * 2
    assert "wall_time" not in table.columns


def test_seed_override(tmp_path, sweep_file):
    out = tmp_path / "run.csv"
    assert main(["run", "--config", str(sweep_file), "--out", str(out), "--seed", "4"]) == EXIT_OK
    assert set(pd.read_csv(out)["seed"]) == {4}


def test_sweep_writes_summary(tmp_path, sweep_file):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", str(sweep_file), "--out", str(out)]) == EXIT_OK
    assert out.is_file()
    summary = pd.read_csv(tmp_path / "sweep_summary.csv")
    assert len(summary) == 5 * 2


def test_bad_config_exits_with_config_code(tmp_path, sweep_config_data):
    sweep_config_data["algorithms"] = ["newton"]
    path = tmp_path / "bad.yaml"
    path.write_text(yaml.safe_dump(sweep_config_data))
    assert main(["run", "--config", str(path)]) == EXIT_CONFIG
    assert main(["run", "--config", str(tmp_path / "absent.yaml")]) == EXIT_CONFIG


def test_lower_bound_command(tmp_path):
    out = tmp_path / "lb.csv"
    code = main(["lower-bound", "--N", "24", "--p", "2", "--L-N", "4", "--seeds", "2", "--K-max", "2",
                 "--out", str(out)])
    assert code == EXIT_OK
    table = pd.read_csv(out)
    assert list(table["K"]) == [0, 1, 2]
    instance = pd.read_csv(tmp_path / "lb_instance.csv")
    assert list(instance.columns) == ["t", "theta_0", "theta_1"]
    assert len(instance) == 25


def test_robot_command(tmp_path):
    config = {
        "name": "line",
        "instance": {"source": "robot", "N": 30, "robot": {"reference": "line"}},
        "algorithms": ["rhtm"],
        "W": [5],
        "seeds": [0],
    }
    path = tmp_path / "robot.yaml"
    path.write_text(yaml.safe_dump(config))
    out = tmp_path / "robot.csv"
    assert main(["robot", "--config", str(path), "--out", str(out)]) == EXIT_OK
    assert len(pd.read_csv(out)) == 31
    assert (tmp_path / "robot_planned.csv").is_file()
    costs = pd.read_csv(tmp_path / "robot_costs.csv")
    assert list(costs["W"]) == [5]


def test_robot_command_needs_robot_source(tmp_path, sweep_file):
    assert main(["robot", "--config", str(sweep_file)]) == EXIT_CONFIG


@pytest.mark.slow
def test_verify_quick():
    assert main(["verify", "--quick"]) == EXIT_OK
