import json
import socket

import pytest

from trileg.cli import main
from trileg.config import Config, save_config
from trileg.episodes import load_episode


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestVerbs:
    def test_eval_row(self, capsys):
        code, out, _ = run_cli(
            capsys, "eval", "--primitive", "forward", "--trials", "3", "--policy", "expert"
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "motion_type,trials,successes,rate"
        assert lines[1].startswith("forward,3,")

    def test_eval_requires_choice(self, capsys):
        code, _, err = run_cli(capsys, "eval", "--trials", "1")
        assert code == 2
        assert "choose" in err

    def test_eval_per_trial_rows(self, capsys):
        code, out, _ = run_cli(
            capsys, "eval", "--primitive", "squat", "--trials", "2", "--per-trial"
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert "task,trial,success,violation,steps_used,metrics" in lines
        trial_rows = [l for l in lines if l.startswith("squat,")]
        assert len(trial_rows) == 3  # summary row + two trial rows
        assert trial_rows[1].startswith("squat,0,1,none,")
        assert trial_rows[2].startswith("squat,1,1,none,")

    def test_eval_high_friction_zero(self, capsys):
        code, out, _ = run_cli(
            capsys, "eval", "--primitive", "forward", "--trials", "2",
            "--friction-scale", "10",
        )
        assert code == 0
        assert out.strip().splitlines()[1] == "forward,2,0,0.0"

    def test_rollout_and_replay(self, capsys, tmp_path):
        ep_dir = tmp_path / "ep"
        code, out, _ = run_cli(
            capsys, "rollout", "--instruction", "SQUAT", "--seed", "4",
            "--record", str(ep_dir),
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["success"] is True
        assert doc["samples"] == len(load_episode(ep_dir).samples)

        code, out, _ = run_cli(capsys, "replay", str(ep_dir))
        assert code == 0
        assert json.loads(out)["bit_exact"] is True

    def test_replay_config_mismatch(self, capsys, tmp_path):
        ep_dir = tmp_path / "ep2"
        run_cli(capsys, "rollout", "--instruction", "SQUAT", "--record", str(ep_dir))
        other = tmp_path / "other.json"
        cfg = Config()
        cfg.robot.rot_rate_deg = 9.0
        save_config(cfg, other)
        code, _, err = run_cli(capsys, "replay", str(ep_dir), "--config", str(other))
        assert code == 1
        assert "mismatch" in err

    def test_dataset_summarize_empty(self, capsys, tmp_path):
        code, out, _ = run_cli(capsys, "dataset-summarize", str(tmp_path))
        assert code == 0
        doc = json.loads(out)
        assert doc["episodes"] == 0 and doc["total_pairs"] == 0

    def test_dataset_prune(self, capsys, tmp_path):
        ep_dir = tmp_path / "src"
        run_cli(capsys, "rollout", "--instruction", "STAND_UP", "--record", str(ep_dir))
        code, out, _ = run_cli(
            capsys, "dataset-prune", str(ep_dir), str(tmp_path / "dst"), "--keep", "2"
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["samples_after"] <= doc["samples_before"]
        load_episode(tmp_path / "dst")

    def test_mse_verb(self, capsys, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        a.write_text("0.1,0.0,0.0\n0.2,0.0,0.0\n")
        b.write_text("0.0,0.0,0.0\n0.0,0.0,0.0\n")
        code, out, _ = run_cli(capsys, "mse", "--pred", str(a), "--truth", str(b),
                               "--label", "forward")
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "motion_type,mse_x,mse_y,mse_z,overall"
        fields = lines[1].split(",")
        assert fields[0] == "forward"
        assert float(fields[1]) == pytest.approx(0.025)
        assert float(fields[4]) == pytest.approx(0.025 / 3)

    def test_bad_instruction_exit_code(self, capsys):
        code, _, err = run_cli(capsys, "rollout", "--instruction", "FLY")
        assert code == 1
        assert "FLY" in err

    def test_presets(self, capsys):
        code, out, _ = run_cli(capsys, "presets")
        assert code == 0
        assert set(json.loads(out)) == {"action_history", "concise", "detailed"}

    def test_write_config_roundtrip(self, capsys, tmp_path):
        path = tmp_path / "cal.json"
        code, _, _ = run_cli(capsys, "write-config", str(path))
        assert code == 0
        assert json.loads(path.read_text())["actuation"]["v_max"] == 2.5

    def test_serve_smoke(self, capsys, tmp_path):
        from trileg.gateway import Gateway

        gw = Gateway(Config(), record_root=tmp_path, pace_hz=0)
        host, port = gw.serve()
        try:
            sock = socket.create_connection((host, port), timeout=30)
            data = b""
            while b"\n" not in data:
                data += sock.recv(65536)
            obs = json.loads(data.split(b"\n")[0])
            assert obs["type"] == "obs"
            sock.close()
        finally:
            gw.shutdown()
