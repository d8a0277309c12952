import json
import math
import os

import numpy as np
import pytest

from specrl.agent.checkpoint import load_agent
from specrl.agent.td3 import NonFiniteLoss, SpectralAgent
from specrl.bench.cli import main, parse_seed_range, UsageError
from specrl.bench.config import ConfigError, ExperimentConfig, load_config, loads_config, parse_overrides, save_config
from specrl.bench.metrics import MetricsRow, emit_metrics, metrics_csv, smooth, summary
from specrl.bench.runner import EXIT_NONFINITE, evaluate, run_experiment, substream, substream_int
from specrl.envs import ActionRepeat, PendulumEnv


def tiny(**kw):
    base = dict(kind="td3", total_frames=400, warmup_frames=100, eval_interval=100, eval_episodes=1,
                batch_size=16, hidden=8, rep_dim=4, rep_hidden=8, n_negatives=3, n_levels=3, rff_count=8,
                mc_samples=2)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    def test_round_trip(self, tmp_path):
        cfg = tiny(kind="diffsr", stop_at_return=-300.0, coupled=True, lr_rep=1e-3)
        save_config(tmp_path / "c.txt", cfg)
        back = load_config(tmp_path / "c.txt")
        assert back == cfg
        assert back.dumps() == cfg.dumps()

    def test_comments_and_overrides(self):
        cfg = loads_config("kind = scl  # learner\n\n# blank\nseed = 4\n", parse_overrides(["seed=9"]))
        assert cfg.kind == "scl" and cfg.seed == 9

    @pytest.mark.parametrize("text", ["colour = red\n", "seed = four\n", "kind = scl\nkind = td3\n",
                                      "coupled = maybe\n", "kind = sac\n", "discount = 1.0\n", "seed\n"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            loads_config(text)

    def test_group_divisibility(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(kind="ctrlsr", batch_size=100, n_negatives=31)

    def test_defaults_match_protocol(self):
        cfg = ExperimentConfig()
        assert (cfg.eval_interval, cfg.eval_episodes, cfg.action_repeat, cfg.discount, cfg.smoothing_window) == \
            (10_000, 10, 2, 0.99, 5)


class TestMetrics:
    def test_golden_csv(self):
        rows = [MetricsRow(10000, -1200.5, 30.25, {"critic": 1.5, "actor": -0.25}, 3.0, 7),
                MetricsRow(20000, -150.0, 0.0, {"critic": 0.1}, 6.0, 7)]
        assert metrics_csv(rows, ("critic", "actor")) == (
            "frame,return_mean,return_std,loss_critic,loss_actor,seed\n"
            "10000,-1200.5,30.25,1.5,-0.25,7\n"
            "20000,-150.0,0.0,0.1,nan,7\n")

    def test_frames_strictly_increasing(self):
        rows = [MetricsRow(10, 0.0, 0.0), MetricsRow(10, 0.0, 0.0)]
        with pytest.raises(ValueError):
            metrics_csv(rows, ())

    def test_smoothing_examples(self):
        np.testing.assert_array_equal(smooth([3.0] * 7, 5), [3.0] * 7)
        raw = [1.0, -2.0, 5.0]
        np.testing.assert_array_equal(smooth(raw, 1), raw)
        assert smooth([0, 0, 0, 0, 10], 5)[-1] == 2.0
        np.testing.assert_allclose(smooth([2.0, 4.0, 6.0], 2), [2.0, 3.0, 5.0])
        with pytest.raises(ValueError):
            smooth([1.0], 0)

    def test_empty_rows(self, tmp_path):
        s = emit_metrics([], 5, tmp_path / "m.csv", tmp_path / "s.json", ("critic",))
        assert (tmp_path / "m.csv").read_text() == "frame,return_mean,return_std,loss_critic,seed\n"
        assert s["final_smoothed_return"] is None
        assert json.loads((tmp_path / "s.json").read_text())["final_smoothed_return"] is None

    def test_summary(self):
        rows = [MetricsRow(i, float(v), 0.0) for i, v in enumerate([0, 0, 0, 0, 10], 1)]
        s = summary(rows, 5)
        assert s["final_smoothed_return"] == 2.0 and s["best_return"] == 10.0


class ZeroTorque:
    def act(self, obs, explore=False):
        return np.zeros(1)


class TestEvaluate:
    def test_zero_torque_from_down(self):
        env = ActionRepeat(PendulumEnv(init="down"), 2)
        mean, std, returns = evaluate(ZeroTorque(), env, 3)
        assert mean == pytest.approx(-200 * math.pi**2, rel=1e-9)
        assert std == 0.0 and returns.size == 3

    def test_single_episode(self):
        mean, std, returns = evaluate(ZeroTorque(), ActionRepeat(PendulumEnv(seed=2), 2), 1)
        assert mean == returns[0] and std == 0.0


class TestRunner:
    def test_frames_below_warmup(self, tmp_path):
        res = run_experiment(tiny(total_frames=50, warmup_frames=100), tmp_path)
        assert res.updates == 0 and res.rows == []
        assert (tmp_path / "metrics.csv").read_text() == "frame,return_mean,return_std,loss_critic,loss_actor,seed\n"

    def test_row_count(self, tmp_path):
        res = run_experiment(tiny(total_frames=1000, warmup_frames=0, eval_interval=100), tmp_path)
        assert [r.frame for r in res.rows] == list(range(100, 1001, 100))
        # one update per decision after warmup, two frames per decision
        assert res.updates == 500

    @pytest.mark.parametrize("kind", ["td3", "scl", "lvrep", "diffsr", "ctrlsr"])
    def test_deterministic(self, kind, tmp_path):
        cfg = tiny(kind=kind, total_frames=300)
        run_experiment(cfg, tmp_path / "a")
        run_experiment(cfg, tmp_path / "b")
        assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
        assert (tmp_path / "a" / "checkpoint.bin").read_bytes() == (tmp_path / "b" / "checkpoint.bin").read_bytes()

    def test_seed_changes_run(self, tmp_path):
        run_experiment(tiny(seed=0), tmp_path / "a")
        run_experiment(tiny(seed=1), tmp_path / "b")
        assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "b" / "metrics.csv").read_bytes()

    def test_stop_at_return(self):
        res = run_experiment(tiny(total_frames=1000, stop_at_return=-1e9))
        assert len(res.rows) == 1 and res.frames == 100

    @pytest.mark.parametrize("kind", ["td3", "scl", "ctrlsr"])
    def test_window_one_adapter_is_identical(self, kind, tmp_path):
        run_experiment(tiny(kind=kind, total_frames=300), tmp_path / "base")
        run_experiment(tiny(kind=kind, total_frames=300, window=1, window_adapter=True), tmp_path / "win")
        assert (tmp_path / "base" / "metrics.csv").read_bytes() == (tmp_path / "win" / "metrics.csv").read_bytes()
        a, _ = load_agent(tmp_path / "base" / "checkpoint.bin")
        b, _ = load_agent(tmp_path / "win" / "checkpoint.bin")
        sa, sb = a.state_arrays(), b.state_arrays()
        assert sa.keys() == sb.keys()
        assert all(sa[k].tobytes() == sb[k].tobytes() for k in sa)

    def test_windowed_run_widths(self, tmp_path):
        res = run_experiment(tiny(kind="scl", env="pendulum_hidden_velocity", window=2, total_frames=200),
                             tmp_path)
        assert res.agent.obs_dim == 2 * 2 + 1 and res.agent.rep_target_dim == 2 * 2

    def test_nan_halt(self, tmp_path, monkeypatch):
        def boom(self, batch):
            raise NonFiniteLoss("critic", self.n_updates, float("nan"))

        monkeypatch.setattr(SpectralAgent, "update", boom)
        res = run_experiment(tiny(), tmp_path)
        assert res.exit_code == EXIT_NONFINITE
        diag = json.loads((tmp_path / "halt.json").read_text())
        assert "critic" in diag["error"]

    def test_substreams(self):
        a = substream(3, "env").random(4)
        np.testing.assert_array_equal(a, substream(3, "env").random(4))
        assert not np.array_equal(a, substream(3, "buffer").random(4))
        assert substream_int(3, "env") != substream_int(4, "env")


class TestCli:
    @pytest.fixture
    def config_path(self, tmp_path):
        p = tmp_path / "c.txt"
        save_config(p, tiny(total_frames=200))
        return p

    def test_run_and_eval(self, config_path, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["run", "--config", str(config_path), "--out", str(out), "--quiet"]) == 0
        assert (out / "metrics.csv").exists()
        assert main(["eval", "--checkpoint", str(out / "checkpoint.bin"), "--episodes", "2"]) == 0
        res = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert len(res["returns"]) == 2

    def test_usage_errors(self, config_path, tmp_path):
        assert main(["run", "--config", str(config_path), "--override", "kind=sac"]) == 2
        assert main(["run", "--config", str(config_path), "--override", "env=cartpole"]) == 2
        assert main(["run", "--config", str(tmp_path / "missing.txt")]) == 2
        assert main(["oracle", "unknown"]) == 2
        assert main(["frobnicate"]) == 2
        assert main(["sweep", "--config", str(config_path), "--seeds", "3..1"]) == 2

    def test_nan_exit_code(self, config_path, tmp_path, monkeypatch):
        def boom(self, batch):
            raise NonFiniteLoss("actor", self.n_updates, float("inf"))

        monkeypatch.setattr(SpectralAgent, "update", boom)
        assert main(["run", "--config", str(config_path), "--out", str(tmp_path / "r"), "--quiet"]) == 3
        assert (tmp_path / "r" / "halt.json").exists()

    def test_sweep_and_report(self, config_path, tmp_path):
        pytest.importorskip("matplotlib")
        out = tmp_path / "sweep"
        assert main(["sweep", "--config", str(config_path), "--seeds", "0..1", "--out", str(out)]) == 0
        assert sorted(os.listdir(out)) == ["pendulum_td3_s0", "pendulum_td3_s1"]
        rep = tmp_path / "rep"
        assert main(["report", str(out), "--out", str(rep), "--threshold", "-300"]) == 0
        for name in ("returns.png", "losses.png"):
            assert (rep / name).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
        s = json.loads((rep / "summary.json").read_text())
        assert s["td3"]["seeds"] == [0, 1] and s["td3"]["n_reached"] in (0, 1, 2)

    def test_oracle(self):
        assert main(["oracle", "protocol"]) == 0

    def test_seed_range(self):
        assert parse_seed_range("0..4") == [0, 1, 2, 3, 4]
        assert parse_seed_range("2,5") == [2, 5]
        with pytest.raises(UsageError):
            parse_seed_range("a..b")
