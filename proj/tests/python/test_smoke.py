"""Smoke tests for the python bindings: import, basic math, a short training
run, and the experiment runner round-trip."""

import json

import pytest

import tsac


def test_correction_functions():
    assert tsac.correct(tsac.CorrectionFn.SP_DOMINATED, 0.4, 0.5) == pytest.approx(1.0)
    assert tsac.correct(tsac.CorrectionFn.SP_DOMINATED, 1.0, -0.9) == pytest.approx(1.0)
    assert tsac.correct(tsac.CorrectionFn.ACP_DOMINATED, 0.2, -1.0) == pytest.approx(-1.0)
    assert tsac.correct(tsac.CorrectionFn.EQUAL, 0.6, -0.6) == pytest.approx(0.0)
    # Softclip stays strictly inside the action bound.
    assert abs(tsac.correct(tsac.CorrectionFn.SOFTCLIP, 1.0, 1.0)) < 1.0


def test_builtin_suite():
    suite = tsac.CmdpSuite.builtin("mtpoint4")
    assert suite.num_tasks == 4
    assert suite.obs_dim == 6
    assert suite.action_bound == 1.0
    with pytest.raises(tsac.ConfigError):
        tsac.CmdpSuite.builtin("no-such-suite")


def test_trainer_short_run():
    suite = tsac.CmdpSuite.builtin("mtpoint4")
    config = json.dumps(
        {
            "trainer": {
                "hidden": [8],
                "batch_size": 16,
                "rollout_steps": 8,
                "updates_per_iteration": 2,
                "warmup_env_steps": 0,
            }
        }
    )
    trainer = tsac.Trainer(suite, config, seed=7)
    for _ in range(3):
        trainer.train_iteration()
    assert trainer.iteration == 3
    assert trainer.env_steps == 3 * 8 * suite.num_tasks
    result = trainer.evaluate(2, 123)
    assert 0.0 <= result.mean_success <= 1.0
    assert len(result.per_task_success) == suite.num_tasks
    actions = trainer.act([[0.0] * suite.obs_dim], deterministic=True)
    assert len(actions) == 1 and len(actions[0]) == 2
    assert all(-1.0 <= a <= 1.0 for a in actions[0])


def test_run_experiment(tmp_path):
    config = json.dumps(
        {
            "suite": "mtpoint4",
            "total_iterations": 2,
            "eval_interval": 1,
            "eval_episodes_per_task": 1,
            "out_dir": str(tmp_path / "run"),
            "trainer": {
                "hidden": [8],
                "batch_size": 16,
                "rollout_steps": 8,
                "updates_per_iteration": 1,
                "warmup_env_steps": 0,
            },
        }
    )
    lines = tsac.run_experiment(config)
    assert len(lines) >= 2
    record = json.loads(lines[-1])
    assert record["type"] == "metric"
    assert (tmp_path / "run" / "metrics.jsonl").exists()
    assert (tmp_path / "run" / "checkpoint.bin").exists()


def test_smooth():
    assert tsac.smooth([0.0, 1.0, 2.0, 3.0, 4.0], 3) == [0.0, 0.5, 1.0, 2.0, 3.0]
