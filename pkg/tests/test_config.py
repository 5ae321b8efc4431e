import os
import sys
from dataclasses import replace

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from src.bench.config import (  # noqa: E402
    DenoiserSpec,
    ExperimentConfig,
    ExperimentSpec,
    ProblemSpec,
    SolverSpec,
    default_config,
    default_output_dir,
    emit_config,
    load_config,
    parse_config,
    save_config,
    validate_config,
)
from src.core.errors import ConfigError  # noqa: E402

DEFAULT_CFG = os.path.join(
    os.path.dirname(__file__), "..", "resources", "configs", "default.cfg"
)


def test_shipped_default_config_matches_default():
    assert load_config(DEFAULT_CFG) == default_config()


def test_default_config_values():
    config = default_config()
    assert config.problem.shape == (256,)
    assert (config.problem.m, config.problem.k) == (128, 50)
    assert config.experiment.budgets == (10.0, 30.0)
    assert config.experiment.algorithms == ("ista", "fista", "sgd", "admm")
    assert len(config.experiment.seeds) == 5
    assert config.solver.minibatch_b == 5
    assert config.output_dir == default_output_dir()


def test_round_trip():
    configs = [
        default_config(),
        ExperimentConfig(),
        ExperimentConfig(
            problem=ProblemSpec(model="blur", shape=(16, 12), k=4, phantom="checker_image"),
            denoiser=DenoiserSpec(variant="gaussian_smooth", sigma=0.7),
            solver=SolverSpec(gamma=0.125, step_rule="lipschitz", minibatch_b=2, admm_rho=3.0),
            experiment=ExperimentSpec(
                algorithms=("sgd",),
                budgets=(2.5,),
                seeds=(0, 2**64 - 1),
                output_dir="/tmp/pnp runs",
                record_timing=True,
                fixed_point_tol=1e-6,
                fixed_point_max_iters=10,
            ),
        ),
    ]
    for config in configs:
        assert parse_config(emit_config(config)) == config


def test_save_and_load(tmp_path):
    path = str(tmp_path / "experiment.cfg")
    config = replace(default_config(), solver=SolverSpec(max_iters=7))
    save_config(path, config)
    assert load_config(path) == config


def test_absent_keys_keep_defaults():
    config = parse_config("# only one key\n\nsolver.max_iters = 20\n")
    assert config.solver.max_iters == 20
    assert config.problem == ProblemSpec()


def test_comments_and_whitespace():
    config = parse_config("   # indented comment\n  problem.k   =   10  \n")
    assert config.problem.k == 10


@pytest.mark.parametrize(
    "text,line",
    [
        ("problem.k = 10\nproblem.k = 11\n", 2),
        ("\n\nproblem.colour = red\n", 3),
        ("lens.k = 1\n", 1),
        ("problem.k 10\n", 1),
        ("k = 10\n", 1),
        ("problem.k = ten\n", 1),
        ("experiment.budgets = 10, , 30\n", 1),
        ("experiment.record_timing = maybe\n", 1),
        ("problem.noise_sigma = nan\n", 1),
    ],
)
def test_grammar_errors_carry_line_numbers(text, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.line == line
    assert f"line {line}" in str(info.value)


def test_keys_are_case_sensitive():
    with pytest.raises(ConfigError):
        parse_config("Problem.k = 10\n")
    with pytest.raises(ConfigError):
        parse_config("problem.K = 10\n")


@pytest.mark.parametrize(
    "text",
    [
        "experiment.algorithms =\n",
        "experiment.algorithms = ista, newton\n",
        "experiment.algorithms = ista, ista\n",
        "experiment.budgets = 0\n",
        "experiment.budgets =\n",
        "experiment.seeds =\n",
        "experiment.seeds = 1, 1\n",
        "experiment.seeds = -1\n",
        "problem.model = mri\n",
        "problem.phantom = clouds\n",
        "problem.k = 200\n",
        "problem.shape = 16x16\n",
        "problem.model = blur\n",
        "problem.model = blur\nproblem.shape = 16x16\nproblem.kernel_size = 4\n",
        "problem.model = blur\nproblem.shape = 16x16\nproblem.k = 20\n",
        "denoiser.variant = bm3d\n",
        "denoiser.sigma = 0.1\ndenoiser.lam = 0.1\n",
        "denoiser.transform = dct\n",
        "denoiser.variant = gaussian_smooth\n",
        "solver.step_rule = newton\n",
        "solver.minibatch_b = 51\n",
        "solver.max_iters = 0\n",
        "solver.gamma = -1\n",
        "experiment.fixed_point_tol = 0\n",
    ],
)
def test_validation_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_validate_config_direct():
    assert validate_config(default_config()) == default_config()
    bad = replace(default_config(), experiment=ExperimentSpec(algorithms=()))
    with pytest.raises(ConfigError):
        validate_config(bad)


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.cfg"))


if __name__ == "__main__":
    pytest.main()
