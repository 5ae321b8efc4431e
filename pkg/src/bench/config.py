"""
Experiment configuration files.

A config is UTF-8 text of ``section.key = value`` lines. Blank lines and lines
starting with ``#`` are ignored, keys are case-sensitive, and an unknown or
repeated key is an error. Lists are comma separated; ``auto`` and ``none``
stand for unset optional values. See docs/SPEC_CONFIG.md for every key.
"""

import math
import os
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import appdirs

from ..core.denoisers import DENOISER_VARIANTS
from ..core.errors import ConfigError
from ..core.solvers import STEP_RULES, Algorithm
from ..core.transforms import TRANSFORMS
from ..utils.file_utils import atomic_write_text
from ..utils.rng import SEED_LIMIT
from .phantoms import PHANTOM_KINDS, format_shape, parse_shape

MODEL_KINDS = ("gaussian_cs", "blur")

APP_NAME = "PnPKit"


def default_output_dir() -> str:
    return os.path.join(appdirs.user_data_dir(APP_NAME), "runs")


@dataclass(frozen=True)
class ProblemSpec:
    model: str = "gaussian_cs"
    shape: Tuple[int, ...] = (256,)
    m: int = 128
    k: int = 50
    noise_sigma: float = 0.01
    phantom: str = "sparse_spikes"
    sparsity: float = 0.05
    blocks: int = 8
    kernel_size: int = 5
    kernel_sigma: float = 1.0

    @property
    def n(self) -> int:
        return math.prod(self.shape)


@dataclass(frozen=True)
class DenoiserSpec:
    """Denoiser strength is either sigma directly or lam, with sigma = gamma * lam."""

    variant: str = "soft_threshold"
    transform: str = "identity"
    sigma: Optional[float] = None
    lam: Optional[float] = None


@dataclass(frozen=True)
class SolverSpec:
    gamma: Optional[float] = None
    step_rule: str = "lipschitz"
    minibatch_b: int = 5
    max_iters: int = 1000
    admm_rho: Optional[float] = None


@dataclass(frozen=True)
class ExperimentSpec:
    algorithms: Tuple[str, ...] = ("ista", "fista", "sgd", "admm")
    budgets: Tuple[float, ...] = (10.0, 30.0)
    seeds: Tuple[int, ...] = (1, 2, 3, 4, 5)
    output_dir: Optional[str] = None
    record_timing: bool = False
    fixed_point_tol: float = 1e-8
    fixed_point_max_iters: int = 100000


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    denoiser: DenoiserSpec = field(default_factory=DenoiserSpec)
    solver: SolverSpec = field(default_factory=SolverSpec)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)

    @property
    def output_dir(self) -> str:
        return self.experiment.output_dir or default_output_dir()


def default_config() -> ExperimentConfig:
    """The shipped default experiment (resources/configs/default.cfg).

    Every algorithm shares the minibatch step so PnP-SGD with b=5 is stable,
    and the denoiser is the prox of lam * ||x||_1.
    """
    return ExperimentConfig(
        denoiser=DenoiserSpec(variant="soft_threshold", lam=0.02),
        solver=SolverSpec(step_rule="minibatch", minibatch_b=5, max_iters=1000),
    )


# Value codecs


def _parse_int(text: str) -> int:
    return int(text)


def _parse_float(text: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"'{text}' is not a finite number")
    return value


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1"):
        return True
    if lowered in ("false", "no", "0"):
        return False
    raise ValueError(f"'{text}' is not a boolean")


def _optional(parse: Callable[[str], Any], keyword: str) -> Callable[[str], Any]:
    def parse_optional(text: str) -> Any:
        if text.lower() == keyword:
            return None
        return parse(text)

    return parse_optional


def _parse_list(parse: Callable[[str], Any]) -> Callable[[str], Tuple[Any, ...]]:
    def parse_items(text: str) -> Tuple[Any, ...]:
        items = [item.strip() for item in text.split(",")]
        if items == [""]:
            return ()
        if any(item == "" for item in items):
            raise ValueError(f"empty item in list '{text}'")
        return tuple(parse(item) for item in items)

    return parse_items


def _emit_optional(keyword: str) -> Callable[[Any], str]:
    return lambda value: keyword if value is None else repr(value)


def _emit_list(value: Tuple[Any, ...]) -> str:
    return ", ".join(str(item) if isinstance(item, str) else repr(item) for item in value)


# (parser, emitter) per section and key; order here is the canonical emit order.
_KEYS: Dict[str, Dict[str, Tuple[Callable[[str], Any], Callable[[Any], str]]]] = {
    "problem": {
        "model": (str, str),
        "shape": (parse_shape, format_shape),
        "m": (_parse_int, str),
        "k": (_parse_int, str),
        "noise_sigma": (_parse_float, repr),
        "phantom": (str, str),
        "sparsity": (_parse_float, repr),
        "blocks": (_parse_int, str),
        "kernel_size": (_parse_int, str),
        "kernel_sigma": (_parse_float, repr),
    },
    "denoiser": {
        "variant": (str, str),
        "transform": (str, str),
        "sigma": (_optional(_parse_float, "none"), _emit_optional("none")),
        "lam": (_optional(_parse_float, "none"), _emit_optional("none")),
    },
    "solver": {
        "gamma": (_optional(_parse_float, "auto"), _emit_optional("auto")),
        "step_rule": (str, str),
        "minibatch_b": (_parse_int, str),
        "max_iters": (_parse_int, str),
        "admm_rho": (_optional(_parse_float, "auto"), _emit_optional("auto")),
    },
    "experiment": {
        "algorithms": (_parse_list(str), _emit_list),
        "budgets": (_parse_list(_parse_float), _emit_list),
        "seeds": (_parse_list(_parse_int), _emit_list),
        "output_dir": (_optional(str, "auto"), lambda v: "auto" if v is None else v),
        "record_timing": (_parse_bool, lambda v: "true" if v else "false"),
        "fixed_point_tol": (_parse_float, repr),
        "fixed_point_max_iters": (_parse_int, str),
    },
}

_SECTION_TYPES = {
    "problem": ProblemSpec,
    "denoiser": DenoiserSpec,
    "solver": SolverSpec,
    "experiment": ExperimentSpec,
}


def parse_config(content: str) -> ExperimentConfig:
    """
    Parses config text into an ExperimentConfig.

    Keys that are absent keep their dataclass defaults.

    Args:
        content: Config text, one `section.key = value` per line.

    Returns:
        The validated config.

    Raises:
        ConfigError: On grammar errors (with the line number) and on values
            that fail validation.
    """
    values: Dict[str, Dict[str, Any]] = {section: {} for section in _KEYS}
    for line_number, raw in enumerate(content.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'section.key = value', got '{line}'", line_number)
        name, value = (part.strip() for part in line.split("=", 1))
        if "." not in name:
            raise ConfigError(f"key '{name}' has no section", line_number)
        section, key = name.split(".", 1)
        if section not in _KEYS:
            raise ConfigError(f"unknown section '{section}'", line_number)
        if key not in _KEYS[section]:
            raise ConfigError(f"unknown key '{name}'", line_number)
        if key in values[section]:
            raise ConfigError(f"duplicate key '{name}'", line_number)
        parse, _ = _KEYS[section][key]
        try:
            values[section][key] = parse(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid value for '{name}': {e}", line_number) from e

    config = ExperimentConfig(
        **{section: _SECTION_TYPES[section](**values[section]) for section in _KEYS}
    )
    validate_config(config)
    return config


def emit_config(config: ExperimentConfig) -> str:
    """Canonical text for a config: every key, in a fixed order."""
    lines: List[str] = []
    for section, keys in _KEYS.items():
        spec = getattr(config, section)
        lines.append(f"# {section}")
        for key, (_, emit) in keys.items():
            lines.append(f"{section}.{key} = {emit(getattr(spec, key))}")
        lines.append("")
    return "\n".join(lines)


def load_config(path: str) -> ExperimentConfig:
    """
    Reads and parses a config file.

    Args:
        path: Path to a UTF-8 config file.

    Returns:
        The validated config.

    Raises:
        ConfigError: If the file cannot be read or does not parse and validate.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            content = f.read()
    except UnicodeDecodeError as e:
        raise ConfigError(f"{path} is not valid UTF-8: {e}") from e
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(content)


def save_config(path: str, config: ExperimentConfig) -> None:
    """Write the canonical form of config to path atomically."""
    atomic_write_text(path, emit_config(config))


def _fail(message: str) -> None:
    raise ConfigError(message)


def _validate_problem(problem: ProblemSpec) -> None:
    if problem.model not in MODEL_KINDS:
        _fail(f"problem.model must be one of {MODEL_KINDS}, got '{problem.model}'")
    if problem.phantom not in PHANTOM_KINDS:
        _fail(f"problem.phantom must be one of {PHANTOM_KINDS}, got '{problem.phantom}'")
    if len(problem.shape) not in (1, 2) or any(s < 1 for s in problem.shape):
        _fail(f"problem.shape must be N or HxW, got {problem.shape}")
    if problem.k < 1:
        _fail(f"problem.k must be >= 1, got {problem.k}")
    if problem.noise_sigma < 0:
        _fail(f"problem.noise_sigma must be >= 0, got {problem.noise_sigma}")
    if not 0.0 < problem.sparsity <= 1.0:
        _fail(f"problem.sparsity must be in (0, 1], got {problem.sparsity}")
    if problem.blocks < 1:
        _fail(f"problem.blocks must be >= 1, got {problem.blocks}")
    if problem.phantom == "checker_image" and len(problem.shape) != 2:
        _fail("problem.phantom = checker_image needs a HxW shape")
    if problem.phantom == "piecewise_blocks" and problem.blocks > min(problem.shape):
        _fail(f"problem.blocks = {problem.blocks} does not fit shape {problem.shape}")

    if problem.model == "gaussian_cs":
        if len(problem.shape) != 1:
            _fail("problem.model = gaussian_cs needs a flat shape N")
        if problem.m < 1:
            _fail(f"problem.m must be >= 1, got {problem.m}")
        if problem.k > problem.m:
            _fail(f"problem.k = {problem.k} exceeds problem.m = {problem.m}")
    else:
        if len(problem.shape) != 2:
            _fail("problem.model = blur needs a HxW shape")
        if problem.k > problem.shape[0]:
            _fail(f"problem.k = {problem.k} exceeds the image height {problem.shape[0]}")
        if problem.kernel_size < 1 or problem.kernel_size % 2 == 0:
            _fail(f"problem.kernel_size must be odd and >= 1, got {problem.kernel_size}")
        if problem.kernel_size > min(problem.shape):
            _fail(f"problem.kernel_size = {problem.kernel_size} exceeds the image")
        if problem.kernel_sigma <= 0:
            _fail(f"problem.kernel_sigma must be > 0, got {problem.kernel_sigma}")


def _validate_denoiser(denoiser: DenoiserSpec, problem: ProblemSpec) -> None:
    if denoiser.variant not in DENOISER_VARIANTS:
        _fail(f"denoiser.variant must be one of {DENOISER_VARIANTS}, got '{denoiser.variant}'")
    if denoiser.transform not in TRANSFORMS:
        _fail(f"denoiser.transform must be one of {TRANSFORMS}, got '{denoiser.transform}'")
    if denoiser.sigma is not None and denoiser.lam is not None:
        _fail("set only one of denoiser.sigma and denoiser.lam")
    for name in ("sigma", "lam"):
        value = getattr(denoiser, name)
        if value is not None and value < 0:
            _fail(f"denoiser.{name} must be >= 0, got {value}")
    needs_grid = denoiser.variant == "gaussian_smooth" or (
        denoiser.variant == "soft_threshold" and denoiser.transform == "dct"
    )
    if needs_grid and len(problem.shape) != 2:
        _fail(f"denoiser {denoiser.variant}/{denoiser.transform} needs a HxW shape")


def _validate_solver(solver: SolverSpec, problem: ProblemSpec) -> None:
    if solver.gamma is not None and solver.gamma <= 0:
        _fail(f"solver.gamma must be > 0, got {solver.gamma}")
    if solver.step_rule not in STEP_RULES:
        _fail(f"solver.step_rule must be one of {STEP_RULES}, got '{solver.step_rule}'")
    if not 1 <= solver.minibatch_b <= problem.k:
        _fail(f"solver.minibatch_b must be in [1, {problem.k}], got {solver.minibatch_b}")
    if solver.max_iters < 1:
        _fail(f"solver.max_iters must be >= 1, got {solver.max_iters}")
    if solver.admm_rho is not None and solver.admm_rho <= 0:
        _fail(f"solver.admm_rho must be > 0, got {solver.admm_rho}")


def _validate_experiment(experiment: ExperimentSpec) -> None:
    if not experiment.algorithms:
        _fail("experiment.algorithms must name at least one algorithm")
    for name in experiment.algorithms:
        try:
            Algorithm.parse(name)
        except ValueError as e:
            _fail(f"experiment.algorithms: {e}")
    if len(set(experiment.algorithms)) != len(experiment.algorithms):
        _fail("experiment.algorithms contains duplicates")
    if not experiment.budgets:
        _fail("experiment.budgets must list at least one budget")
    if any(b <= 0 for b in experiment.budgets):
        _fail(f"experiment.budgets must be > 0, got {experiment.budgets}")
    if len(set(experiment.budgets)) != len(experiment.budgets):
        _fail("experiment.budgets contains duplicates")
    if not experiment.seeds:
        _fail("experiment.seeds must list at least one seed")
    if any(not 0 <= s < SEED_LIMIT for s in experiment.seeds):
        _fail(f"experiment.seeds must be in [0, 2**64), got {experiment.seeds}")
    if len(set(experiment.seeds)) != len(experiment.seeds):
        _fail("experiment.seeds contains duplicates")
    if experiment.output_dir is not None and not experiment.output_dir.strip():
        _fail("experiment.output_dir is empty")
    if experiment.fixed_point_tol <= 0:
        _fail(f"experiment.fixed_point_tol must be > 0, got {experiment.fixed_point_tol}")
    if experiment.fixed_point_max_iters < 1:
        _fail("experiment.fixed_point_max_iters must be >= 1")


def validate_config(config: ExperimentConfig) -> ExperimentConfig:
    """Check every cross-field constraint; raises ConfigError on the first failure."""
    _validate_problem(config.problem)
    _validate_denoiser(config.denoiser, config.problem)
    _validate_solver(config.solver, config.problem)
    _validate_experiment(config.experiment)
    return config


def with_output_dir(config: ExperimentConfig, output_dir: str) -> ExperimentConfig:
    """Copy of config with experiment.output_dir replaced."""
    return replace(config, experiment=replace(config.experiment, output_dir=output_dir))
