"""
Configuration loading: global settings, experiment configs and environment.

YAML is parsed with PyYAML and validated with pydantic; validation failures are
reported with the line number of the offending key.
"""
import logging
import os
from pathlib import Path
from typing import Any, Optional, Sequence, Tuple, Type, TypeVar

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError

from mcflow.shared.errors import ConfigError
from mcflow.shared.models import ExperimentConfig, GlobalSettings

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS_PATH = Path('config') / 'config.yaml'
DEFAULT_ENV_PATH = Path('config') / '.env'

ModelT = TypeVar('ModelT', bound=BaseModel)


def load_environment(env_path: Optional[Path] = None) -> None:
    """Load config/.env when it exists; existing variables are not overridden."""
    path = Path(env_path or DEFAULT_ENV_PATH)
    if path.exists():
        load_dotenv(path)
        logger.debug(f"Loaded environment from {path}")


def _line_of(node: Optional[yaml.Node], loc: Sequence[Any]) -> int:
    """Walk a composed YAML node tree along a pydantic error location."""
    if node is None:
        return 1
    line = node.start_mark.line + 1
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                if key_node.value == str(key):
                    line = key_node.start_mark.line + 1
                    node = value_node
                    break
            else:
                return line
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            return line
    return line


def _read_yaml(path: Path) -> Tuple[Any, Optional[yaml.Node]]:
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e}") from e

    try:
        node = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, 'problem_mark', None)
        line = mark.line + 1 if mark is not None else 1
        problem = getattr(e, 'problem', None) or str(e)
        raise ConfigError(f"{path}:{line}: {problem}") from e
    return data, node


def _validate(model: Type[ModelT], data: Any, node: Optional[yaml.Node], path: Path) -> ModelT:
    try:
        return model.model_validate(data if data is not None else {})
    except ValidationError as e:
        messages = []
        for error in e.errors():
            loc = [part for part in error['loc'] if not isinstance(part, str) or not part.startswith('function-')]
            where = '.'.join(str(part) for part in loc) or '<root>'
            messages.append(f"{path}:{_line_of(node, loc)}: {where}: {error['msg']}")
        raise ConfigError('\n'.join(messages)) from e


def load_experiment_config(path: Path) -> ExperimentConfig:
    """
    Load and validate an experiment config.

    Args:
        path: YAML file

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: unreadable file, YAML syntax error or schema violation
    """
    path = Path(path)
    data, node = _read_yaml(path)
    config = _validate(ExperimentConfig, data, node, path)
    logger.info(f"Loaded {config.experiment} config from {path}")
    return config


def load_global_settings(path: Optional[Path] = None) -> GlobalSettings:
    """Load config/config.yaml; defaults apply when the file is absent."""
    path = Path(path or DEFAULT_SETTINGS_PATH)
    if not path.exists():
        return GlobalSettings()
    data, node = _read_yaml(path)
    return _validate(GlobalSettings, data, node, path)


def resolve_output_dir(config: ExperimentConfig, cli_out: Optional[str] = None) -> Path:
    """--out wins over MCFLOW_OUTPUT_DIR, which wins over the config key."""
    if cli_out:
        return Path(cli_out)
    env_out = os.getenv('MCFLOW_OUTPUT_DIR')
    if env_out:
        return Path(env_out)
    return Path(config.output_dir)
