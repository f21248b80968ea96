"""Experiment file parsing with every issue reported in one pass, and TOML serialization."""

import re
import tomllib
from pathlib import Path

import tomli_w
from pydantic import BaseModel, ValidationError

from hfunet.errors import ConfigError, ConfigIssue
from hfunet.logging_config import get_logger
from hfunet.models.experiment import ExperimentConfig

logger = get_logger(__name__)

_TABLE_HEADER = re.compile(r"^\s*\[\s*([^\]\[]+?)\s*\]\s*(#.*)?$")
_KEY_LINE = re.compile(r"^\s*([A-Za-z0-9_\-.\"']+)\s*=")
_DECODE_POSITION = re.compile(r"line (\d+)")


def _strip_quotes(part: str) -> str:
    return part.strip().strip("\"'")


def key_lines(text: str) -> dict[tuple[str, ...], int]:
    """Map dotted key paths and table headers to their first 1-based line."""
    index: dict[tuple[str, ...], int] = {}
    table: list[str] = []
    for number, line in enumerate(text.splitlines(), start=1):
        if header := _TABLE_HEADER.match(line):
            table = [_strip_quotes(p) for p in header.group(1).split(".")]
            index.setdefault(tuple(table), number)
            continue
        if key := _KEY_LINE.match(line):
            path = (*table, *(_strip_quotes(p) for p in key.group(1).split(".")))
            index.setdefault(path, number)
    return index


def locate(index: dict[tuple[str, ...], int], loc: tuple[int | str, ...]) -> int | None:
    """Line of the longest prefix of a validation location present in the file."""
    parts = tuple(str(p) for p in loc if not isinstance(p, int))
    for end in range(len(parts), 0, -1):
        if parts[:end] in index:
            return index[parts[:end]]
    return None


def parse_model_text[M: BaseModel](text: str, model: type[M], source: str = "<string>") -> M:
    """Parse TOML and validate it against a pydantic model.

    Args:
        text: File content
        model: Model the top-level table must satisfy
        source: Name used in log lines

    Returns:
        Validated model with defaults filled in

    Raises:
        ConfigError: With every syntax or validation issue found
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        match = _DECODE_POSITION.search(str(e))
        line = int(match.group(1)) if match else None
        raise ConfigError([ConfigIssue(line=line, location="<syntax>", message=str(e))])

    try:
        return model.model_validate(raw)
    except ValidationError as e:
        index = key_lines(text)
        issues = [
            ConfigIssue(
                line=locate(index, tuple(error["loc"])),
                location=".".join(str(p) for p in error["loc"]) or "<root>",
                message=error["msg"],
            )
            for error in e.errors()
        ]
        logger.warning("Invalid config", source=source, model=model.__name__, issues=len(issues))
        raise ConfigError(issues)


def _read_text(path: str | Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError([ConfigIssue(line=None, location=str(path), message=f"cannot read file: {e}")])


def read_model_file[M: BaseModel](path: str | Path, model: type[M]) -> M:
    """Read a TOML file and validate it against a pydantic model.

    Raises:
        ConfigError: If the file is unreadable or invalid
    """
    return parse_model_text(_read_text(path), model, source=str(path))


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse and validate experiment TOML.

    Raises:
        ConfigError: With every syntax or validation issue found
    """
    return parse_model_text(text, ExperimentConfig, source)


def parse_config(path: str | Path) -> ExperimentConfig:
    """Read and validate an experiment file.

    Raises:
        ConfigError: If the file is unreadable or invalid
    """
    cfg = parse_config_text(_read_text(path), source=str(path))
    logger.info(
        "Loaded experiment config",
        source=str(path),
        topologies=cfg.topology.cardinality,
        cells=len(cfg.cells()),
    )
    return cfg


def serialize_config(cfg: BaseModel) -> str:
    """Render a configuration as TOML that parses back to an equal configuration."""
    return tomli_w.dumps(cfg.model_dump(mode="json", exclude_none=True))


def write_config(cfg: BaseModel, path: str | Path) -> Path:
    """Write a configuration snapshot.

    Returns:
        The written path
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(serialize_config(cfg), encoding="utf-8")
    return target
