import hashlib
import os
from pathlib import Path
from typing import Any, Iterable

from dotenv import load_dotenv
from pydantic import ValidationError

# Load .env FIRST before anything else
env_path = Path(__file__).resolve().parent.parent / ".env"
load_dotenv(env_path)

BASE_DIR = Path(__file__).resolve().parent.parent


class Settings:
    BASE_DIR: Path = BASE_DIR
    APP_NAME: str = "Wikidata Vandalism Detector"

    # Logging
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO").upper()
    LOG_FILE: str = os.getenv("LOG_FILE", "")

    # Parallelism default when neither --threads nor `threads =` is given
    DEFAULT_THREADS: int = int(os.getenv("DEFAULT_THREADS", "1"))

    # Reproducible-build timestamp for artifacts (seconds since epoch)
    SOURCE_DATE_EPOCH: str = os.getenv("SOURCE_DATE_EPOCH", "")


settings = Settings()


# ── pipeline config file ──────────────────────────────
#
# Flat `key = value` lines, dotted keys for sections, `#` comments.
#
#   seed = 7
#   data_paths = batches/b01.tsv, batches/b02.tsv
#   sample.negative_ratio = 2.5
#   learner.kind = gbt
#   learner.max_depth = 6
#   grid.gbt.max_depth = 4, 6

LIST_KEYS = {"data_paths", "select.kinds"}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    # local imports throughout: detector.utils pulls `settings` from this module
    from detector.utils.errors import InvalidConfig

    flat: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise InvalidConfig(f"{source}:{lineno}: expected `key = value`, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise InvalidConfig(f"{source}:{lineno}: empty key")
        flat[key] = value
    return flat


def _split_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def nest_config(flat: dict[str, str]) -> dict[str, Any]:
    """Turn dotted keys into nested dicts; grid axes and list keys become lists."""
    from detector.utils.errors import InvalidConfig

    nested: dict[str, Any] = {}
    for key, value in flat.items():
        parts = key.split(".")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise InvalidConfig(f"config key {key!r} collides with a scalar key")
            node = child
        if parts[0] == "grid" or key in LIST_KEYS:
            node[parts[-1]] = _split_list(value)
        else:
            node[parts[-1]] = value
    return nested


def load_pipeline_config(path: str | Path | None, overrides: Iterable[tuple[str, str]] = ()):
    """Read the config file (if any), apply CLI overrides, validate."""
    from detector.models.schemas import PipelineConfig
    from detector.utils.errors import InvalidConfig, MissingPath

    flat: dict[str, str] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise MissingPath(f"config file not found: {path}")
        flat = parse_config_text(path.read_text(encoding="utf-8"), source=str(path))

    for key, value in overrides:
        flat[key] = value

    try:
        cfg = PipelineConfig.model_validate(nest_config(flat))
    except ValidationError as exc:
        raise InvalidConfig(f"invalid pipeline config: {exc}") from exc
    # grid points are only built on demand; check them before any work starts
    for kind in cfg.grid:
        cfg.grid_for(kind)
    return cfg


def config_digest(cfg) -> str:
    # worker count and output location never change results
    canonical = cfg.model_dump_json(exclude={"threads", "output_dir"})
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
