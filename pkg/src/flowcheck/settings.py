from pathlib import Path
from typing import Literal

from pydantic import Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict
from typing_extensions import Self

from flowcheck.logging import setup_logging

DEFAULT_CACHE_DIR = Path("~/.flowcheck/typings").expanduser()


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="FLOWCHECK_",
        env_file=".env",
        extra="ignore",
    )
    fuel: int = Field(
        default=10_000, gt=0, description="Step budget for every explored run"
    )
    mode: Literal["syntactic", "exact"] = Field(
        default="syntactic", description="Coarseness check used by `check`"
    )
    default_domain: list[int] = Field(
        default=[0, 1],
        min_length=1,
        description="Values a variable ranges over unless a universe says otherwise",
    )
    cache_dir: Path = Field(
        default=DEFAULT_CACHE_DIR, description="Directory of cached typings"
    )
    attacker_alphabet: list[int] = Field(
        default=[0, 1, 2], description="Output values enumerated attackers read"
    )
    max_attacker_states: int = Field(
        default=2, ge=1, description="Largest enumerated attacker automaton"
    )
    output_format: Literal["json", "text"] = Field(
        default="json", description="Default CLI output format"
    )

    log_level: str = Field(default="WARNING", description="Logging level")

    # Development
    debug: bool = Field(default=False, description="Enable debug mode")

    @model_validator(mode="after")
    def ensure_logging_setup(self: Self) -> Self:
        level = "DEBUG" if self.debug else self.log_level
        setup_logging(level=level, show_path=self.debug)
        return self

    @model_validator(mode="after")
    def log_settings(self: Self) -> Self:
        from flowcheck.logging import get_logger

        logger = get_logger(__name__)
        logger.debug(f"Settings: {self.model_dump_json(indent=2)}")
        return self


settings = Settings()
