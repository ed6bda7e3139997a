from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

DEFAULT_ORDER_CAP = 12
DEFAULT_GCD_THRESHOLD = 512
OUTPUT_FORMATS = ("text", "json", "latex")


@dataclass(frozen=True)
class Config:
    order_cap: int = DEFAULT_ORDER_CAP
    gcd_threshold: int = DEFAULT_GCD_THRESHOLD
    log_level: str = "INFO"
    output_format: str = "text"
    jobs: int = 1
    full_residual: bool = False
    residual_terms: int = 20
    fixtures_dir: Path | None = None

    def __post_init__(self):
        if self.order_cap < 1:
            raise ValueError(f"order_cap must be positive, got {self.order_cap}")
        if self.gcd_threshold < 1:
            raise ValueError(f"gcd_threshold must be positive, got {self.gcd_threshold}")
        if self.output_format not in OUTPUT_FORMATS:
            raise ValueError(f"output_format must be one of {', '.join(OUTPUT_FORMATS)}, got {self.output_format}")
        if self.jobs < 1:
            raise ValueError(f"jobs must be positive, got {self.jobs}")


_active: ContextVar[Config] = ContextVar("eulerncl_config", default=Config())


def active_config() -> Config:
    """Return the configuration in effect for the current task."""
    return _active.get()


@contextmanager
def configured(config: Config) -> Iterator[Config]:
    """Run a block with `config` as the active configuration.

    The value lives in a context variable, so concurrent scenario workers each
    see the configuration of the context they were started from.
    """
    token = _active.set(config)
    try:
        yield config
    finally:
        _active.reset(token)
