"""Process-level settings for the segmentation lab."""

from pathlib import Path

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class HFUNetSettings(BaseSettings):
    """Runtime settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
        env_prefix="HFUNET_",
    )

    # Phantom cache root (HFUNET_CACHE_DIR)
    cache_dir: Path = Path.home() / ".cache" / "hfunet"

    # Logging
    log_file: str | None = None
    log_level: str = "INFO"

    # Compute
    device: str = "cpu"
    num_threads: int = 0  # 0 keeps the torch default
    max_sweep_workers: int = 1  # 0 runs sweep cells in-process

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level names."""
        valid_levels = {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}
        level = v.strip().upper()
        if level not in valid_levels:
            msg = f"Invalid log level '{v}'. Must be one of: {', '.join(sorted(valid_levels))}"
            raise ValueError(msg)
        return level

    @field_validator("device")
    @classmethod
    def validate_device(cls, v: str) -> str:
        """Validate torch device strings."""
        if not (v == "cpu" or v.startswith("cuda") or v == "mps"):
            msg = "Device must be 'cpu', 'mps' or a 'cuda[:N]' device"
            raise ValueError(msg)
        return v

    @field_validator("num_threads", "max_sweep_workers")
    @classmethod
    def validate_non_negative(cls, v: int) -> int:
        """Validate worker and thread counts."""
        if v < 0:
            msg = "Thread and worker counts must be non-negative"
            raise ValueError(msg)
        return v

    def phantom_cache_dir(self) -> Path:
        """Get the directory holding cached phantom cohorts.

        Returns:
            Path below the cache root, created if missing
        """
        path = self.cache_dir / "phantoms"
        path.mkdir(parents=True, exist_ok=True)
        return path


# Global settings instance
settings = HFUNetSettings()
