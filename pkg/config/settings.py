"""
Configuration settings for the intent detection toolkit.
"""
from pathlib import Path
from typing import Optional

from pydantic import AliasChoices, Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables
try:
    from dotenv import load_dotenv
    load_dotenv()
except ImportError:
    # Fallback if python-dotenv is not available
    pass


class LoggingConfig(BaseSettings):
    """Logging configuration settings."""
    model_config = SettingsConfigDict(env_prefix="MLMCID_LOG_", extra="ignore")

    level: str = Field(default="INFO")
    format: str = Field(default="text")
    file: Optional[str] = Field(default=None)
    rotation: str = Field(default="10 MB")
    retention: str = Field(default="30 days")


class GeneralConfig(BaseSettings):
    """General configuration settings."""
    model_config = SettingsConfigDict(extra="ignore")

    seed: int = Field(default=0, validation_alias=AliasChoices("MLMCID_SEED"))
    output_dir: str = Field(default="runs", validation_alias=AliasChoices("MLMCID_OUTPUT_DIR"))
    device: str = Field(default="cpu", validation_alias=AliasChoices("MLMCID_DEVICE"))
    project_root: Path = Field(default_factory=lambda: Path(__file__).parent.parent)


class Settings:
    """Main settings class combining all configuration sections."""

    def __init__(self):
        self.logging = LoggingConfig()
        self.general = GeneralConfig()

    def get_project_root(self) -> Path:
        """Get the project root directory."""
        return self.general.project_root

    def get_data_dir(self) -> Path:
        """Directory holding bundled taxonomies and toy pools."""
        return self.general.project_root / "data"

    def get_output_dir(self) -> Path:
        """Get the run output directory."""
        output_dir = Path(self.general.output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        return output_dir

    def reload(self) -> "Settings":
        """Re-read the environment (used after tests patch env vars)."""
        self.logging = LoggingConfig()
        self.general = GeneralConfig()
        return self


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get the global settings instance."""
    return settings
