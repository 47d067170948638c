import os
from typing import Optional

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    """Application settings."""

    model_config = SettingsConfigDict(
        env_prefix="VCHGCL_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # Application settings
    APP_NAME: str = "vchgcl"
    APP_VERSION: str = "0.1.0"
    LOG_LEVEL: str = "INFO"

    # Overrides ModelConfig.seed and SynthSpec.seed when set
    SEED: Optional[int] = None

    # Filesystem settings
    DATA_DIR: str = os.path.join(".", "data")
    OUTPUT_DIR: str = os.path.join(".", "runs")

    # Training defaults
    DEFAULT_EPOCHS: int = 20
    DEFAULT_LR: float = 1e-2

    # Gradient check defaults
    GRADCHECK_STEP: float = 1e-5
    GRADCHECK_TOLERANCE: float = 1e-4


# Create settings instance
settings = Settings()
