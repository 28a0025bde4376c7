"""
Core configuration for crysdr.

Settings come from environment variables (or a .env file) and are
validated with pydantic. Per-run parameters live in
``crysdr.schemas.reports.RunConfig``; the values here are defaults and
process-wide guards.
"""

from pydantic import AliasChoices, Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    # Application Configuration
    APP_NAME: str = Field(default="crysdr", description="Application name")
    APP_VERSION: str = Field(default="0.3.0", description="Application version")
    DEBUG: bool = Field(default=False, description="Debug mode (console log renderer)")
    LOG_LEVEL: str = Field(default="WARNING", description="Logging level")

    # Precision defaults
    DEFAULT_P: int = Field(default=2, description="Default residue characteristic")
    DEFAULT_N: int = Field(default=2, description="Default p-adic precision exponent")
    DEFAULT_K: int = Field(default=2, description="Default root depth of the O-model")
    DEFAULT_PD_CAP: int = Field(default=6, description="Default pd-weight cap m")
    DEFAULT_DEGREE_CAP: int = Field(default=8, description="Default polynomial degree cap D")
    DEFAULT_SMAX: int = Field(default=3, description="Default simplicial truncation level")

    # Guards
    MEMORY_GUARD: int = Field(
        default=200_000,
        validation_alias=AliasChoices("CRYSDR_MEMORY_GUARD", "MEMORY_GUARD"),
        description="Maximum number of basis elements in a truncated total complex",
    )

    # Randomized suites
    DEFAULT_SEED: int = Field(default=20240101, description="Seed for property suites")
    PROPERTY_CASES: int = Field(default=500, description="Cases per randomized property check")

    # Cache Configuration
    WITT_CACHE_SIZE: int = Field(
        default=64,
        description="Number of (p, n) universal Witt polynomial tables kept in memory",
    )

    # Reports
    REPORT_SCHEMA_VERSION: str = Field(default="1.0", description="JSON report schema version")

    @field_validator(
        "DEFAULT_N", "DEFAULT_K", "DEFAULT_PD_CAP", "DEFAULT_DEGREE_CAP",
        "DEFAULT_SMAX", "MEMORY_GUARD", "PROPERTY_CASES", "WITT_CACHE_SIZE",
    )
    @classmethod
    def validate_positive(cls, v: int) -> int:
        """Caps and sizes must be positive."""
        if v <= 0:
            raise ValueError("value must be positive")
        return v

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Only standard logging levels are accepted."""
        if v.upper() not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown log level {v!r}")
        return v.upper()


# Global settings instance
settings = Settings()
