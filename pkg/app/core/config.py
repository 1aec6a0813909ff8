"""
Configuration Settings
Load environment variables and harness configuration
"""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Harness settings loaded from environment variables"""

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")

    # Application
    APP_NAME: str = "QPIP Verification Harness"
    ENV: str = "development"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Simulation capacity
    MAX_QUBITS: int = 24
    MAX_CHANNEL_REGISTERS: int = 6
    MAX_VIEW_QUBITS: int = 20

    # Numerical tolerance for norms, fidelities and Hermiticity
    TOLERANCE: float = 1e-9

    # Experiment defaults
    DEFAULT_TRIALS: int = 10_000
    DEFAULT_PROTOCOL: str = "epr"
    DEFAULT_WORKERS: int = 1

    # Statistics
    CONFIDENCE_LEVEL: float = 0.99
    SIGMA_MULTIPLIER: float = 3.0

    # Experiment ledger
    DATABASE_URL: str = "sqlite:///./verify_runs.db"
    RECORD_RUNS: bool = False


# Create global settings instance
settings = Settings()
