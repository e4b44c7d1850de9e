from pydantic_settings import BaseSettings
from functools import lru_cache


class Settings(BaseSettings):
    # Logging
    log_level: str = "INFO"

    # Default output root when neither --out nor the config names one
    output_dir: str = "out"

    # verify subcommand
    verify_seed: int = 0
    verify_trials: int = 100

    # gains subcommand: randomized beta(t) trials per certificate
    certify_trials: int = 100

    # batch subcommand
    batch_workers: int = 2

    class Config:
        env_prefix = "QUADSTAB_"
        env_file = ".env"
        env_file_encoding = "utf-8"
        extra = "ignore"


@lru_cache()
def get_settings() -> Settings:
    return Settings()
