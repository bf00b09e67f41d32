from pydantic_settings import BaseSettings
from functools import lru_cache
from pathlib import Path

class Settings(BaseSettings):
    APP_NAME: str = "Thermoplast Simulation API"
    APP_VERSION: str = "1.0.0"
    LOG_LEVEL: str = "INFO"
    THREADS: int = 1  # THERMOPLAST_THREADS caps element-parallel assembly
    SINGLE_THREAD: bool = False
    OUTPUT_DIR: str = "runs"

    class Config:
        env_file = ".env"
        env_prefix = "THERMOPLAST_"

@lru_cache
def get_settings() -> Settings:
    return Settings()

def worker_count() -> int:
    s = get_settings()
    if s.SINGLE_THREAD:
        return 1
    return max(1, int(s.THREADS))

def resolve_output_dir(p: str | None) -> Path:
    if p:
        return Path(p)
    return Path(get_settings().OUTPUT_DIR)
