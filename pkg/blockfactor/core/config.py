import os
from typing import ClassVar

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="BLOCKFACTOR_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    # constants; only THREADS is read from the environment
    APP_NAME: ClassVar[str] = "blockfactor"
    BUILD_HASH: ClassVar[str] = "dev"
    DEFAULT_SEED: ClassVar[int] = 20160729
    LOG_LEVEL: ClassVar[str] = "WARNING"
    KL_COMPONENT_CAP: ClassVar[int] = 20

    # 0 means one worker per CPU
    THREADS: int = Field(default=0, ge=0)

    def resolve_threads(self, threads: int | None = None) -> int:
        """Turn a user/thread setting into a positive worker count."""
        value = self.THREADS if threads is None else threads
        if value <= 0:
            return os.cpu_count() or 1
        return value


settings = Settings()
