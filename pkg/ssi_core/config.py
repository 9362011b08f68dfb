from __future__ import annotations

from pydantic import Field
from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # enable_decoding=False: list fields come as CSV strings (SSI_DEFAULT_T=10,20,30),
    # an empty value must not go through JSON decoding. Parsed in validators below.
    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", extra="ignore", enable_decoding=False
    )

    # Run
    seed: int = Field(default=0, alias="SSI_SEED")
    out_dir: str = Field(default="runs", alias="SSI_OUT_DIR")
    threads: int = Field(default=1, alias="SSI_THREADS")

    # Numerics
    tol: float = Field(default=1e-8, alias="SSI_TOL")
    enum_guard_n: int = Field(default=4, alias="SSI_ENUM_GUARD_N")

    # Experiment defaults
    presets_path: str | None = Field(default=None, alias="SSI_PRESETS_PATH")
    default_betas: list[float] = Field(default_factory=list, alias="SSI_DEFAULT_BETAS")
    default_t: list[int] = Field(default_factory=list, alias="SSI_DEFAULT_T")

    # Logging
    log_level: str = Field(default="INFO", alias="SSI_LOG_LEVEL")

    @field_validator("presets_path", mode="before")
    @classmethod
    def _empty_path_to_none(cls, v):
        if v is None:
            return None
        if isinstance(v, str) and v.strip() == "":
            return None
        return v

    @field_validator("default_t", mode="before")
    @classmethod
    def _parse_t_list(cls, v):
        out = []
        for p in _split_csv(v):
            try:
                t = int(p)
            except Exception:
                continue
            if t >= 1:
                out.append(t)
        return out

    @field_validator("default_betas", mode="before")
    @classmethod
    def _parse_beta_list(cls, v):
        out = []
        for p in _split_csv(v):
            try:
                b = float(p)
            except Exception:
                continue
            if b >= 0 and b != float("inf"):
                out.append(b)
        return out

    @field_validator("threads", mode="before")
    @classmethod
    def _threads_range(cls, v):
        try:
            iv = int(v)
        except Exception:
            return 1
        return min(max(iv, 1), 64)

    @field_validator("tol", mode="before")
    @classmethod
    def _positive_tol(cls, v):
        try:
            fv = float(v)
        except Exception:
            return 1e-8
        return fv if fv > 0 else 1e-8


def load_settings() -> Settings:
    return Settings()


def _split_csv(v) -> list[str]:
    # "10,20 30" / "10;20" / [10, 20]
    if v is None:
        return []
    if isinstance(v, (list, tuple)):
        return [str(x) for x in v]
    s = str(v).strip()
    if not s:
        return []
    return [p.strip() for p in s.replace(";", ",").replace(" ", ",").split(",") if p.strip()]
