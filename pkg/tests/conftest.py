from __future__ import annotations

import os

import numpy as np
import pytest


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def clean_env(monkeypatch, tmp_path):
    """No SSI_* variables and no stray .env: cwd is a fresh temp dir."""
    for k in list(os.environ):
        if k.startswith("SSI_"):
            monkeypatch.delenv(k, raising=False)
    monkeypatch.chdir(tmp_path)
    return tmp_path
