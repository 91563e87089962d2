import os
from pathlib import Path

import numpy as np
import pytest
import torch

from mmsg.data import load_csv

DATA = Path(__file__).resolve().parents[1] / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def esol():
    return load_csv(DATA / "esol.csv")


@pytest.fixture(scope="session")
def freesolv():
    return load_csv(DATA / "freesolv.csv")


@pytest.fixture(scope="session")
def lipo():
    return load_csv(DATA / "lipophilicity.csv")


def bbbp_path() -> Path | None:
    raw = os.environ.get("MMSG_BBBP_CSV")
    return Path(raw) if raw and Path(raw).exists() else None


def perturb_(module: torch.nn.Module, scale: float = 0.1, seed: int = 123) -> None:
    """Push zero-initialized vectors off zero so every path carries gradient."""
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.add_(scale * torch.randn(p.shape, generator=g, dtype=p.dtype))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
