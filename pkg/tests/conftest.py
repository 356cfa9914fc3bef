from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import yaml

from damc.model import SoftmaxBankOutput
from damc.numerics import Parameter

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_CONFIG = ROOT / "configs" / "default.yaml"

# a config small enough to run end to end inside a unit test
SMALL_CONFIG = {
    "seeds": [0, 1],
    "output_dir": "out",
    "data": {"kind": "synthetic", "synthetic": {"seed": 0, "n_per_class": 40}},
    "model": {"k": 3, "hidden_dims": [16], "feature_dim": 8, "head_hidden": 8},
    "pretrain": {"epochs": 3},
    "adapt": {"epochs": 3},
}


@pytest.fixture
def small_config_path(tmp_path) -> Path:
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL_CONFIG), encoding="utf-8")
    return path


def random_bank(rng: np.random.Generator, k: int, c: int, batch: int, scale: float = 1.5):
    """Logit parameters for a k-head bank and a closure building its softmax output."""
    logits = [Parameter(scale * rng.standard_normal((batch, c)), name=f"z{j}") for j in range(k)]
    return logits, lambda: SoftmaxBankOutput.from_logits(logits)


def bank_from_probs(*heads) -> SoftmaxBankOutput:
    return SoftmaxBankOutput.from_probs([np.atleast_2d(np.asarray(h, dtype=np.float64)) for h in heads])


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
