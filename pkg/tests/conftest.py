import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

import chunkcode as cc

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def codebook():
    return cc.Codebook(
        (
            cc.Dimension(id="fidelity", name="Fidelity", definition="How faithful it is."),
            cc.Dimension(id="use-cases", name="Use-Cases", definition="What it is for."),
            cc.Dimension(id="state", name="State", definition="Whether state is tracked."),
        )
    )


@pytest.fixture
def tiny_corpus():
    words_a = " ".join(f"alpha{i}" for i in range(7))
    words_b = " ".join(f"beta{i}" for i in range(4))
    return [
        cc.DocumentText.from_raw("doc-a", words_a),
        cc.DocumentText.from_raw("doc-b", words_b),
    ]


@pytest.fixture
def positive_mock():
    return cc.LLMClient(
        mode="mock", mock=cc.ScriptedMock(default="Yes, the parameter is mentioned.")
    )


@pytest.fixture
def negative_mock():
    return cc.LLMClient(
        mode="mock", mock=cc.ScriptedMock(default="The paper does not focus on it.")
    )
