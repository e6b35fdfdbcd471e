import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from slicewm.core import DescriptorSet, SecretKey, build_layout  # noqa: E402


@pytest.fixture
def key():
    return SecretKey(bytes(range(32)))


@pytest.fixture
def other_key():
    return SecretKey(bytes(range(1, 33)))


@pytest.fixture
def demo_descriptors():
    return DescriptorSet.from_mapping(
        {
            "sub": "Young boy.",
            "act": "Running, sprinting forward.",
            "env": "Grassy field, daytime, park setting.",
            "det": "Red t-shirt, motion blur on legs.",
        }
    )


@pytest.fixture
def layout64():
    return build_layout(64, 64, "quadrant")


@pytest.fixture
def layout8():
    return build_layout(8, 8, "quadrant")
