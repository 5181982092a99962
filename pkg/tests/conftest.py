import numpy as np
import pytest
from loguru import logger


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20241212)


@pytest.fixture
def log_messages():
    messages: list[str] = []
    sink_id = logger.add(
        lambda message: messages.append(message.record["message"]), level="WARNING"
    )
    yield messages
    logger.remove(sink_id)
