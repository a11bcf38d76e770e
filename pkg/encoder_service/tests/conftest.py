import pytest
from fastapi.testclient import TestClient

from encoder_service.qdmlm import DEFAULT_MASK_RATE, load_pairs, toy_pairs_path, train
from encoder_service.service import create_app

TOY_STEPS = 300
TOY_SEED = 7


@pytest.fixture(scope="session")
def toy_run():
    """One full desk-scale training run, shared by every test that
    needs a trained model; training twice would double the suite time
    for no extra coverage."""
    pairs = load_pairs(toy_pairs_path())
    assert len(pairs) == 200
    return train(pairs, steps=TOY_STEPS, mask_rate=DEFAULT_MASK_RATE, seed=TOY_SEED)


@pytest.fixture(scope="session")
def served(toy_run):
    return TestClient(create_app(toy_run.model, toy_run.vocab))
