"""
Shared fixtures: toy taxonomies, utterance pools and synthesized splits.
"""
import pytest
import torch

from config.settings import settings
from core.corpus import build_corpus, build_vocab, load_pool
from core.model import IntentModel, ModelConfig
from core.taxonomy import load_taxonomy

TOY_DIR = settings.get_data_dir() / "toy"


@pytest.fixture(scope="session")
def toy_dir():
    return TOY_DIR


@pytest.fixture(scope="session")
def toy_taxonomy():
    """2 coarse x 4 fine labels."""
    return load_taxonomy(TOY_DIR / "taxonomy_2x4.json")


@pytest.fixture(scope="session")
def toy3_taxonomy():
    """3 coarse x 6 fine labels."""
    return load_taxonomy(TOY_DIR / "taxonomy_3x6.json")


@pytest.fixture(scope="session")
def toy_pool(toy_taxonomy):
    return load_pool(TOY_DIR / "pool.jsonl", toy_taxonomy)


@pytest.fixture(scope="session")
def toy3_pool(toy3_taxonomy):
    return load_pool(TOY_DIR / "pool.jsonl", toy3_taxonomy) + load_pool(
        TOY_DIR / "pool_weather.jsonl", toy3_taxonomy
    )


@pytest.fixture(scope="session")
def toy_splits(toy_pool, toy_taxonomy):
    """The 32/8/8 two-intent fixture."""
    return build_corpus(toy_pool, toy_taxonomy, (32, 8, 8), n_intents=2, rng_seed=0)


@pytest.fixture(scope="session")
def toy3_splits(toy3_pool, toy3_taxonomy):
    """Three-intent fixture with pairwise-distinct coarse labels."""
    return build_corpus(toy3_pool, toy3_taxonomy, (32, 8, 8), n_intents=3, rng_seed=0)


@pytest.fixture(scope="session")
def single_splits(toy_pool, toy_taxonomy):
    """Single-intent fixture (one triplet per example)."""
    return build_corpus(toy_pool, toy_taxonomy, (10, 3, 3), n_intents=1, rng_seed=0)


@pytest.fixture(scope="session")
def toy_vocab(toy_splits):
    return build_vocab(toy_splits["train"])


@pytest.fixture
def tiny_model_config():
    return ModelConfig(embed_dim=8, contextual=True, hidden_dim=8, pointer_hidden=4, n_slots=2)


@pytest.fixture
def tiny_model(tiny_model_config, toy_vocab, toy_taxonomy):
    torch.manual_seed(0)
    return IntentModel(tiny_model_config, toy_vocab, toy_taxonomy, dropout_rate=0.0).eval()
