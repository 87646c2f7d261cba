import numpy as np
import pytest

from vtparse.decoder import Decoder
from vtparse.encoder import Encoder
from vtparse.nn import ModelConfig
from vtparse.transitions import Sentence


def tiny_config(**kw):
    base = dict(word_dim=3, pos_dim=4, encoder_hidden=5, decoder_hidden=5, dropout=0.0, cluster_dim=2)
    base.update(kw)
    return ModelConfig(**base)


def scramble(store, rng, scale=1.0):
    """Replace every trainable array by random values so distributions are far from uniform."""
    for _, t in store.trainable():
        t.data = scale * rng.standard_normal(t.data.shape)


def random_models(seed, n_pos=4, scale=1.0, **kw):
    rng = np.random.default_rng(seed)
    cfg = tiny_config(**kw)
    enc = Encoder(cfg, n_pos, rng=rng)
    dec = Decoder(cfg, n_pos, rng=rng)
    scramble(enc.store, rng, scale)
    scramble(dec.store, rng, scale)
    return enc, dec


def sentence(pos):
    return Sentence.from_pos(pos)


@pytest.fixture
def models():
    return random_models(0)
