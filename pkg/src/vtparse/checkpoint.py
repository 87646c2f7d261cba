"""Saving and restoring trained models as a single ``.npz`` file."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data.corpus import Vocabularies
from .decoder import Decoder
from .encoder import Encoder
from .errors import DataError, FormatError
from .nn.params import ModelConfig
from .pr import CompiledRules, PRState, parse_rules

FORMAT_VERSION = 1


@dataclass
class Bundle:
    encoder: Encoder
    decoder: Decoder
    vocab: Vocabularies
    rules: CompiledRules
    pr: PRState
    config: dict = field(default_factory=dict)  # resolved run configuration

    @property
    def model_config(self) -> ModelConfig:
        return self.encoder.config


def save_checkpoint(path, bundle: Bundle) -> None:
    arrays = {}
    for prefix, store in (("enc", bundle.encoder.store), ("dec", bundle.decoder.store)):
        for k, v in store.arrays().items():
            arrays[f"{prefix}/{k}"] = v
        for k, v in store.accum.items():
            arrays[f"accum/{prefix}/{k}"] = v
    pr = bundle.pr
    meta = {
        "format_version": FORMAT_VERSION,
        "model_config": bundle.model_config.to_dict(),
        "vocab": bundle.vocab.to_dict(),
        "n_clusters": bundle.encoder.n_clusters,
        "pretrained": bundle.encoder.pretrained,
        "rules": bundle.rules.rules.to_text(),
        "rule_source": bundle.rules.rules.source,
        "rule_mode": bundle.rules.mode,
        "rule_table_tags": list(bundle.rules.tags),
        "pr": {"lam": pr.lam.tolist(), "b": None if pr.b is None else pr.b.tolist(), "mode": pr.mode,
               "sigma": pr.sigma, "epsilon": pr.epsilon, "step": pr.step, "frozen": pr.frozen,
               "updates": pr.updates},
        "config": bundle.config,
    }
    arrays["__rules__"] = bundle.rules.table
    arrays["__meta__"] = np.array(json.dumps(meta))
    path = Path(path)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> Bundle:
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from None
    if "__meta__" not in arrays:
        raise FormatError(f"{path} is not a checkpoint (no metadata)")
    meta = json.loads(str(arrays.pop("__meta__")))
    if meta.get("format_version") != FORMAT_VERSION:
        raise FormatError(f"unsupported checkpoint version {meta.get('format_version')}")
    cfg = ModelConfig.from_dict(meta["model_config"])
    vocab = Vocabularies.from_dict(meta["vocab"])
    pretrained = arrays.get("enc/enc.word_table") if meta["pretrained"] else None
    encoder = Encoder(cfg, len(vocab.pos), len(vocab.words), meta["n_clusters"],
                      rng=np.random.default_rng(0), pretrained=pretrained)
    n_tokens = len(vocab.words) if cfg.lexicalized else len(vocab.pos)
    decoder = Decoder(cfg, n_tokens, rng=np.random.default_rng(0))
    for prefix, store in (("enc", encoder.store), ("dec", decoder.store)):
        params = {k[len(prefix) + 1:]: v for k, v in arrays.items() if k.startswith(prefix + "/")}
        accum = {k[len(prefix) + 7:]: v for k, v in arrays.items() if k.startswith(f"accum/{prefix}/")}
        try:
            store.load_arrays(params, accum)
        except (KeyError, ValueError) as e:
            raise FormatError(f"checkpoint does not match its configuration: {e}") from None
    # expansions are already folded into the stored table
    rules = CompiledRules(parse_rules(meta["rules"], meta["rule_source"]), tuple(meta["rule_table_tags"]),
                          arrays.pop("__rules__"), meta["rule_mode"])
    p = meta["pr"]
    pr = PRState(np.array(p["lam"], dtype=float), None if p["b"] is None else np.array(p["b"]), p["mode"],
                 p["sigma"], p["epsilon"], p["step"], p["frozen"], p["updates"])
    return Bundle(encoder, decoder, vocab, rules, pr, meta.get("config", {}))
