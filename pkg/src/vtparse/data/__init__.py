"""Corpus ingestion, synthetic data and evaluation."""

from .conllu import (
    PTB_PUNCT,
    UD_PUNCT,
    ConllSentence,
    format_conllu,
    load_conllu,
    parse_conllu,
    strip_punctuation,
    write_conllu,
)
from .corpus import (
    UNK,
    Corpus,
    Vocab,
    Vocabularies,
    build_vocab,
    estimate_rule_expectations,
    load_clusters,
    load_embeddings,
)
from .evaluation import (
    baseline_parse,
    count_projective_trees,
    dda,
    dda_by_length,
    left_branching,
    linearity_ratio,
    right_branching,
    speed_bench,
    time_parse,
    uniform_random_tree,
)
from .synthetic import TAGS, SyntheticGrammar, generate_synthetic, rule_match_fraction

__all__ = [
    "PTB_PUNCT", "UD_PUNCT", "ConllSentence", "format_conllu", "load_conllu", "parse_conllu",
    "strip_punctuation", "write_conllu", "UNK", "Corpus", "Vocab", "Vocabularies", "build_vocab",
    "estimate_rule_expectations", "load_clusters", "load_embeddings", "baseline_parse",
    "count_projective_trees", "dda", "dda_by_length", "left_branching", "linearity_ratio",
    "right_branching", "speed_bench", "time_parse", "uniform_random_tree", "TAGS",
    "SyntheticGrammar", "generate_synthetic", "rule_match_fraction",
]
