"""Command-line entry point: ``vtparse <command> ...``.

Exit status is 0 on success, 1 for usage or configuration errors, 2 for
data errors and 3 when a self-check fails.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .checkpoint import Bundle, load_checkpoint, save_checkpoint
from .config import RunConfig, parse_assignment, parse_config_text
from .data import (PTB_PUNCT, UD_PUNCT, Corpus, baseline_parse, build_vocab, dda, dda_by_length,
                   estimate_rule_expectations, format_conllu, generate_synthetic, linearity_ratio,
                   load_clusters, load_conllu, load_embeddings, parse_conllu, speed_bench)
from .data.synthetic import SyntheticGrammar
from .decoder import Decoder
from .encoder import Encoder
from .errors import ConfigurationError, DataError, EvaluationError, GuardError, VtparseError
from .lm import LanguageModel
from .pr import PTB_EXPANSIONS, BUILTIN_RULES, CompiledRules, PRState, load_expansions, load_rules
from .trainer import METRIC_COLUMNS, Trainer, train
from .transitions import Sentence

log = logging.getLogger("vtparse")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _threads(n: int):
    if n and n > 0:
        from threadpoolctl import threadpool_limits
        return threadpool_limits(limits=n)
    return contextlib.nullcontext()


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


# train ------------------------------------------------------------------------

_TRAIN_FLAGS = {
    "corpus": str, "dev": str, "rules": str, "expansions": str, "b_file": str, "b_from": str,
    "variant": str, "seed": int, "epochs": int, "pretrain_epochs": int, "batch_size": int,
    "mc_samples": int, "pr_mode": str, "sigma": float, "out": str, "max_len": int, "column": str,
}


def resolve_config(args) -> RunConfig:
    layers = []
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigurationError(f"cannot read config {args.config}: {e.strerror}") from None
        layers.append(parse_config_text(text))
    layers.append({k: getattr(args, k) for k in _TRAIN_FLAGS})
    layers.append(dict(parse_assignment(a) for a in args.set or []))
    if getattr(args, "threads", None) is not None:
        layers.append({"threads": args.threads})
    return RunConfig.resolve(*layers)


def _rules(opts):
    if opts.rules in BUILTIN_RULES:
        rules = BUILTIN_RULES[opts.rules]
    else:
        rules = load_rules(opts.rules)
    if not opts.expansions:
        exp = None
    elif opts.expansions == "ptb":
        exp = PTB_EXPANSIONS
    else:
        exp = load_expansions(opts.expansions)
    return rules, exp


def _read_b(path, size: int) -> np.ndarray:
    try:
        vals = [float(x) for x in Path(path).read_text(encoding="utf-8").split()]
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from None
    except ValueError:
        raise DataError(f"{path}: thresholds must be numbers") from None
    if len(vals) != size:
        raise ConfigurationError(f"{path} has {len(vals)} thresholds for {size} rules")
    return np.array(vals)


def _punct(column: str):
    return UD_PUNCT if column == "upos" else PTB_PUNCT


def prepare(cfg: RunConfig):
    """Load data and build fresh models, rules and PR state from a resolved config."""
    o, tc, mc = cfg.options, cfg.train, cfg.model
    if not o.corpus:
        raise ConfigurationError("no training corpus given (--corpus)")
    raw = load_conllu(o.corpus, o.max_len, o.strip_punct, column=o.column)
    if not raw:
        raise DataError(f"{o.corpus}: no sentences of length <= {o.max_len}")
    if o.dev:
        dev_raw = load_conllu(o.dev, o.dev_max_len, o.strip_punct, column=o.column)
    elif o.dev_fraction > 0 and len(raw) > 1:
        order = np.random.default_rng(tc.seed).permutation(len(raw))
        k = max(1, int(round(o.dev_fraction * len(raw))))
        dev_raw = [raw[i] for i in sorted(order[:k])]
        raw = [raw[i] for i in sorted(order[k:])]
    else:
        dev_raw = []
    vocab = build_vocab(raw, o.min_count, o.column)
    init = np.random.default_rng(np.random.SeedSequence([tc.seed, 1]))
    pretrained = None
    n_clusters = 0
    if mc.lexicalized:
        if o.clusters:
            cv, wc = load_clusters(o.clusters, vocab.words)
            vocab.clusters, vocab.word_clusters, n_clusters = cv, wc, len(cv)
        if o.embeddings:
            pretrained, found = load_embeddings(o.embeddings, vocab.words, init)
            log.info("pretrained vectors found for %d of %d words", found, len(vocab.words))
    train_c = Corpus(raw, vocab, "train")
    dev_c = Corpus(dev_raw, vocab, "dev")
    rules_text, exp = _rules(o)
    rules = CompiledRules.build(rules_text, vocab.pos.itos, exp, tc.pr_mode, strict=False)
    for h, d in rules.dropped:
        log.warning("rule %s -> %s has no tag in the corpus and is ignored", h, d)
    if tc.use_pr and rules.rules.rules == ():
        raise ConfigurationError("no rule matches the corpus tag set")
    b = None
    if o.b_file or o.b_from:
        if tc.pr_mode != "per_rule":
            raise ConfigurationError("b_file and b_from need pr_mode = per_rule")
        if o.b_file:
            b = _read_b(o.b_file, rules.size)
        else:
            ann = Corpus(load_conllu(o.b_from, o.max_len, o.strip_punct, column=o.column), vocab, "b_from")
            b = estimate_rule_expectations(ann.heads, [s.pos_ids for s in ann.sentences], rules, o.tightness)
    elif tc.pr_mode == "per_rule":
        raise ConfigurationError("pr_mode = per_rule needs b_file or b_from")
    pr = PRState.create(rules.size, mode=tc.pr_mode, b=b, sigma=tc.sigma, epsilon=mc.epsilon,
                        step=tc.dual_step, frozen=not tc.use_pr)
    enc = Encoder(mc, len(vocab.pos), len(vocab.words), n_clusters, rng=init, pretrained=pretrained)
    dec = Decoder(mc, len(vocab.words) if mc.lexicalized else len(vocab.pos), rng=init)
    return train_c, dev_c, Bundle(enc, dec, vocab, rules, pr, cfg.flat())


def _write_metrics_header(path: Path) -> None:
    path.write_text("\t".join(METRIC_COLUMNS) + "\n", encoding="utf-8")


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    with _threads(cfg.options.threads):
        train_c, dev_c, bundle = prepare(cfg)
        out = Path(cfg.options.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
        (out / "rules.txt").write_text(bundle.rules.rules.to_text(), encoding="utf-8")
        tc = cfg.train
        if tc.epochs == 0:
            save_checkpoint(out / "init.npz", bundle)
            log.info("epochs = 0: wrote the initialized model to %s", out / "init.npz")
            return EXIT_OK
        lm = None
        if tc.variant == "rl-bl":
            attr = "word_ids" if bundle.decoder.lexicalized else "pos_ids"
            seqs = [list(getattr(s, attr)) for s in train_c.sentences]
            lm = LanguageModel(bundle.decoder.n_words, rng=np.random.default_rng([tc.seed, 2]))
            nll = lm.fit(seqs, epochs=tc.lm_epochs, seed=tc.seed)
            log.info("language model per-token NLL by epoch: %s", ", ".join(f"{x:.3f}" for x in nll))
        trainer = Trainer(bundle.encoder, bundle.decoder, bundle.rules, tc, bundle.pr, lm)
        mpath = out / "metrics.tsv"
        _write_metrics_header(mpath)
        dev_heads = dev_c.heads if dev_c.raw and dev_c.annotated else []
        dev_sents = dev_c.sentences if dev_heads else []

        def on_epoch(row):
            with open(mpath, "a", encoding="utf-8") as fh:
                fh.write("\t".join(_fmt(row[k]) for k in METRIC_COLUMNS) + "\n")
            log.info("epoch %d  elbo %.3f  slack %.3f  dev %.4f", row["epoch"], row["elbo_estimate"],
                     row["slack_norm"], row["dev_dda"])

        result = train(trainer, train_c.sentences, dev_sents, dev_heads, on_epoch)
        bundle.pr = trainer.pr
        save_checkpoint(out / "final.npz", bundle)
        trainer.restore(result.best)
        save_checkpoint(out / "best.npz", bundle)
        from .plotting import plot_metrics
        plot_metrics(result.metrics, out / "metrics.png", tc.pretrain_epochs)
        if trainer.skipped:
            log.warning("%d batches skipped for non-finite gradients", trainer.skipped)
        print(f"best_epoch\t{result.best_epoch}\nbest_dev_dda\t{_fmt(result.best_dev)}\nrun_dir\t{out}")
    return EXIT_OK


# parse / eval -----------------------------------------------------------------

def _read_input(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from None


def _load_for_model(bundle: Bundle, text: str):
    from .data import strip_punctuation
    cfg = bundle.config
    column = bundle.vocab.column
    sents = parse_conllu(text)
    if cfg.get("strip_punct", True):
        sents = [strip_punctuation(s, _punct(column), column) for s in sents]
    return [s for s in sents if len(s)]


def cmd_parse(args) -> int:
    bundle = load_checkpoint(args.model)
    with _threads(args.threads):
        sents = _load_for_model(bundle, _read_input(args.input))
        enc = [bundle.vocab.encode(s) for s in sents]
        heads = bundle.encoder.greedy_parse_batch(enc) if enc else []
    text = format_conllu(sents, heads)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval(args) -> int:
    column = args.column
    gold = load_conllu(args.gold, None, args.strip_punct, column=column)
    if any(s.heads is None for s in gold):
        raise DataError(f"{args.gold} has sentences without heads")
    gh = [s.heads for s in gold]
    if args.baseline:
        ph = baseline_parse([len(h) for h in gh], args.baseline, args.seed)
    elif args.pred:
        pred = load_conllu(args.pred, None, args.strip_punct, column=column)
        if any(s.heads is None for s in pred):
            raise DataError(f"{args.pred} has sentences without heads")
        ph = [s.heads for s in pred]
    else:
        raise ConfigurationError("give --pred or --baseline")
    if len(gh) != len(ph):
        raise EvaluationError(f"{len(gh)} gold vs {len(ph)} predicted sentences")
    overall = dda(gh, ph)
    buckets = dda_by_length(gh, ph)
    print("bucket\tsentences\ttokens\tdda")
    for name, value in buckets.items():
        if value is None:
            print(f"# bucket {name}: no sentences, omitted", file=sys.stderr)
            continue
        limit = None if name == "all" else int(name[2:])
        sel = [g for g in gh if limit is None or len(g) <= limit]
        print(f"{name}\t{len(sel)}\t{sum(map(len, sel))}\t{value:.6f}")
    log.info("overall DDA %.6f", overall)
    return EXIT_OK


# bench / check / gen-synthetic ------------------------------------------------

def _random_sentences(bundle: Bundle, n: int, count: int, rng) -> list[Sentence]:
    out = []
    for _ in range(count):
        pos = rng.integers(0, len(bundle.vocab.pos), n)
        words = rng.integers(0, len(bundle.vocab.words), n)
        clusters = None
        if bundle.vocab.word_clusters is not None:
            clusters = [bundle.vocab.word_clusters[w] for w in words]
        out.append(Sentence(words, pos, clusters))
    return out


def cmd_bench(args) -> int:
    bundle = load_checkpoint(args.model)
    with _threads(args.threads):
        raw = _load_for_model(bundle, _read_input(args.corpus))
        sents = [bundle.vocab.encode(s) for s in raw]
        table = speed_bench(bundle.encoder, sents, args.repetitions)
        rng = np.random.default_rng(args.seed)
        ratio = linearity_ratio(bundle.encoder, _random_sentences(bundle, 10, args.probe, rng),
                                _random_sentences(bundle, 40, args.probe, rng), args.repetitions)
    lines = ["bucket\tsentences\ttokens_per_sec\tsec_per_token"]
    for name, row in table.items():
        if row.get("skipped"):
            print(f"# bucket {name}: {row['note']}, skipped", file=sys.stderr)
            continue
        lines.append(f"{name}\t{row['sentences']}\t{row['tokens_per_sec']:.1f}\t{row['sec_per_token']:.3e}")
    lines.append(f"# linearity_ratio(40/10)\t{ratio:.3f}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench.tsv").write_text(text, encoding="utf-8")
        from .plotting import plot_bench
        plot_bench(table, out / "bench.png")
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import run_checks
    if not 1 <= args.max_n <= 8:
        raise GuardError("--max-n must lie in 1..8")
    enc = dec = None
    if args.model:
        bundle = load_checkpoint(args.model)
        enc, dec = bundle.encoder, bundle.decoder
    with _threads(args.threads):
        results = run_checks(args.max_n, args.seed, enc, dec, log=print)
    failed = [name for name, ok, _ in results if not ok]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    grammar = SyntheticGrammar(stop_scale=args.stop_scale)
    sents = generate_synthetic(grammar, args.count, args.max_len, args.seed, args.min_len)
    text = format_conllu(sents)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# argument parsing -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vtparse", description="Unsupervised dependency parsing with a variational "
                "transition-based encoder/decoder and posterior regularization.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=True):
        sp.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
        if seed:
            sp.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train a parser; writes a run directory")
    t.add_argument("--config", help="flat key = value configuration file")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any configuration key")
    for name, typ in _TRAIN_FLAGS.items():
        t.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    t.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    t.set_defaults(func=cmd_train)

    q = sub.add_parser("parse", help="greedy-parse CoNLL-U input")
    q.add_argument("--model", required=True)
    q.add_argument("input", nargs="?", default="-", help="CoNLL-U file, '-' for stdin")
    q.add_argument("-o", "--output")
    common(q, seed=False)
    q.set_defaults(func=cmd_parse)

    e = sub.add_parser("eval", help="directed dependency accuracy by length bucket")
    e.add_argument("--gold", required=True)
    e.add_argument("--pred")
    e.add_argument("--baseline", choices=("left_branching", "right_branching", "random"))
    e.add_argument("--column", choices=("upos", "xpos"), default="upos")
    e.add_argument("--strip-punct", action="store_true", help="drop punctuation from both files first")
    common(e)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="greedy parsing speed")
    b.add_argument("--model", required=True)
    b.add_argument("--corpus", required=True)
    b.add_argument("--repetitions", type=int, default=5)
    b.add_argument("--probe", type=int, default=20, help="sentences per length in the linearity probe")
    b.add_argument("--out", help="directory for bench.tsv and bench.png")
    common(b)
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("check", help="run the numerical self-checks")
    c.add_argument("--max-n", type=int, default=3)
    c.add_argument("--model", help="checkpoint to check instead of fresh random models")
    common(c)
    c.set_defaults(func=cmd_check)

    g = sub.add_parser("gen-synthetic", help="write a synthetic treebank")
    g.add_argument("--count", type=int, default=2000)
    g.add_argument("--max-len", type=int, default=10)
    g.add_argument("--min-len", type=int, default=2)
    g.add_argument("--stop-scale", type=float, default=1.0)
    g.add_argument("-o", "--out")
    common(g)
    g.set_defaults(func=cmd_gen_synthetic)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigurationError, GuardError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, EvaluationError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except VtparseError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
