import csv
import subprocess
import sys

import numpy as np
import pytest

from vtparse.checkpoint import load_checkpoint, save_checkpoint
from vtparse.cli import main
from vtparse.config import RunConfig, parse_config_text
from vtparse.data import format_conllu, generate_synthetic, load_conllu, parse_conllu
from vtparse.data.evaluation import baseline_parse, dda
from vtparse.data.synthetic import SyntheticGrammar
from vtparse.errors import ConfigurationError, DataError, FormatError

SMALL = ["--set", "encoder_hidden=6", "--set", "decoder_hidden=6", "--set", "pos_dim=6",
         "--set", "mc_samples=3", "--set", "dropout=0", "--batch-size", "16"]


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    path = d / "syn.conllu"
    path.write_text(format_conllu(generate_synthetic(count=120, seed=3)))
    return path


@pytest.fixture(scope="module")
def run(corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "r"
    code = main(["train", "--corpus", str(corpus), "--seed", "1", "--epochs", "1", "--pretrain-epochs", "1",
                 "--variant", "rl-pc", "--out", str(out), *SMALL])
    assert code == 0
    return out


def read_tsv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh, delimiter="\t"))


class TestConfig:
    def test_layers_override(self, tmp_path):
        f = tmp_path / "c.txt"
        f.write_text("# comment\nepochs = 7\nsigma = 0.5  # tail\nuse-pr = no\n")
        cfg = RunConfig.from_file(f, {"epochs": "3"})
        assert (cfg.train.epochs, cfg.train.sigma, cfg.train.use_pr) == (3, 0.5, False)

    def test_text_round_trip(self):
        cfg = RunConfig.resolve({"epochs": 4, "dropout": "0.25", "rules": "wsj", "strip_punct": "false"})
        again = RunConfig.resolve(parse_config_text(cfg.to_text()))
        assert again == cfg

    def test_errors(self):
        with pytest.raises(ConfigurationError):
            RunConfig.resolve({"nope": 1})
        with pytest.raises(ConfigurationError):
            RunConfig.resolve({"epochs": "many"})
        with pytest.raises(ConfigurationError):
            RunConfig.resolve({"variant": "rl-xx"})
        with pytest.raises(FormatError, match="line 2"):
            parse_config_text("a = 1\nbroken line\n")


class TestTrain:
    def test_run_directory(self, run):
        for name in ("config.txt", "metrics.tsv", "metrics.png", "best.npz", "final.npz", "rules.txt"):
            assert (run / name).exists(), name
        rows = read_tsv(run / "metrics.tsv")
        assert [r["epoch"] for r in rows] == ["1", "2"]
        cfg = RunConfig.resolve(parse_config_text((run / "config.txt").read_text()))
        assert cfg.train.seed == 1 and cfg.model.mc_samples == 3

    def test_same_seed_same_metrics(self, corpus, run, tmp_path):
        out = tmp_path / "again"
        assert main(["train", "--corpus", str(corpus), "--seed", "1", "--epochs", "1", "--pretrain-epochs", "1",
                     "--variant", "rl-pc", "--out", str(out), *SMALL]) == 0
        a = [{k: v for k, v in r.items() if k != "tokens_per_sec"} for r in read_tsv(run / "metrics.tsv")]
        b = [{k: v for k, v in r.items() if k != "tokens_per_sec"} for r in read_tsv(out / "metrics.tsv")]
        assert a == b

    def test_zero_epochs(self, corpus, tmp_path):
        out = tmp_path / "zero"
        assert main(["train", "--corpus", str(corpus), "--epochs", "0", "--out", str(out), *SMALL]) == 0
        assert sorted(p.name for p in out.iterdir()) == ["config.txt", "init.npz", "rules.txt"]

    def test_config_file_and_flags(self, corpus, tmp_path):
        f = tmp_path / "exp.txt"
        f.write_text(f"corpus = {corpus}\nepochs = 0\nsigma = 0.6\n")
        out = tmp_path / "cf"
        assert main(["train", "--config", str(f), "--sigma", "0.7", "--out", str(out)]) == 0
        assert "sigma = 0.7" in (out / "config.txt").read_text()

    def test_errors(self, corpus, tmp_path):
        assert main(["train", "--corpus", str(tmp_path / "missing.conllu")]) == 2
        assert main(["train", "--corpus", str(corpus), "--set", "bogus=1"]) == 1
        assert main(["train", "--corpus", str(corpus), "--pr-mode", "per_rule", "--out", str(tmp_path / "x")]) == 1

    def test_per_rule_thresholds_from_treebank(self, corpus, tmp_path):
        out = tmp_path / "pr"
        assert main(["train", "--corpus", str(corpus), "--pr-mode", "per_rule", "--b-from", str(corpus),
                     "--epochs", "0", "--out", str(out)]) == 0
        b = load_checkpoint(out / "init.npz").pr.b
        assert b.shape == (9,) and np.all(b <= 0) and b.min() < 0


    def test_baseline_variant(self, corpus, tmp_path):
        out = tmp_path / "bl"
        assert main(["train", "--corpus", str(corpus), "--variant", "rl-bl", "--epochs", "1",
                     "--pretrain-epochs", "0", "--set", "lm_epochs=1", "--out", str(out), *SMALL]) == 0
        assert len(read_tsv(out / "metrics.tsv")) == 1

    def test_lexicalized_with_resources(self, corpus, tmp_path, capsys):
        words = sorted({w for s in load_conllu(corpus) for w in s.forms})
        (tmp_path / "clusters.txt").write_text("".join(f"{w}\t{i % 2}1\n" for i, w in enumerate(words[:10])))
        (tmp_path / "vec.txt").write_text("".join(f"{w} 0.1 0.2 {i / 10}\n" for i, w in enumerate(words[:5])))
        out = tmp_path / "lex"
        assert main(["train", "--corpus", str(corpus), "--epochs", "1", "--pretrain-epochs", "0", "--out", str(out),
                     "--set", "lexicalized=true", "--set", f"clusters={tmp_path / 'clusters.txt'}",
                     "--set", f"embeddings={tmp_path / 'vec.txt'}", "--set", "word_dim=3", "--set", "min_count=1",
                     *SMALL]) == 0
        bundle = load_checkpoint(out / "best.npz")
        assert bundle.encoder.pretrained and bundle.encoder.n_clusters == 3
        capsys.readouterr()
        assert main(["parse", "--model", str(out / "best.npz"), str(corpus)]) == 0
        assert len(parse_conllu(capsys.readouterr().out)) == 120


class TestParseEval:
    def test_parse_round_trip(self, run, corpus, tmp_path, capsys):
        assert main(["parse", "--model", str(run / "best.npz"), str(corpus)]) == 0
        out = capsys.readouterr().out
        pred = parse_conllu(out)
        gold = load_conllu(corpus)
        assert len(pred) == len(gold)
        assert [s.forms for s in pred] == [s.forms for s in gold]

    def test_single_token(self, run, tmp_path, capsys):
        f = tmp_path / "one.conllu"
        f.write_text("1\tx\t_\tNOUN\tNOUN\t_\t_\t_\t_\t_\n\n")
        assert main(["parse", "--model", str(run / "best.npz"), str(f)]) == 0
        assert parse_conllu(capsys.readouterr().out)[0].heads == [0]

    def test_empty_input(self, run, tmp_path, capsys):
        f = tmp_path / "empty.conllu"
        f.write_text("")
        assert main(["parse", "--model", str(run / "best.npz"), str(f)]) == 0
        assert capsys.readouterr().out == ""

    def test_unknown_tags_named(self, run, tmp_path, capsys):
        f = tmp_path / "bad.conllu"
        f.write_text("1\tx\t_\tFOO\tFOO\t_\t_\t_\t_\t_\n\n")
        assert main(["parse", "--model", str(run / "best.npz"), str(f)]) == 2
        assert "FOO" in capsys.readouterr().err

    def test_eval_gold_vs_gold(self, corpus, capsys):
        assert main(["eval", "--gold", str(corpus), "--pred", str(corpus)]) == 0
        rows = list(csv.DictReader(capsys.readouterr().out.splitlines(), delimiter="\t"))
        assert all(float(r["dda"]) == 1.0 for r in rows)

    def test_eval_baseline_delegates(self, corpus, capsys):
        assert main(["eval", "--gold", str(corpus), "--baseline", "left_branching"]) == 0
        rows = {r["bucket"]: r for r in csv.DictReader(capsys.readouterr().out.splitlines(), delimiter="\t")}
        gold = [s.heads for s in load_conllu(corpus)]
        ref = dda(gold, baseline_parse([len(h) for h in gold], "left_branching"))
        assert float(rows["all"]["dda"]) == pytest.approx(ref, abs=1e-6)

    def test_empty_bucket_noted(self, tmp_path, capsys):
        sents = generate_synthetic(SyntheticGrammar(stop_scale=1.5), count=5, seed=0, min_len=12, max_len=14)
        f = tmp_path / "long.conllu"
        f.write_text(format_conllu(sents))
        assert main(["eval", "--gold", str(f), "--pred", str(f)]) == 0
        cap = capsys.readouterr()
        assert "<=10" in cap.err and "<=10" not in cap.out

    def test_misaligned(self, corpus, tmp_path):
        f = tmp_path / "short.conllu"
        f.write_text(format_conllu(load_conllu(corpus)[:3]))
        assert main(["eval", "--gold", str(corpus), "--pred", str(f)]) == 2


class TestBenchCheck:
    def test_bench(self, run, corpus, tmp_path, capsys):
        out = tmp_path / "b"
        assert main(["bench", "--model", str(run / "best.npz"), "--corpus", str(corpus),
                     "--repetitions", "1", "--probe", "3", "--out", str(out)]) == 0
        text = capsys.readouterr().out
        assert "linearity_ratio" in text
        assert (out / "bench.tsv").exists() and (out / "bench.png").exists()

    def test_check_fresh(self, capsys):
        assert main(["check", "--max-n", "3"]) == 0
        assert "FAIL" not in capsys.readouterr().out

    def test_check_checkpoint(self, run):
        assert main(["check", "--max-n", "3", "--model", str(run / "best.npz")]) == 0

    def test_check_nan_checkpoint(self, run, tmp_path, capsys):
        bundle = load_checkpoint(run / "best.npz")
        name, p = next(iter(bundle.encoder.store.trainable()))
        p.data[0, 0] = np.nan
        bad = tmp_path / "nan.npz"
        save_checkpoint(bad, bundle)
        assert main(["check", "--max-n", "3", "--model", str(bad)]) == 3
        assert "FAIL\tfinite parameters" in capsys.readouterr().out

    def test_check_guard(self):
        assert main(["check", "--max-n", "9"]) == 1

    def test_usage_errors(self):
        with pytest.raises(SystemExit) as e:
            main(["frobnicate"])
        assert e.value.code == 1

    def test_gen_synthetic(self, tmp_path):
        f = tmp_path / "g.conllu"
        assert main(["gen-synthetic", "--count", "7", "--seed", "4", "-o", str(f)]) == 0
        assert format_conllu(load_conllu(f, strip_punct=False)) == format_conllu(generate_synthetic(count=7, seed=4))

    def test_console_script(self):
        res = subprocess.run([sys.executable, "-m", "vtparse.cli", "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "gen-synthetic" in res.stdout


class TestCheckpoint:
    def test_round_trip(self, run):
        a = load_checkpoint(run / "final.npz")
        b = load_checkpoint(run / "final.npz")
        for k, v in a.encoder.store.arrays().items():
            np.testing.assert_array_equal(v, b.encoder.store.arrays()[k])
        assert a.vocab.to_dict() == b.vocab.to_dict()

    def test_save_load_identity(self, run, tmp_path):
        a = load_checkpoint(run / "final.npz")
        save_checkpoint(tmp_path / "c.npz", a)
        b = load_checkpoint(tmp_path / "c.npz")
        for x, y in ((a.encoder.store, b.encoder.store), (a.decoder.store, b.decoder.store)):
            for k, v in x.arrays().items():
                np.testing.assert_array_equal(v, y.arrays()[k])
            for k, v in x.accum.items():
                np.testing.assert_array_equal(v, y.accum[k])
        np.testing.assert_array_equal(a.rules.table, b.rules.table)
        np.testing.assert_array_equal(a.pr.lam, b.pr.lam)
        assert a.config == b.config

    def test_greedy_parses_survive(self, run, corpus):
        bundle = load_checkpoint(run / "best.npz")
        sents = [bundle.vocab.encode(s) for s in load_conllu(corpus)[:10]]
        again = load_checkpoint(run / "best.npz")
        assert bundle.encoder.greedy_parse_batch(sents) == again.encoder.greedy_parse_batch(sents)

    def test_bad_files(self, tmp_path):
        f = tmp_path / "junk.npz"
        f.write_bytes(b"not a zip")
        with pytest.raises(DataError):
            load_checkpoint(f)
        np.savez(tmp_path / "plain.npz", x=np.zeros(2))
        with pytest.raises(FormatError):
            load_checkpoint(tmp_path / "plain.npz")
