"""CoNLL-U reading, punctuation stripping and writing."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import DataError, FormatError

# conventional Penn Treebank punctuation tags
PTB_PUNCT = frozenset({"``", "''", ",", ".", ":", "-LRB-", "-RRB-", "#", "$"})
UD_PUNCT = frozenset({"PUNCT"})


@dataclass
class ConllSentence:
    """One sentence; ``heads`` is None for unannotated text."""

    forms: list[str]
    upos: list[str]
    xpos: list[str]
    heads: list[int] | None
    deprels: list[str] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)
    line: int = 0

    def __len__(self) -> int:
        return len(self.forms)

    def tags(self, column: str = "upos") -> list[str]:
        return self.upos if column == "upos" else self.xpos


def _parse_block(rows: list[tuple[int, str]], comments: list[str]) -> ConllSentence:
    forms, upos, xpos, heads, rels, where = [], [], [], [], [], []
    annotated = True
    for lineno, raw in rows:
        cols = raw.split("\t")
        if len(cols) != 10:
            raise FormatError(f"expected 10 tab-separated columns, found {len(cols)}", lineno)
        tid = cols[0]
        if "-" in tid or "." in tid:
            continue  # multiword ranges and empty nodes
        try:
            idx = int(tid)
        except ValueError:
            raise FormatError(f"bad token id {tid!r}", lineno) from None
        if idx != len(forms) + 1:
            raise FormatError(f"token id {idx} out of sequence", lineno)
        where.append(lineno)
        forms.append(cols[1])
        upos.append(cols[3])
        xpos.append(cols[4])
        rels.append(cols[7])
        if cols[6] == "_":
            annotated = False
            heads.append(-1)
            continue
        try:
            heads.append(int(cols[6]))
        except ValueError:
            raise FormatError(f"bad head {cols[6]!r}", lineno) from None
    n = len(forms)
    for lineno, h in zip(where, heads):
        if annotated and not 0 <= h <= n:
            raise DataError(f"head {h} out of range for a {n}-token sentence", lineno)
    return ConllSentence(forms, upos, xpos, heads if annotated else None, rels, comments,
                         rows[0][0] if rows else 0)


def parse_conllu(text: str) -> list[ConllSentence]:
    out: list[ConllSentence] = []
    rows: list[tuple[int, str]] = []
    comments: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            if rows:
                out.append(_parse_block(rows, comments))
            rows, comments = [], []
        elif line.startswith("#"):
            comments.append(line)
        else:
            rows.append((lineno, line))
    if rows:
        out.append(_parse_block(rows, comments))
    return out


def strip_punctuation(sent: ConllSentence, punct: Iterable[str] = UD_PUNCT,
                      column: str = "upos") -> ConllSentence:
    """Drop punctuation tokens; their dependents move to the nearest kept ancestor."""
    punct = frozenset(punct)
    tags = sent.tags(column)
    keep = [t not in punct for t in tags]
    if all(keep):
        return sent
    new_index = {0: 0}
    for i, k in enumerate(keep, 1):
        if k:
            new_index[i] = len(new_index)
    heads = None
    if sent.heads is not None:
        heads = []
        for i, k in enumerate(keep, 1):
            if not k:
                continue
            h = sent.heads[i - 1]
            seen = set()
            while h != 0 and not keep[h - 1]:
                if h in seen:
                    raise DataError("cycle through punctuation heads", sent.line)
                seen.add(h)
                h = sent.heads[h - 1]
            heads.append(new_index[h])
    pick = [i for i, k in enumerate(keep) if k]
    return replace(sent, forms=[sent.forms[i] for i in pick], upos=[sent.upos[i] for i in pick],
                   xpos=[sent.xpos[i] for i in pick], heads=heads,
                   deprels=[sent.deprels[i] for i in pick] if sent.deprels else [])


def load_conllu(path, max_len: int | None = None, strip_punct: bool = True,
                punct: Iterable[str] | None = None, column: str = "upos",
                min_len: int = 1) -> list[ConllSentence]:
    """Read a file, strip punctuation and drop sentences outside the length range.

    ``column`` selects the tag column (``upos`` for UD, ``xpos`` for PTB
    tags); the default punctuation set follows the column.
    """
    if column not in ("upos", "xpos"):
        raise DataError(f"unknown tag column {column!r}")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}") from None
    if punct is None:
        punct = UD_PUNCT if column == "upos" else PTB_PUNCT
    out = []
    for s in parse_conllu(text):
        if strip_punct:
            s = strip_punctuation(s, punct, column)
        if len(s) < min_len or (max_len is not None and len(s) > max_len):
            continue
        out.append(s)
    return out


def format_conllu(sentences: Sequence[ConllSentence], heads: Sequence[Sequence[int]] | None = None) -> str:
    """CoNLL-U text; ``heads`` overrides the HEAD column when given."""
    lines = []
    for k, s in enumerate(sentences):
        hs = heads[k] if heads is not None else s.heads
        lines.extend(s.comments)
        for i in range(len(s)):
            h = "_" if hs is None else str(hs[i])
            rel = s.deprels[i] if s.deprels and s.deprels[i] != "_" else ("root" if h == "0" else "dep")
            if hs is None:
                rel = "_"
            lines.append("\t".join([str(i + 1), s.forms[i], "_", s.upos[i], s.xpos[i], "_", h, rel, "_", "_"]))
        lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


def write_conllu(path, sentences, heads=None) -> None:
    Path(path).write_text(format_conllu(sentences, heads), encoding="utf-8")
