"""CoNLL-2009 reading/writing, dependency trees and per-predicate instances."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, TextIO

import numpy as np

logger = logging.getLogger(__name__)

ABSENT = "_"
NO_ARG = "_"
UNK_REL = "<unk-rel>"
N_FIXED_COLUMNS = 14


class ConllFormatError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = "<stream>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


class TreeError(ValueError):
    def __init__(self, message: str, token_ids: Sequence[int]):
        self.token_ids = tuple(token_ids)
        super().__init__(f"{message} (tokens {list(self.token_ids)})")


@dataclass
class Token:
    id: int
    form: str
    lemma: Optional[str]
    plemma: Optional[str]
    pos: Optional[str]
    ppos: Optional[str]
    feat: Optional[str]
    pfeat: Optional[str]
    head: int
    phead: Optional[int]
    deprel: Optional[str]
    pdeprel: Optional[str]
    fillpred: bool
    pred: Optional[str]
    apreds: list = field(default_factory=list)


@dataclass
class Sentence:
    tokens: list

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def m(self) -> int:
        return len(self.tokens)

    @property
    def predicate_positions(self) -> list:
        """1-based ids of predicate tokens, in APRED column order."""
        return [t.id for t in self.tokens if t.fillpred]


@dataclass
class DepTree:
    parent: np.ndarray  # 1-based head per token (0 = root), index 0 unused
    children: list  # children[k] for k in 0..m (0 is the virtual root)
    relation: list  # relation[j] = label of the edge parent(j) -> j, index 0 unused

    @property
    def m(self) -> int:
        return len(self.parent) - 1

    @property
    def root(self) -> int:
        return self.children[0][0]

    def postorder(self) -> list:
        """Token ids with every child before its parent."""
        out = []
        stack = [(self.root, False)]
        while stack:
            k, done = stack.pop()
            if done:
                out.append(k)
                continue
            stack.append((k, True))
            for c in reversed(self.children[k]):
                stack.append((c, False))
        return out


@dataclass
class SrlInstance:
    sentence: Sentence
    sentence_index: int
    predicate: int  # 1-based token id
    frame: int  # 0-based APRED column
    labels: list  # one per token; NO_ARG when the token is not an argument
    sense: str

    @property
    def m(self) -> int:
        return len(self.sentence)


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------


def _opt(s: str) -> Optional[str]:
    return None if s == ABSENT else s


def _fmt(s) -> str:
    return ABSENT if s is None else str(s)


def _int(s: str, what: str, lineno: int, source: str, allow_absent=False) -> Optional[int]:
    if allow_absent and s == ABSENT:
        return None
    try:
        return int(s)
    except ValueError:
        raise ConllFormatError(f"non-numeric {what} {s!r}", lineno, source) from None


def parse_conll09(stream, source: str = "<stream>") -> list:
    """Read sentences from a text stream (or a string).

    ``"_"`` fields become ``None``; CRLF line endings are accepted.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    sentences = []
    rows = []
    width = None
    start = None

    def flush():
        nonlocal rows, width
        if rows:
            sentences.append(_build_sentence(rows, source, start))
        rows = []
        width = None

    lineno = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        cols = line.split("\t")
        if len(cols) < N_FIXED_COLUMNS:
            raise ConllFormatError(f"expected at least {N_FIXED_COLUMNS} columns, got {len(cols)}",
                                   lineno, source)
        if width is None:
            width = len(cols)
            start = lineno
        elif len(cols) != width:
            raise ConllFormatError(f"ragged row: {len(cols)} columns, sentence has {width}",
                                   lineno, source)
        rows.append((lineno, cols))
    flush()
    return sentences


def _build_sentence(rows, source, start) -> Sentence:
    tokens = []
    for k, (lineno, c) in enumerate(rows, start=1):
        tid = _int(c[0], "ID", lineno, source)
        if tid != k:
            raise ConllFormatError(f"token id {tid} out of sequence (expected {k})", lineno, source)
        head = _int(c[8], "HEAD", lineno, source)
        phead = _int(c[9], "PHEAD", lineno, source, allow_absent=True)
        fill = c[12]
        if fill not in ("Y", ABSENT):
            raise ConllFormatError(f"FILLPRED must be 'Y' or '_', got {fill!r}", lineno, source)
        pred = _opt(c[13])
        if (fill == "Y") != (pred is not None):
            raise ConllFormatError("PRED must be given exactly when FILLPRED is Y", lineno, source)
        tokens.append(Token(tid, c[1], _opt(c[2]), _opt(c[3]), _opt(c[4]), _opt(c[5]),
                            _opt(c[6]), _opt(c[7]), head, phead, _opt(c[10]), _opt(c[11]),
                            fill == "Y", pred, [_opt(a) for a in c[14:]]))
    m = len(tokens)
    n_pred = sum(t.fillpred for t in tokens)
    n_cols = len(rows[0][1]) - N_FIXED_COLUMNS
    if n_cols != n_pred:
        raise ConllFormatError(f"{n_cols} APRED columns but {n_pred} predicates", start, source)
    for (lineno, _), t in zip(rows, tokens):
        if not 0 <= t.head <= m or t.head == t.id:
            raise ConllFormatError(f"HEAD {t.head} invalid for token {t.id}", lineno, source)
    return Sentence(tokens)


def read_conll09(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return parse_conll09(fh, source=str(path))


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


@dataclass
class Frame:
    """Predicted structure for one predicate: its sense and per-token labels."""

    sense: str
    labels: list  # NO_ARG for no argument


def serialize_conll09(sentences: Sequence[Sentence],
                      predictions: Optional[Mapping] = None) -> str:
    """Render sentences as CoNLL-2009 text.

    ``predictions`` maps ``(sentence_index, frame)`` to a ``Frame``; when it
    is None the gold PRED/APRED columns are written back. Every sentence is
    followed by one blank line and lines end with ``\\n``.
    """
    out = io.StringIO()
    for si, sent in enumerate(sentences):
        preds = sent.predicate_positions
        frames = []
        for fi, pid in enumerate(preds):
            if predictions is None:
                frames.append(None)
                continue
            fr = predictions.get((si, fi))
            if fr is None:
                raise KeyError(f"missing prediction for sentence {si}, predicate {pid}")
            if len(fr.labels) != len(sent):
                raise ValueError(f"prediction for sentence {si} frame {fi} has "
                                 f"{len(fr.labels)} labels for {len(sent)} tokens")
            frames.append(fr)
        frame_of = {pid: fi for fi, pid in enumerate(preds)}
        for t in sent.tokens:
            pred = t.pred
            if t.fillpred and frames[frame_of[t.id]] is not None:
                pred = frames[frame_of[t.id]].sense
            cols = [str(t.id), t.form, _fmt(t.lemma), _fmt(t.plemma), _fmt(t.pos), _fmt(t.ppos),
                    _fmt(t.feat), _fmt(t.pfeat), str(t.head), _fmt(t.phead), _fmt(t.deprel),
                    _fmt(t.pdeprel), "Y" if t.fillpred else ABSENT, _fmt(pred)]
            for fi in range(len(preds)):
                if frames[fi] is None:
                    cols.append(_fmt(t.apreds[fi]))
                else:
                    lab = frames[fi].labels[t.id - 1]
                    cols.append(ABSENT if lab in (None, NO_ARG) else lab)
            out.write("\t".join(cols))
            out.write("\n")
        out.write("\n")
    return out.getvalue()


def write_conll09(path, sentences, predictions=None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_conll09(sentences, predictions))


# --------------------------------------------------------------------------
# trees
# --------------------------------------------------------------------------


def build_tree(sentence: Sentence, use_predicted: bool = False, fallback: bool = False) -> DepTree:
    """Validated dependency tree from HEAD/DEPREL (or PHEAD/PDEPREL).

    With ``fallback`` (meant for predicted syntax) an ill-formed tree is
    replaced by a left-branching chain labelled ``UNK_REL`` and a warning
    is logged instead of raising.
    """
    m = len(sentence)
    heads = [0] * (m + 1)
    rels = [None] * (m + 1)
    for t in sentence.tokens:
        h = t.phead if use_predicted else t.head
        heads[t.id] = -1 if h is None else h
        rels[t.id] = (t.pdeprel if use_predicted else t.deprel) or UNK_REL
    try:
        return tree_from_heads(heads, rels)
    except TreeError as err:
        if not fallback:
            raise
        logger.warning("malformed predicted tree, using left-branching chain: %s", err)
        return chain_tree(m)


def chain_tree(m: int) -> DepTree:
    heads = [0] + [k - 1 for k in range(1, m + 1)]
    return tree_from_heads(heads, [None] + [UNK_REL] * m)


def tree_from_heads(heads: Sequence[int], rels: Sequence) -> DepTree:
    m = len(heads) - 1
    bad = [k for k in range(1, m + 1) if not 0 <= heads[k] <= m]
    if bad:
        raise TreeError("head out of range", bad)
    loops = [k for k in range(1, m + 1) if heads[k] == k]
    if loops:
        raise TreeError("self-loop", loops)
    roots = [k for k in range(1, m + 1) if heads[k] == 0]
    if len(roots) != 1:
        raise TreeError("expected exactly one root" if roots else "no root", roots or range(1, m + 1))
    children = [[] for _ in range(m + 1)]
    for k in range(1, m + 1):
        children[heads[k]].append(k)
    seen = set()
    stack = [0]
    while stack:
        k = stack.pop()
        for c in children[k]:
            seen.add(c)
            stack.append(c)
    unreachable = [k for k in range(1, m + 1) if k not in seen]
    if unreachable:
        raise TreeError("cycle or unreachable tokens", unreachable)
    return DepTree(np.asarray(heads, dtype=np.int64), children, list(rels))


# --------------------------------------------------------------------------
# instances
# --------------------------------------------------------------------------


def build_instances(sentences: Sequence[Sentence]) -> list:
    """One instance per (sentence, predicate) with that predicate's labels."""
    out = []
    for si, sent in enumerate(sentences):
        for fi, pid in enumerate(sent.predicate_positions):
            labels = [t.apreds[fi] or NO_ARG for t in sent.tokens]
            out.append(SrlInstance(sent, si, pid, fi, labels, sent.tokens[pid - 1].pred))
    return out


def iter_frames(instances: Iterable[SrlInstance]):
    for inst in instances:
        yield (inst.sentence_index, inst.frame), Frame(inst.sense, list(inst.labels))
