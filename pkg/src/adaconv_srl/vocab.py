"""Vocabularies, pretrained word vectors and contextual-vector sidecars."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .conll import NO_ARG, UNK_REL, ConllFormatError, Sentence

PAD = "<pad>"
UNK = "<unk>"


class Index:
    """Bijective string <-> int table with optional reserved specials."""

    def __init__(self, specials: Sequence[str] = (PAD, UNK)):
        self.specials = tuple(specials)
        self.itos: list = []
        self.stoi: dict = {}
        for s in self.specials:
            self.add(s)

    def add(self, s: str) -> int:
        i = self.stoi.get(s)
        if i is None:
            i = self.stoi[s] = len(self.itos)
            self.itos.append(s)
        return i

    def get(self, s: Optional[str]) -> int:
        i = self.stoi.get(s)
        if i is None:
            for unk in (UNK, UNK_REL):
                if unk in self.stoi:
                    return self.stoi[unk]
            raise KeyError(s)
        return i

    def __getitem__(self, i: int) -> str:
        return self.itos[i]

    def __contains__(self, s) -> bool:
        return s in self.stoi

    def __len__(self) -> int:
        return len(self.itos)

    def to_json(self) -> dict:
        return {"specials": list(self.specials), "itos": self.itos}

    @classmethod
    def from_json(cls, d: dict) -> "Index":
        ix = cls(specials=())
        ix.specials = tuple(d["specials"])
        for s in d["itos"]:
            ix.add(s)
        return ix


@dataclass
class Vocabulary:
    words: Index = field(default_factory=Index)
    lemmas: Index = field(default_factory=Index)
    pos: Index = field(default_factory=Index)
    deprels: Index = field(default_factory=lambda: Index((PAD, UNK_REL)))
    labels: Index = field(default_factory=lambda: Index((NO_ARG,)))
    senses: Index = field(default_factory=lambda: Index(()))
    # lemma -> sorted list of senses seen with it in training
    lemma_senses: dict = field(default_factory=dict)

    @classmethod
    def build(cls, sentences: Iterable[Sentence]) -> "Vocabulary":
        v = cls()
        for sent in sentences:
            for t in sent.tokens:
                v.words.add(t.form)
                v.lemmas.add(t.lemma or t.form)
                v.pos.add(t.pos or UNK)
                v.deprels.add(t.deprel or UNK_REL)
                for a in t.apreds:
                    if a is not None:
                        v.labels.add(a)
                if t.fillpred:
                    v.senses.add(t.pred)
                    v.lemma_senses.setdefault(predicate_lemma(t), set()).add(t.pred)
        v.lemma_senses = {k: sorted(s) for k, s in sorted(v.lemma_senses.items())}
        return v

    def to_json(self) -> dict:
        return {name: getattr(self, name).to_json()
                for name in ("words", "lemmas", "pos", "deprels", "labels", "senses")} | {
            "lemma_senses": self.lemma_senses}

    @classmethod
    def from_json(cls, d: dict) -> "Vocabulary":
        parts = {name: Index.from_json(d[name])
                 for name in ("words", "lemmas", "pos", "deprels", "labels", "senses")}
        return cls(**parts, lemma_senses={k: list(s) for k, s in d["lemma_senses"].items()})

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def predicate_lemma(token) -> str:
    """Lemma used for sense candidates (falls back to the sense stem, then form)."""
    if token.lemma:
        return token.lemma
    if token.pred and "." in token.pred:
        return token.pred.rsplit(".", 1)[0]
    return token.form.lower()


# --------------------------------------------------------------------------
# pretrained embeddings
# --------------------------------------------------------------------------


@dataclass
class EmbeddingTable:
    dim: int
    vectors: dict
    unk: np.ndarray

    def lookup(self, word: str) -> np.ndarray:
        v = self.vectors.get(word)
        if v is None:
            v = self.vectors.get(word.lower())
        return self.unk if v is None else v

    def matrix(self, index: Index) -> np.ndarray:
        """Rows aligned with ``index``; PAD is zero, everything else via lookup."""
        out = np.zeros((len(index), self.dim))
        for i, w in enumerate(index.itos):
            if w == PAD:
                continue
            out[i] = self.unk if w == UNK else self.lookup(w)
        return out


def parse_embeddings(lines: Iterable[str], keep: Optional[set] = None,
                     source: str = "<stream>") -> EmbeddingTable:
    dim = None
    total = None
    count = 0
    vectors = {}
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        word, vals = parts[0], parts[1:]
        if dim is None:
            dim = len(vals)
            if dim == 0:
                raise ConllFormatError("embedding line without values", lineno, source)
            total = np.zeros(dim)
        elif len(vals) != dim:
            raise ConllFormatError(f"embedding dimension {len(vals)} != {dim}", lineno, source)
        try:
            vec = np.array([float(x) for x in vals])
        except ValueError:
            raise ConllFormatError("non-numeric embedding value", lineno, source) from None
        total += vec
        count += 1
        if keep is None or word in keep or word.lower() in keep:
            vectors[word] = vec
    if dim is None:
        raise ConllFormatError("empty embedding file", None, source)
    if keep is not None:
        lowered = {w.lower() for w in keep}
        vectors = {w: v for w, v in vectors.items() if w in keep or w in lowered}
    return EmbeddingTable(dim, vectors, total / count)


def load_pretrained_embeddings(path, vocabulary: Optional[Vocabulary] = None) -> EmbeddingTable:
    """Read ``word v1 .. vd`` lines; UNK is the mean of every vector in the file."""
    keep = None
    if vocabulary is not None:
        keep = set(vocabulary.words.itos)
    with open(path, encoding="utf-8") as fh:
        return parse_embeddings(fh, keep, source=str(path))


# --------------------------------------------------------------------------
# contextual vectors
# --------------------------------------------------------------------------


@dataclass
class ContextualVectors:
    """Precomputed per-token vectors, one (m x dim) array per sentence."""

    dim: int
    by_sentence: list

    def for_sentence(self, sentence_index: int) -> np.ndarray:
        return self.by_sentence[sentence_index]


def load_contextual_vectors(path, sentences: Sequence[Sentence]) -> ContextualVectors:
    """Read a ``dim=<d> tokens=<N>`` sidecar aligned to ``sentences``.

    Body lines are ``sidx tidx v1 .. vd`` with 0-based sentence index and
    1-based token id, in corpus order.
    """
    with open(path, encoding="utf-8") as fh:
        return parse_contextual_vectors(fh, sentences, source=str(path))


def parse_contextual_vectors(lines: Iterable[str], sentences: Sequence[Sentence],
                             source: str = "<stream>") -> ContextualVectors:
    it = iter(lines)
    header = next(it, "").split()
    try:
        fields = dict(kv.split("=", 1) for kv in header)
        dim, n_tokens = int(fields["dim"]), int(fields["tokens"])
    except (ValueError, KeyError):
        raise ConllFormatError("bad sidecar header, expected 'dim=<d> tokens=<N>'", 1, source) from None
    expected = sum(len(s) for s in sentences)
    if n_tokens != expected:
        raise ConllFormatError(f"sidecar has {n_tokens} tokens, corpus has {expected}", 1, source)
    out = [np.zeros((len(s), dim)) for s in sentences]
    order = ((si, t.id) for si, s in enumerate(sentences) for t in s.tokens)
    seen = 0
    for lineno, line in enumerate(it, start=2):
        parts = line.split()
        if not parts:
            continue
        want = next(order, None)
        if want is None:
            raise ConllFormatError("more vectors than corpus tokens", lineno, source)
        try:
            si, ti = int(parts[0]), int(parts[1])
            vec = [float(x) for x in parts[2:]]
        except (ValueError, IndexError):
            raise ConllFormatError("malformed sidecar line", lineno, source) from None
        if (si, ti) != want:
            raise ConllFormatError(f"expected token {want}, got {(si, ti)}", lineno, source)
        if len(vec) != dim:
            raise ConllFormatError(f"vector width {len(vec)} != {dim}", lineno, source)
        out[si][ti - 1] = vec
        seen += 1
    if seen != expected:
        raise ConllFormatError(f"sidecar lists {seen} vectors, corpus has {expected} tokens", None, source)
    return ContextualVectors(dim, out)
