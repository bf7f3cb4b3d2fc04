"""Toy CoNLL-2009 corpus: template sentences with fixed argument patterns.

Used by the tests and the overfit/sweep experiments so nothing depends on
licensed data. Every sentence has a verb root; a second coordinated verb
shares the subject. Verb senses depend on the object type, so sense
disambiguation needs context.
"""

from __future__ import annotations

import numpy as np

from .conll import Sentence, Token, serialize_conll09

PERSONS = ["John", "Mary", "teacher", "doctor", "child", "farmer", "pilot", "nurse"]
THINGS = ["book", "cake", "car", "letter", "song", "house", "boat", "lamp"]
PLACES = ["park", "city", "school", "kitchen", "garden"]
TIMES = ["yesterday", "today", "tonight"]
ADJS = ["old", "red", "big", "small", "new"]
DETS = ["the", "a"]
PREPS = ["in", "at", "near"]
# lemma -> (present, past, senses by object kind)
VERBS = {
    "make": ("makes", "made", {"thing": "make.01", "person": "make.02"}),
    "take": ("takes", "took", {"thing": "take.01", "person": "take.03"}),
    "see": ("sees", "saw", {"thing": "see.01", "person": "see.01"}),
    "write": ("writes", "wrote", {"thing": "write.01", "person": "write.02"}),
    "find": ("finds", "found", {"thing": "find.01", "person": "find.02"}),
}
DITRANSITIVE = {"give": ("gives", "gave", "give.01"), "send": ("sends", "sent", "send.01")}
INTRANSITIVE = {"run": ("runs", "ran", "run.02"), "sleep": ("sleeps", "slept", "sleep.01")}


class _Builder:
    def __init__(self):
        self.rows = []  # [form, lemma, pos, head, deprel]

    def add(self, form, lemma, pos, head=None, deprel=None) -> int:
        self.rows.append([form, lemma, pos, head, deprel])
        return len(self.rows)

    def set_head(self, tid, head, deprel):
        self.rows[tid - 1][3] = head
        self.rows[tid - 1][4] = deprel


def _noun_phrase(b: _Builder, rng, kind: str) -> int:
    words = PERSONS if kind == "person" else THINGS if kind == "thing" else PLACES
    noun = words[rng.integers(len(words))]
    proper = noun[0].isupper()
    mods = []
    if not proper:
        mods.append(b.add(DETS[rng.integers(2)], None, "DT"))
        if rng.random() < 0.4:
            mods.append(b.add(ADJS[rng.integers(len(ADJS))], None, "JJ"))
    head = b.add(noun, None, "NNP" if proper else "NN")
    for t in mods:
        b.set_head(t, head, "NMOD")
    return head


def _sentence(rng) -> tuple:
    """Returns (builder, frames) where frames = [(verb tid, sense, {tid: label})]."""
    b = _Builder()
    frames = []
    subj = _noun_phrase(b, rng, "person")
    past = rng.random() < 0.5
    r = rng.random()
    args = {subj: "A0"}
    if r < 0.6:
        lemma = list(VERBS)[rng.integers(len(VERBS))]
        pres, pst, senses = VERBS[lemma]
        verb = b.add(pst if past else pres, lemma, "VBD" if past else "VBZ", 0, "ROOT")
        kind = "person" if rng.random() < 0.35 else "thing"
        obj = _noun_phrase(b, rng, kind)
        b.set_head(obj, verb, "OBJ")
        args[obj] = "A1"
        sense = senses[kind]
    elif r < 0.8:
        lemma = list(DITRANSITIVE)[rng.integers(len(DITRANSITIVE))]
        pres, pst, sense = DITRANSITIVE[lemma]
        verb = b.add(pst if past else pres, lemma, "VBD" if past else "VBZ", 0, "ROOT")
        rec = _noun_phrase(b, rng, "person")
        b.set_head(rec, verb, "IOBJ")
        obj = _noun_phrase(b, rng, "thing")
        b.set_head(obj, verb, "OBJ")
        args[rec] = "A2"
        args[obj] = "A1"
    else:
        lemma = list(INTRANSITIVE)[rng.integers(len(INTRANSITIVE))]
        pres, pst, sense = INTRANSITIVE[lemma]
        verb = b.add(pst if past else pres, lemma, "VBD" if past else "VBZ", 0, "ROOT")
    b.set_head(subj, verb, "SBJ")
    if rng.random() < 0.5:
        prep = b.add(PREPS[rng.integers(len(PREPS))], None, "IN", verb, "LOC")
        place = _noun_phrase(b, rng, "place")
        b.set_head(place, prep, "PMOD")
        args[prep] = "AM-LOC"
    if rng.random() < 0.35:
        tmp = b.add(TIMES[rng.integers(len(TIMES))], None, "RB", verb, "TMP")
        args[tmp] = "AM-TMP"
    frames.append((verb, sense, args))
    if rng.random() < 0.4:
        cc = b.add("and", None, "CC", verb, "COORD")
        lemma2 = list(VERBS)[rng.integers(len(VERBS))]
        pres, pst, senses = VERBS[lemma2]
        verb2 = b.add(pst if past else pres, lemma2, "VBD" if past else "VBZ", cc, "CONJ")
        kind = "person" if rng.random() < 0.35 else "thing"
        obj2 = _noun_phrase(b, rng, kind)
        b.set_head(obj2, verb2, "OBJ")
        frames.append((verb2, senses[kind], {subj: "A0", obj2: "A1"}))
    return b, frames


def generate_sentences(n: int, seed: int = 0) -> list:
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for _ in range(n):
        b, frames = _sentence(rng)
        pred_of = {tid: sense for tid, sense, _ in frames}
        tokens = []
        for tid, (form, lemma, pos, head, deprel) in enumerate(b.rows, start=1):
            lem = lemma or form.lower()
            tokens.append(Token(
                id=tid, form=form, lemma=lem, plemma=lem, pos=pos, ppos=pos, feat=None, pfeat=None,
                head=head, phead=head, deprel=deprel, pdeprel=deprel,
                fillpred=tid in pred_of, pred=pred_of.get(tid),
                apreds=[args.get(tid) for _, _, args in frames]))
        out.append(Sentence(tokens))
    return out


def generate_corpus(n: int, seed: int = 0) -> str:
    return serialize_conll09(generate_sentences(n, seed))
