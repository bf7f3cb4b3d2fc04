"""Labeled semantic precision/recall/F1 over argument and sense units."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .conll import NO_ARG, Frame, SrlInstance

SENSE_LABEL = "<sense>"


class CorpusMismatchError(ValueError):
    pass


@dataclass
class Score:
    correct: int = 0
    predicted: int = 0
    gold: int = 0

    @property
    def precision(self) -> float:
        return self.correct / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return self.correct / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def as_dict(self) -> dict:
        return {"correct": self.correct, "predicted": self.predicted, "gold": self.gold,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class SrlReport:
    overall: Score
    per_label: dict = field(default_factory=dict)

    @property
    def precision(self) -> float:
        return self.overall.precision

    @property
    def recall(self) -> float:
        return self.overall.recall

    @property
    def f1(self) -> float:
        return self.overall.f1

    def as_dict(self) -> dict:
        return {"overall": self.overall.as_dict(),
                "per_label": {k: v.as_dict() for k, v in sorted(self.per_label.items())}}


def _units(key, frame: Frame):
    yield (key, 0, SENSE_LABEL, frame.sense)
    for tid, lab in enumerate(frame.labels, start=1):
        if lab not in (None, NO_ARG):
            yield (key, tid, lab, lab)


def score_frames(gold: Mapping, predicted: Mapping) -> SrlReport:
    """Score ``{(sentence, frame): Frame}`` predictions against gold.

    Units are one per labeled argument token plus one per predicate sense.
    """
    if set(gold) != set(predicted):
        raise CorpusMismatchError("gold and predicted cover different predicates")
    g_units, p_units = Counter(), Counter()
    for key, fr in gold.items():
        pf = predicted[key]
        if len(pf.labels) != len(fr.labels):
            raise CorpusMismatchError(f"frame {key}: {len(pf.labels)} vs {len(fr.labels)} tokens")
        g_units.update(_units(key, fr))
        p_units.update(_units(key, pf))
    per_label: dict = {}
    overall = Score()
    for unit, n in g_units.items():
        s = per_label.setdefault(unit[2], Score())
        s.gold += n
        overall.gold += n
    for unit, n in p_units.items():
        s = per_label.setdefault(unit[2], Score())
        s.predicted += n
        overall.predicted += n
        hit = min(n, g_units.get(unit, 0))
        s.correct += hit
        overall.correct += hit
    return SrlReport(overall, per_label)


def score_srl(gold: Sequence[SrlInstance], predicted: Sequence[SrlInstance]) -> SrlReport:
    """Score two instance lists over the same (sentence, predicate) pairs."""
    gmap = {(i.sentence_index, i.frame): Frame(i.sense, i.labels) for i in gold}
    pmap = {(i.sentence_index, i.frame): Frame(i.sense, i.labels) for i in predicted}
    if len(gmap) != len(gold) or len(pmap) != len(predicted):
        raise CorpusMismatchError("duplicate (sentence, predicate) pairs")
    return score_frames(gmap, pmap)
