"""Training loop, evaluation, prediction and predicate disambiguation."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autograd as ag
from .checkpoint import CheckpointError, ModelCheckpoint
from .config import TrainConfig
from .conll import Frame, SrlInstance, build_instances, read_conll09, serialize_conll09
from .model import SrlModel
from .scoring import SrlReport, score_frames
from .vocab import ContextualVectors, Vocabulary, load_contextual_vectors, load_pretrained_embeddings

logger = logging.getLogger(__name__)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    precision: float
    recall: float
    f1: float

    def line(self) -> str:
        return (f"{self.epoch}\t{self.train_loss:.6f}\t{self.precision:.6f}\t"
                f"{self.recall:.6f}\t{self.f1:.6f}")


@dataclass
class TrainResult:
    checkpoint: ModelCheckpoint
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_f1: float = 0.0
    seconds: float = 0.0
    model: Optional[SrlModel] = None

    @property
    def log_lines(self) -> list:
        return [m.line() for m in self.history]

    @property
    def losses(self) -> list:
        return [m.train_loss for m in self.history]


def filter_long(sentences: Sequence, max_len: int) -> list:
    keep = [s for s in sentences if len(s) <= max_len]
    if len(keep) != len(sentences):
        logger.warning("rejected %d sentences longer than %d tokens",
                       len(sentences) - len(keep), max_len)
    return keep


def make_batches(instances: Sequence[SrlInstance], batch_size: int,
                 rng: np.random.Generator) -> list:
    """Length-grouped batches in a seeded random order."""
    keys = rng.random(len(instances))
    order = sorted(range(len(instances)), key=lambda i: (instances[i].m, keys[i]))
    batches = [order[k:k + batch_size] for k in range(0, len(order), batch_size)]
    perm = rng.permutation(len(batches))
    return [[instances[i] for i in batches[b]] for b in perm]


def _ctx(ctx: Optional[ContextualVectors], inst: SrlInstance):
    return None if ctx is None else ctx.for_sentence(inst.sentence_index)


def train(config: TrainConfig, train_sentences=None, dev_sentences=None,
          train_contextual: Optional[ContextualVectors] = None,
          dev_contextual: Optional[ContextualVectors] = None,
          log_path=None) -> TrainResult:
    """Mini-batch Adam training; keeps the parameters of the best dev epoch.

    Sentences default to ``config.train`` / ``config.dev``; without a dev
    set, model selection uses the training data.
    """
    config.validate()
    started = time.perf_counter()
    if train_sentences is None:
        train_sentences = read_conll09(config.train)
    if dev_sentences is None and config.dev:
        dev_sentences = read_conll09(config.dev)
    if train_contextual is None and config.contextual:
        train_contextual = load_contextual_vectors(config.contextual, train_sentences)
    if dev_contextual is None and config.dev_contextual and dev_sentences is not None:
        dev_contextual = load_contextual_vectors(config.dev_contextual, dev_sentences)
    kept = filter_long(train_sentences, config.max_len)
    kept_ids = {id(s) for s in kept}
    instances = [i for i in build_instances(train_sentences) if id(i.sentence) in kept_ids]
    if dev_sentences is None:
        dev_sentences = kept
        if train_contextual is not None:
            dev_contextual = ContextualVectors(train_contextual.dim, [
                train_contextual.for_sentence(i) for i, s in enumerate(train_sentences) if id(s) in kept_ids])

    vocab = Vocabulary.build(kept)
    pretrained = None
    if config.embeddings:
        pretrained = load_pretrained_embeddings(config.embeddings, vocab).matrix(vocab.words)
    ctx_dim = train_contextual.dim if train_contextual is not None else 0
    pad_length = config.pad_length or max((len(s) for s in kept), default=1)
    model = SrlModel(config, vocab, pretrained, ctx_dim, pad_length)
    params = model.store.trainable()
    adam = ag.AdamState.for_params(params, lr=config.lr)
    rng = np.random.Generator(np.random.PCG64(config.seed))

    best = ModelCheckpoint.from_model(model)
    result = TrainResult(best, model=model)
    stale = 0
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, config.epochs + 1):
            total = 0.0
            for batch in make_batches(instances, config.batch_size, rng):
                for inst in batch:
                    with ag.Tape() as tape:
                        loss = model.loss(inst, _ctx(train_contextual, inst))
                        scaled = ag.scale(loss, 1.0 / len(batch))
                    ag.backward(scaled, tape)
                    total += loss.item()
                ag.adam_step(params, adam)
            report = evaluate_model(model, dev_sentences, dev_contextual)
            m = EpochMetrics(epoch, total / max(len(instances), 1),
                             report.precision, report.recall, report.f1)
            result.history.append(m)
            logger.info("epoch %s", m.line())
            if log_fh:
                log_fh.write(m.line() + "\n")
                log_fh.flush()
            if m.f1 > result.best_f1 or epoch == 1:
                result.best_f1, result.best_epoch = m.f1, epoch
                result.checkpoint = ModelCheckpoint.from_model(model)
                stale = 0
            else:
                stale += 1
            if config.stop_at_f1 and m.f1 >= config.stop_at_f1:
                break
            if stale >= config.patience:
                logger.info("early stop after %d epochs without dev improvement", stale)
                break
    finally:
        if log_fh:
            log_fh.close()
    result.seconds = time.perf_counter() - started
    return result


# --------------------------------------------------------------------------
# inference
# --------------------------------------------------------------------------


def _as_model(model_or_ckpt) -> SrlModel:
    if isinstance(model_or_ckpt, ModelCheckpoint):
        return model_or_ckpt.build()
    return model_or_ckpt


def _check_contextual(model: SrlModel, ctx: Optional[ContextualVectors]) -> None:
    need = model.embed.dims.contextual
    if need and (ctx is None or ctx.dim != need):
        raise CheckpointError(f"model expects contextual vectors of width {need}")


def predict_frames(model, sentences, contextual: Optional[ContextualVectors] = None) -> dict:
    """``{(sentence, frame): Frame}`` with argmax labels and senses."""
    model = _as_model(model)
    _check_contextual(model, contextual)
    out = {}
    for inst in build_instances(sentences):
        labels, sense = model.predict(inst, _ctx(contextual, inst))
        out[(inst.sentence_index, inst.frame)] = Frame(sense, labels)
    return out


def evaluate_model(model, sentences, contextual=None) -> SrlReport:
    gold = {(i.sentence_index, i.frame): Frame(i.sense, i.labels) for i in build_instances(sentences)}
    return score_frames(gold, predict_frames(model, sentences, contextual))


def evaluate(checkpoint: ModelCheckpoint, sentences, contextual=None) -> SrlReport:
    """P/R/F1 (overall and per label) of ``checkpoint`` on ``sentences``."""
    return evaluate_model(checkpoint.build(), sentences, contextual)


def predict(checkpoint: ModelCheckpoint, sentences, contextual=None) -> str:
    """CoNLL-2009 text with predicted senses and argument columns."""
    return serialize_conll09(sentences, predict_frames(checkpoint.build(), sentences, contextual))


def disambiguate_predicates(model, sentences, contextual=None) -> dict:
    """``{(sentence, frame): sense}`` from the BiLSTM + sense head only."""
    model = _as_model(model)
    _check_contextual(model, contextual)
    out = {}
    for inst in build_instances(sentences):
        cands = model.sense_candidates(inst)
        if len(cands) == 1 or model.sense_mlp is None:
            out[(inst.sentence_index, inst.frame)] = cands[0]
            continue
        x = model.embed(inst, _ctx(contextual, inst))
        v = model.bilstm(x)
        ids = np.array([model.vocab.senses.get(c) for c in cands])
        logits = model.sense_mlp.logits(ag.take(v, inst.predicate - 1)).value[ids]
        out[(inst.sentence_index, inst.frame)] = cands[int(np.argmax(logits))]
    return out
