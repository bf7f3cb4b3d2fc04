"""The full tagger: embeddings -> BiLSTM -> Tree-LSTM -> adaptive CNN -> highway MLP,
plus the predicate-sense head that reuses the embeddings and BiLSTM."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .config import TrainConfig
from .conll import DepTree, SrlInstance, build_tree
from .convolution import ConvStack
from .encoder import BiLstmStack, EmbeddingDims, TreeLstm, WordRepresentation, relation_ids
from .head import HighwayMlp, nll_loss
from .params import ParamStore
from .vocab import Vocabulary, predicate_lemma


@dataclass
class Forward:
    probs: Tensor  # (m, |A|)
    sense_probs: Optional[Tensor]  # over candidate senses, None when only one candidate
    candidates: list  # sense strings aligned with sense_probs (or the single answer)


class SrlModel:
    def __init__(self, config: TrainConfig, vocab: Vocabulary,
                 pretrained: Optional[np.ndarray] = None, contextual_dim: int = 0,
                 pad_length: Optional[int] = None):
        config.validate()
        self.config = config
        self.vocab = vocab
        self.store = ParamStore(config.seed, config.init_std)
        dims = EmbeddingDims(word=config.word_dim, lemma=config.lemma_dim,
                             pretrained=0 if pretrained is None else pretrained.shape[1],
                             pos=config.pos_dim, flag=config.flag_dim, contextual=contextual_dim)
        self.embed = WordRepresentation(self.store, vocab, dims, pretrained)
        self.bilstm = BiLstmStack(self.store, dims.total, config.lstm_hidden, config.lstm_layers)
        d = self.bilstm.output_dim
        self.tree = None
        if config.use_tree:
            d_tree = config.tree_hidden or d
            self.tree = TreeLstm(self.store, d, d_tree, len(vocab.deprels))
            d = d_tree
        self.encoder_dim = d
        self.conv_config = config.conv_config(pad_length)
        self.conv = ConvStack(self.store, d, self.conv_config)
        head_in = self.conv.n_out + (d if config.mlp_input == "concat" else 0)
        self.mlp = HighwayMlp(self.store, head_in, config.mlp_hidden, len(vocab.labels),
                              config.mlp_layers, prefix="mlp")
        self.sense_mlp = None
        if len(vocab.senses):
            self.sense_mlp = HighwayMlp(self.store, self.bilstm.output_dim, config.mlp_hidden,
                                        len(vocab.senses), config.sense_mlp_layers, prefix="sense_mlp")

    @property
    def params(self) -> list:
        return list(self.store)

    @property
    def hash_seeds(self) -> dict:
        return {gen_name: gen.seed for b in self.conv.blocks
                for gen_name, gen in ((f"{b.name}.g{i}", g) for i, g in enumerate(b.generators))
                if hasattr(gen, "seed")}

    def tree_for(self, inst: SrlInstance) -> DepTree:
        return build_tree(inst.sentence, use_predicted=self.config.predicted_syntax,
                          fallback=self.config.predicted_syntax)

    def sense_candidates(self, inst: SrlInstance) -> list:
        tok = inst.sentence.tokens[inst.predicate - 1]
        lemma = predicate_lemma(tok)
        cands = self.vocab.lemma_senses.get(lemma)
        if not cands:
            return [f"{lemma}.01"]
        return list(cands)

    def encode(self, inst: SrlInstance, contextual: Optional[np.ndarray] = None):
        x = self.embed(inst, contextual)
        v = self.bilstm(x)
        h = v
        if self.tree is not None:
            tree = self.tree_for(inst)
            h = self.tree(v, tree, relation_ids(tree, self.vocab))
        return v, h

    def forward(self, inst: SrlInstance, contextual: Optional[np.ndarray] = None) -> Forward:
        v, h = self.encode(inst, contextual)
        feats = self.conv(h)
        if self.config.mlp_input == "concat":
            feats = ag.concat([feats, h], axis=1)
        probs = self.mlp(feats)
        cands = self.sense_candidates(inst)
        sense_probs = None
        if len(cands) > 1 and self.sense_mlp is not None:
            ids = np.array([self.vocab.senses.get(c) for c in cands])
            vp = ag.take(v, inst.predicate - 1)
            logits = self.sense_mlp.logits(vp)
            sense_probs = ag.softmax(ag.take(logits, ids))
        return Forward(probs, sense_probs, cands)

    def loss(self, inst: SrlInstance, contextual: Optional[np.ndarray] = None) -> Tensor:
        out = self.forward(inst, contextual)
        gold = np.array([self.vocab.labels.get(l) for l in inst.labels])
        total = nll_loss(out.probs, gold)
        if out.sense_probs is not None and inst.sense in out.candidates:
            total = ag.add(total, nll_loss(out.sense_probs, [out.candidates.index(inst.sense)]))
        return total

    def predict(self, inst: SrlInstance, contextual: Optional[np.ndarray] = None):
        """(per-token labels, sense) for one instance, by argmax."""
        out = self.forward(inst, contextual)
        ids = out.probs.value.argmax(axis=1)
        labels = [self.vocab.labels[i] for i in ids]
        if out.sense_probs is None:
            sense = out.candidates[0]
        else:
            sense = out.candidates[int(out.sense_probs.value.argmax())]
        return labels, sense
