"""Transformer encoder for word-level C/E/O tagging and classification.

The input embedding is a sum of three parts: subword identity, subword
position, and the index of the word the subword belongs to. A token
head scores every subword over the three tags (only first subwords are
read out; continuation subwords are ignored), and a sequence head scores
the masked mean of the encoder output for the classify task. Model
artifacts live in a plain directory: config.json, vocab.json, weights.pt.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import NamedTuple

import torch
from torch import nn

from .subwords import SubwordVocab

LABELS = ("C", "E", "O")
CLASSES = ("non-adas", "adas")


class ModelError(RuntimeError):
    """Raised when model artifacts are missing or inconsistent."""


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    ffn: int = 128
    dropout: float = 0.1
    max_positions: int = 512
    max_words: int = 128

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ModelError(f"malformed model config: {exc}") from exc


class TaggerNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        d = config.d_model
        self.token_embedding = nn.Embedding(config.vocab_size, d)
        self.position_embedding = nn.Embedding(config.max_positions, d)
        self.word_embedding = nn.Embedding(config.max_words, d)
        layer = nn.TransformerEncoderLayer(
            d_model=d, nhead=config.n_heads,
            dim_feedforward=config.ffn, dropout=config.dropout,
            activation="gelu", batch_first=True,
        )
        # the nested-tensor fast path is numerically padding-dependent
        self.encoder = nn.TransformerEncoder(layer, config.n_layers,
                                             enable_nested_tensor=False)
        self.tag_head = nn.Linear(d, len(LABELS))
        self.sequence_head = nn.Linear(d, len(CLASSES))

    def forward(self, ids: torch.Tensor, word_ids: torch.Tensor,
                pad_mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """ids/word_ids (B, T) long, pad_mask (B, T) bool, True on padding."""
        positions = torch.arange(ids.shape[1], device=ids.device)
        positions = positions.clamp(max=self.config.max_positions - 1)
        words = word_ids.clamp(max=self.config.max_words - 1)
        hidden = (self.token_embedding(ids)
                  + self.position_embedding(positions).unsqueeze(0)
                  + self.word_embedding(words))
        hidden = self.encoder(hidden, src_key_padding_mask=pad_mask)
        tag_logits = self.tag_head(hidden)
        keep = (~pad_mask).unsqueeze(-1).to(hidden.dtype)
        pooled = (hidden * keep).sum(dim=1) / keep.sum(dim=1).clamp(min=1.0)
        cls_logits = self.sequence_head(pooled)
        return tag_logits, cls_logits


class Bundle(NamedTuple):
    """Everything needed to answer protocol requests."""

    model: TaggerNet
    vocab: SubwordVocab
    config: ModelConfig


def new_bundle(vocab: SubwordVocab, seed: int = 0, **overrides) -> Bundle:
    config = ModelConfig(vocab_size=len(vocab))
    if overrides:
        config = replace(config, **overrides)
    torch.manual_seed(seed)
    model = TaggerNet(config)
    return Bundle(model, vocab, config)


def save_bundle(model_dir, bundle: Bundle) -> None:
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    (model_dir / "config.json").write_text(
        json.dumps(bundle.config.to_dict(), indent=2) + "\n", encoding="utf-8")
    (model_dir / "vocab.json").write_text(
        json.dumps(bundle.vocab.to_dict()) + "\n", encoding="utf-8")
    torch.save(bundle.model.state_dict(), model_dir / "weights.pt")


def load_bundle(model_dir) -> Bundle:
    model_dir = Path(model_dir)
    for name in ("config.json", "vocab.json", "weights.pt"):
        if not (model_dir / name).exists():
            raise ModelError(f"missing model artifact: {model_dir / name}")
    config = ModelConfig.from_dict(
        json.loads((model_dir / "config.json").read_text(encoding="utf-8")))
    vocab = SubwordVocab.from_dict(
        json.loads((model_dir / "vocab.json").read_text(encoding="utf-8")))
    if config.vocab_size != len(vocab):
        raise ModelError(
            f"config vocab_size {config.vocab_size} != vocabulary {len(vocab)}"
        )
    model = TaggerNet(config)
    state = torch.load(model_dir / "weights.pt", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return Bundle(model, vocab, config)
