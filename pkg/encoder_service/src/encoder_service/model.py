"""Small transformer encoder with a masked-token prediction head.

The same network backs both training (predict masked tokens) and
serving (mean-pooled hidden states as text embeddings). Checkpoints
carry the config and vocabulary alongside the weights so a served
model is self-describing.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from encoder_service.vocab import PAD, UNK, Vocab

CHECKPOINT_FORMAT = "qdmlm-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class EncoderConfig:
    vocab_size: int
    max_len: int = 64
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    ff_dim: int = 128
    dropout: float = 0.1


class MlmEncoder(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.d_model, padding_idx=PAD)
        self.pos_emb = nn.Embedding(config.max_len, config.d_model)
        layer = nn.TransformerEncoderLayer(
            d_model=config.d_model,
            nhead=config.n_heads,
            dim_feedforward=config.ff_dim,
            dropout=config.dropout,
            batch_first=True,
        )
        # nested-tensor fast path is shape-dependent; keep the plain path
        self.encoder = nn.TransformerEncoder(
            layer, config.n_layers, enable_nested_tensor=False
        )
        self.lm_head = nn.Linear(config.d_model, config.vocab_size)

    def forward(self, ids: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        """Hidden states [batch, seq, d_model]; pad_mask True at padding."""
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.tok_emb(ids) + self.pos_emb(positions)
        return self.encoder(x, src_key_padding_mask=pad_mask)

    def token_logits(self, hidden: torch.Tensor) -> torch.Tensor:
        return self.lm_head(hidden)


def _batch_ids(vocab: Vocab, texts, max_len: int) -> tuple[torch.Tensor, torch.Tensor]:
    # a text with no recognizable tokens still needs one pooled position
    seqs = [(vocab.encode_text(t) or [UNK])[:max_len] for t in texts]
    width = max(len(s) for s in seqs)
    ids = torch.full((len(seqs), width), PAD, dtype=torch.long)
    for i, seq in enumerate(seqs):
        ids[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
    return ids, ids.eq(PAD)


def embed_texts(model: MlmEncoder, vocab: Vocab, texts) -> torch.Tensor:
    """Unit-norm embeddings [n, d_model], one row per text, input order.

    Mean of the final hidden states over non-padding positions,
    L2-normalized. Runs in inference mode, so repeated calls with the
    same texts return identical vectors.
    """
    model.eval()
    with torch.inference_mode():
        ids, pad_mask = _batch_ids(vocab, texts, model.config.max_len)
        hidden = model(ids, pad_mask)
        keep = (~pad_mask).unsqueeze(-1).to(hidden.dtype)
        pooled = (hidden * keep).sum(dim=1) / keep.sum(dim=1)
        return F.normalize(pooled, dim=-1)


def save_checkpoint(path, model: MlmEncoder, vocab: Vocab) -> None:
    torch.save(
        {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": asdict(model.config),
            "vocab": vocab.tokens,
            "state_dict": model.state_dict(),
        },
        path,
    )


def load_checkpoint(path) -> tuple[MlmEncoder, Vocab]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not an encoder checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    model = MlmEncoder(EncoderConfig(**payload["config"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, Vocab(payload["vocab"])
