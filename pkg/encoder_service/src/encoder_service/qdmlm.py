"""Query-document masked language modeling at desk scale.

Each training example is a short topic phrase paired with a document
body. The two are joined as query + separator + document, a fraction
of the real tokens is hidden, and the model is trained to recover the
hidden tokens from context. The query anchors the document's topic, so
at least one query token always stays visible.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from importlib import resources

import torch
import torch.nn.functional as F

from encoder_service.model import EncoderConfig, MlmEncoder
from encoder_service.vocab import MASK, PAD, SEP, Vocab

DEFAULT_MASK_RATE = 0.15


@dataclass
class QDPair:
    query: str
    document: str


def toy_pairs_path() -> str:
    """Packaged 200-pair corpus used by the desk-scale training run."""
    return str(resources.files("encoder_service").joinpath("data/toy_pairs.jsonl"))


def load_pairs(path) -> list[QDPair]:
    pairs: list[QDPair] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"pair file line {lineno}: not valid JSON") from exc
            query = str(row.get("query") or "").strip()
            document = str(row.get("document") or "").strip()
            if not query or not document:
                raise ValueError(
                    f"pair file line {lineno}: query and document must be non-empty"
                )
            pairs.append(QDPair(query, document))
    if not pairs:
        raise ValueError("pair file contains no pairs")
    return pairs


def build_inputs(vocab: Vocab, pair: QDPair, max_len: int) -> tuple[list[int], int]:
    """Token ids for query + SEP + document, and the query length.

    Overflow drops document tokens from the end; the query is never
    truncated. A query that cannot fit alongside the separator is an
    error rather than a silent cut.
    """
    q_ids = vocab.encode_text(pair.query)
    budget = max_len - len(q_ids) - 1
    if budget < 0:
        raise ValueError("query does not fit the encoder context")
    d_ids = vocab.encode_text(pair.document)[:budget]
    return q_ids + [SEP] + d_ids, len(q_ids)


def mask_batch(
    rng: random.Random,
    sequences: list[list[int]],
    query_lens: list[int],
    vocab: Vocab,
    mask_rate: float,
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Padded (input_ids, labels, pad_mask) with MLM corruption applied.

    Per sequence, round(mask_rate * maskable) positions are chosen
    uniformly among the real tokens (the separator is structural and
    never chosen). Chosen positions get the standard 80/10/10
    treatment: [MASK], a random non-special token, or left unchanged.
    Labels hold the original id at chosen positions and -100 elsewhere.
    If the draw would select every query position, one of them is
    released so the topic is never hidden entirely.
    """
    if not 0.0 <= mask_rate <= 1.0:
        raise ValueError("mask_rate must be in [0, 1]")
    width = max(len(s) for s in sequences)
    input_ids = torch.full((len(sequences), width), PAD, dtype=torch.long)
    labels = torch.full((len(sequences), width), -100, dtype=torch.long)
    for i, (seq, n_query) in enumerate(zip(sequences, query_lens)):
        input_ids[i, : len(seq)] = torch.tensor(seq, dtype=torch.long)
        maskable = [p for p, tok in enumerate(seq) if tok != SEP]
        n_chosen = round(mask_rate * len(maskable))
        chosen = set(rng.sample(maskable, n_chosen))
        query_positions = set(range(n_query))
        if query_positions and query_positions <= chosen:
            chosen.discard(rng.choice(sorted(query_positions)))
        for pos in sorted(chosen):
            labels[i, pos] = seq[pos]
            roll = rng.random()
            if roll < 0.8:
                input_ids[i, pos] = MASK
            elif roll < 0.9:
                input_ids[i, pos] = rng.randrange(vocab.n_specials, len(vocab))
            # else: keep the original token, still predicted
    pad_mask = torch.zeros((len(sequences), width), dtype=torch.bool)
    for i, seq in enumerate(sequences):
        pad_mask[i, len(seq) :] = True
    return input_ids, labels, pad_mask


@dataclass
class TrainResult:
    model: MlmEncoder
    vocab: Vocab
    losses: list[float]


def train(
    pairs: list[QDPair],
    steps: int,
    mask_rate: float = DEFAULT_MASK_RATE,
    seed: int = 0,
    batch_size: int = 32,
    lr: float = 3e-4,
    max_len: int = 64,
    log=None,
) -> TrainResult:
    """Train a fresh encoder on (query, document) pairs.

    Minimizes cross-entropy over the corrupted positions only. A step
    whose batch has no corrupted positions (mask_rate 0) records loss
    0.0 and does not touch the weights. `log(step, loss)` is called
    after every step when given.
    """
    if not pairs:
        raise ValueError("need at least one pair")
    if steps < 1:
        raise ValueError("steps must be positive")
    vocab = Vocab.build(p.query + " " + p.document for p in pairs)
    torch.manual_seed(seed)
    model = MlmEncoder(EncoderConfig(vocab_size=len(vocab), max_len=max_len))
    rng = random.Random(seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    encoded = [build_inputs(vocab, p, max_len) for p in pairs]
    losses: list[float] = []
    model.train()
    for step in range(steps):
        batch = [encoded[rng.randrange(len(encoded))] for _ in range(batch_size)]
        input_ids, labels, pad_mask = mask_batch(
            rng, [seq for seq, _ in batch], [n for _, n in batch], vocab, mask_rate
        )
        if int((labels != -100).sum()) == 0:
            losses.append(0.0)
        else:
            logits = model.token_logits(model(input_ids, pad_mask))
            loss = F.cross_entropy(
                logits.view(-1, len(vocab)), labels.view(-1), ignore_index=-100
            )
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.detach()))
        if log is not None:
            log(step, losses[-1])
    model.eval()
    return TrainResult(model, vocab, losses)


def smoothed(losses: list[float], window: int = 25) -> list[float]:
    """Trailing moving average, same length as the input."""
    if window < 1:
        raise ValueError("window must be positive")
    out = []
    acc = 0.0
    for i, x in enumerate(losses):
        acc += x
        if i >= window:
            acc -= losses[i - window]
        out.append(acc / min(i + 1, window))
    return out
