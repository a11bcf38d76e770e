"""Console entry points: qdmlm-train and encoder-serve."""

from __future__ import annotations

import click

from encoder_service import qdmlm
from encoder_service.model import save_checkpoint


@click.command("qdmlm-train")
@click.option("--pairs", "pairs_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="JSONL file of {\"query\": ..., \"document\": ...} rows.")
@click.option("--steps", default=300, show_default=True, type=int)
@click.option("--mask-rate", default=qdmlm.DEFAULT_MASK_RATE, show_default=True, type=float)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--batch-size", default=32, show_default=True, type=int)
@click.option("--lr", default=3e-4, show_default=True, type=float)
@click.option("--max-len", default=64, show_default=True, type=int)
def train_main(pairs_path, steps, mask_rate, out_path, seed, batch_size, lr, max_len):
    """Train an encoder on query-document pairs and write a checkpoint."""
    pairs = qdmlm.load_pairs(pairs_path)
    result = qdmlm.train(
        pairs,
        steps=steps,
        mask_rate=mask_rate,
        seed=seed,
        batch_size=batch_size,
        lr=lr,
        max_len=max_len,
        log=lambda step, loss: click.echo(f"step {step + 1}/{steps} loss {loss:.4f}"),
    )
    save_checkpoint(out_path, result.model, result.vocab)
    final = qdmlm.smoothed(result.losses)[-1]
    click.echo(f"wrote {out_path} (final smoothed loss {final:.4f})")


@click.command("encoder-serve")
@click.option("--ckpt", "ckpt_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--port", default=8080, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve_main(ckpt_path, port, host):
    """Serve /embed from a trained checkpoint."""
    import uvicorn

    from encoder_service.service import app_from_checkpoint

    uvicorn.run(app_from_checkpoint(ckpt_path), host=host, port=port)
