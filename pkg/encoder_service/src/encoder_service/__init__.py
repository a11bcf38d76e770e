"""Embedding service speaking the /embed wire protocol, trained with
query-document masked language modeling."""

__version__ = "0.1.0"
