"""Notarization ledger: transactions, blocks, nodes and a deterministic network simulator."""
