"""Synthetic-scene harness: scene generation, noise, tensor files, CLI."""
