"""Desk-scale instruction-tuning pipeline: data generation, LoRA fine-tuning,
automatic evaluation, and human-study tooling."""

__version__ = "0.1.0"
