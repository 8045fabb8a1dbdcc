"""Dataset distillation by loss matching against randomly sampled models."""

__version__ = "0.1.0"
