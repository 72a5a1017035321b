"""Zero-shot train delay prediction with per-station n-order Markov regressors."""

__version__ = "0.1.0"
