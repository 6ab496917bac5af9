"""Random stable looptrees: sampling, metrics, random walks and scaling checks."""

__version__ = "0.1.0"
