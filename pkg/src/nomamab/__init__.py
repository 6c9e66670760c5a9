"""Two-stage multi-player bandit learning for uplink NOMA channel and power allocation."""

__version__ = "0.1.0"
