"""Learning to rank dialogue responses with grayscale (three-tier) data."""

__version__ = '0.1.0'
