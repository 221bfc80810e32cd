"""Key-conditioned reversible identity anonymization on synthetic face-like data."""

__version__ = "0.1.0"
