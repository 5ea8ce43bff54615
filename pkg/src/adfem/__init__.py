"""Forward-mode AD fused with a small finite-element framework."""

__version__ = "0.1.0"
