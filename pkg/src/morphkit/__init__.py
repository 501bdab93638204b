"""morphkit: mine, train, generate and score text morphing sequences."""

__version__ = "0.1.0"
