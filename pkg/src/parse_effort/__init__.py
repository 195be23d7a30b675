"""Word-by-word parsing effort, surprisal, and encoding-model regression."""

__version__ = "0.1.0"
