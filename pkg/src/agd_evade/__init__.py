"""Black-box evasion lab for character-level DGA classifiers."""

__version__ = "0.1.0"
