"""Wong-Zakai approximations of SDEs driven by Hilbert-space semimartingales."""

__version__ = "0.1.0"
