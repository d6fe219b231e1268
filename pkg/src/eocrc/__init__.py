"""Early-onset colorectal cancer risk prediction from windowed EHR events."""

__version__ = "0.1.0"
