"""Rule-based quality analyzer for REST APIs."""

__version__ = "0.1.0"
