"""Electronic voting service with grid-card one-time-password authentication."""

__version__ = "0.1.0"
