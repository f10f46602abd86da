"""Physics-informed neural fields for pulsatile tube flow."""

__version__ = "0.1.0"
