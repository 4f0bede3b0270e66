"""Unannotated MIDI token representations and structure metrics."""

__version__ = "0.1.0"
