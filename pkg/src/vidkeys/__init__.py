"""Keystroke inference from arm motion in video calls, plus mitigations and a synthetic oracle."""

__version__ = "0.1.0"
