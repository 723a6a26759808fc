"""Chest X-ray visual question answering workbench."""

__version__ = "0.1.0"
