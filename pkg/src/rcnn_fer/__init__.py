"""Facial expression classification (CNN) with recurrent emotion tracking over time, on plain numpy."""

__version__ = "0.1.0"
