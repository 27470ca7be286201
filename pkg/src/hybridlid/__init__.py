"""Hybrid spoken language identification: generative CTC-decoder LID, embedding LID and their fusion."""

__version__ = "0.1.0"
