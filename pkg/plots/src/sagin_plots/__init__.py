"""Offline figure generation for sagin-sched experiment outputs."""

from .figures import KINDS, FigureSpec, render  # noqa: F401

__version__ = "0.1.0"
