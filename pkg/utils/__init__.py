"""
GRIP knockoff selection toolkit.

Core logic lives in this package; the command-line runner is ``run_grip.py`` at the
repository root.
"""

__version__ = "0.3.0"
