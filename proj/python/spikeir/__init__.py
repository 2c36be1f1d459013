"""Spiking image restoration with ANN-to-SNN feature distillation.

The heavy lifting lives in the _spikeir extension module; this package
re-exports its surface.
"""

from _spikeir import *  # noqa: F401,F403
from _spikeir import __version__  # noqa: F401
