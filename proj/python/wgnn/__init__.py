"""GNN beamforming for MU-MISO downlink (C++ core)."""

from ._wgnn import *  # noqa: F401,F403
from ._wgnn import __doc__  # noqa: F401

__version__ = "0.1.0"
