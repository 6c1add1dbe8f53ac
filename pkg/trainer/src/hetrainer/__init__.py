"""hetrainer: train small models, prune and power-of-two-quantize them,
and export FCNW weight containers for the encrypted inference engine.

The inference side is a separate package; the only shared surface is the
FCNW file format, which `hetrainer.fcnw` implements independently.
"""

__version__ = "0.1.0"
