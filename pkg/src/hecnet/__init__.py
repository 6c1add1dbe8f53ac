"""hecnet: encrypted CNN inference over a leveled FV-RNS cryptosystem.

Subpackages split along the pipeline: ring arithmetic (`ring`), the
encryption scheme (`fv`), fixed-point encoding (`encode`), activation
approximation (`approx`), pruning/quantization (`compress`), the layer
graph and HOP accounting (`engine`), file formats (`params_io`,
`weights_io`), the wire protocol (`protocol`), and the CLI (`cli`).
"""

__version__ = "0.1.0"
