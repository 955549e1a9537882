"""Frequency-enhanced cross-modal VAEs for zero-shot skeleton action
recognition, scaled down to run on a desk: orthonormal temporal DCT with
piecewise band scaling, calibrated cross-modal alignment, twin VAEs, a
ZSL/GZSL pipeline, and a synthetic benchmark that exercises all of it.
"""

__version__ = "0.1.0"
