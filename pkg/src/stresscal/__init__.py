"""Stress prediction from heart-rate-variability and electrodermal features.

The package covers the whole pipeline: signal conditioning and windowed
feature extraction, skew-triggered feature transforms, from-scratch random
forests and extremely randomized trees, and the person-specific, generic
(leave-one-subject-out) and calibrated evaluation protocols.
"""

__version__ = "0.1.0"
