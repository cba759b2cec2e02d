"""Desk-scale micro-expression recognition pipeline.

Preprocessing (TV-L1 optical flow, strain magnitude, fixed-length temporal
interpolation), two enriched CNN+LSTM sequence classifiers, subject-
independent evaluation protocols (LOSO / composite / holdout), and Grad-CAM
explanation maps -- all verifiable end-to-end on synthetic data.
"""

__version__ = "0.1.0"
