"""Synthetic skin-lesion data forge.

Generates detection training images by seamlessly blending lesion crops onto
segmented body photos, derives tracking image pairs with exact dense
ground-truth correspondence, and ships classical baselines (sliding-window
softmax detector, NCC patch tracker) plus ROC/PCK evaluation so the whole
synthesize -> detect -> track -> evaluate loop runs end to end.
"""

__version__ = "0.1.0"
