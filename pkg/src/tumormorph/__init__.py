"""Tumor boundary morphometrics, boosted classification and explanation tooling."""

__version__ = "0.1.0"

CLASSES = ("glioma", "meningioma", "pituitary")
