"""
Spot Rotation Toolkit

Generates camera-agnostic, rotation-annotated synthetic bike-parking scenes
and evaluates object-to-spot rotation estimators against them.
"""

__version__ = "0.1.0"
