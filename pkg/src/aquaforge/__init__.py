"""Physics-grounded underwater image synthesis, restoration training and evaluation."""

__version__ = "0.1.0"
