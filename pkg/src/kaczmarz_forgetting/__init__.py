"""Continual linear regression, block Kaczmarz and last-iterate SGD: forgetting rates and their numerical verification."""

__version__ = "0.1.0"
