"""Gaussian-process surrogate coupling of partitioned fixed-point problems.

Modules: ``kernels``, ``gp``, ``design``, ``coupling``, ``uq``, ``bounds``,
``sensitivity``, ``stats``, ``bench`` and ``cli``.
"""
__version__ = "0.1.0"
