"""Numerical kernels shared by every subpackage."""
