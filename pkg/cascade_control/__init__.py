"""
cascade_control: return-method null control of a cubic cascade of heat equations.
"""
__version__ = "0.1.0"
