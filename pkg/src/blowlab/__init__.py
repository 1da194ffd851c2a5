"""Numerical laboratory for finite-time blowup of u_t = dΔu + μu^p - a(x)u^q
via backward self-similar lower solutions."""

__version__ = "0.1.0"
