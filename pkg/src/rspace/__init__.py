"""Isothermic maps into symmetric R-spaces: parabolic subalgebras, Gamma factors,
circles, Darboux/T/Christoffel transforms, discrete nets and the KdV connection."""

__version__ = "0.1.0"
