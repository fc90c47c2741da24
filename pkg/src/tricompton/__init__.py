"""Polarization-resolved single, double and triple Compton scattering.

Modules
-------
dirac
    Gamma matrices, Feynman slash, bispinors.
kinematics
    Four-vectors, energy closure, thresholds, boosts and Jacobians.
amplitudes
    Reduced tree-level matrix elements.
xsec
    Differential and total cross sections, plotted quantities S and S-bar.
quadrature
    Romberg energy integration and Monte Carlo angular integration.
entanglement
    Polarization density matrices, entropy and the witness measure tau.
cli
    Scenario-driven command line front end.
"""

__version__ = "1.0.0"
