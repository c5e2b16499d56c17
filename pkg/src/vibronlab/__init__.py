"""Vibron heat transport in trapped-ion chains.

Submodules
----------
chain        ion-crystal geometry and tight-binding couplings
laser        Doppler-cooling coefficients, drive constants, Bessel factors
gaussian     correlator (two-point function) dynamics and steady states
fock         exact truncated Fock-space master equation engine
experiments  scenario runners
io           config loading, manifests and dataset emission
"""

__version__ = "0.1.0"
