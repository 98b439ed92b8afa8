"""Simulation and analysis of photon-number entanglement purification.

Submodules: :mod:`fock` (truncated Fock-space algebra), :mod:`state_gen`
(squeezed and lossy resource states), :mod:`purify` (the concentration and
purification protocol), :mod:`qnd` (cascaded-cavity photon-number
measurement and its imperfection budget), :mod:`cli` (experiments).
"""

__version__ = "0.1.0"
