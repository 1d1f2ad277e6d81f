"""Rotation sensing with a Kerr-enhanced optomechanical gyroscope.

Submodules: ``hilbert`` (truncated two-mode Fock algebra), ``model``
(Hamiltonian and derived couplings), ``qfi_analytic`` (closed-form QFI),
``evolution`` (exact driving-free evolution and numeric QFI),
``measurement`` (homodyne statistics and CFI), ``open_system`` (driven and
lossy dynamics) and ``experiments`` (scenario runner behind the ``qomg`` CLI).
"""

__version__ = "0.1.0"
