"""Phonon- and nuclear-spin-induced dephasing of triplet color-center spin qubits."""

__version__ = "0.1.0"
