"""Revocable lattice cryptography with an exact coset-state simulator."""
