"""Physical constants shared by every module (CODATA 2018 exact values)."""

from dataclasses import dataclass


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = 1.054571817e-34  # J s
    k_B: float = 1.380649e-23  # J/K
    e: float = 1.602176634e-19  # C


CONST = PhysicalConstants()
HBAR = CONST.hbar
KB = CONST.k_B
QE = CONST.e
