"""Physical constants in natural units (hbar = c = 1, energies in MeV)."""

from dataclasses import dataclass

# hbar*c in MeV*fm; 1 b = 100 fm^2
_HBARC_MEV_FM = 197.3269804


@dataclass(frozen=True)
class PhysicsConstants:
    """Fixed constants for a run.

    Attributes
    ----------
    m : float
        Electron mass in MeV.
    alpha : float
        Fine-structure constant.
    barn_per_inverse_mev2 : float
        Conversion factor, 1 MeV^-2 expressed in barn.
    """

    m: float = 0.51099895
    alpha: float = 1.0 / 137.036
    barn_per_inverse_mev2: float = _HBARC_MEV_FM**2 / 100.0


CONSTANTS = PhysicsConstants()

ELECTRON_MASS = CONSTANTS.m
ALPHA = CONSTANTS.alpha
MEV2_TO_BARN = CONSTANTS.barn_per_inverse_mev2
