"""Collider-frame kinematics: pseudorapidity, transverse quantities, invariant mass.

Conventions: the z axis is the beam line, the xy plane is the transverse
plane, angles are radians, and energy/momentum/mass are all in GeV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Absolute tolerance for clamping tiny negative mass squares produced by
# floating-point cancellation in E^2 - |p|^2 near massless particles.
MASS_SQUARE_TOL = 1e-9


@dataclass(frozen=True)
class FourMomentum:
    """A particle's (px, py, pz, E) four-vector."""

    px: float
    py: float
    pz: float
    energy: float

    def __add__(self, other: "FourMomentum") -> "FourMomentum":
        return FourMomentum(
            self.px + other.px,
            self.py + other.py,
            self.pz + other.pz,
            self.energy + other.energy,
        )

    @property
    def momentum_square(self) -> float:
        return self.px * self.px + self.py * self.py + self.pz * self.pz


def pseudorapidity(theta: float) -> float:
    """Angle relative to the beam axis mapped to eta = -ln(tan(theta / 2)).

    Zero in the transverse plane, diverging to +/- infinity along the
    beam directions.  ``theta`` must lie strictly inside (0, pi).
    """
    if not 0.0 < theta < math.pi:
        raise ValueError(f"theta must be in the open interval (0, pi), got {theta!r}")
    return -math.log(math.tan(0.5 * theta))


def transverse_momentum(px: float, py: float) -> float:
    """Momentum magnitude projected onto the transverse plane."""
    return math.hypot(px, py)


def momentum_from_detector(pt: float, eta: float, phi: float) -> tuple[float, float, float]:
    """Reconstruct the momentum 3-vector from detector coordinates.

    Returns (pt cos(phi), pt sin(phi), pt sinh(eta)).  The longitudinal
    component uses sinh of the pseudorapidity, which is the coordinate
    that encodes the polar angle.
    """
    if pt < 0:
        raise ValueError(f"pt must be non-negative, got {pt!r}")
    return (pt * math.cos(phi), pt * math.sin(phi), pt * math.sinh(eta))


def invariant_mass(p: FourMomentum) -> float:
    """Rest mass sqrt(E^2 - |p|^2) of a particle or summed decay system."""
    m2 = p.energy * p.energy - p.momentum_square
    if m2 < -MASS_SQUARE_TOL:
        raise ValueError(
            f"unphysical four-momentum: E^2 - |p|^2 = {m2!r} is negative beyond tolerance"
        )
    return math.sqrt(max(m2, 0.0))


def missing_transverse_momentum(visible: list[tuple[float, float]]) -> tuple[float, float]:
    """Negated vector sum of the visible transverse momenta.

    A nonzero result indicates momentum carried away by undetected
    particles; an empty list yields (0, 0).
    """
    sx = 0.0
    sy = 0.0
    for vx, vy in visible:
        sx += vx
        sy += vy
    return (-sx, -sy)
