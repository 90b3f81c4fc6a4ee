"""Ion-string equilibrium, string/cavity angle and Gaussian-mode coupling factors.

Lengths are in micrometres and frequencies in rad/s unless stated.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq, minimize_scalar, root

# CODATA 2018
ELEMENTARY_CHARGE = 1.602176634e-19
VACUUM_PERMITTIVITY = 8.8541878128e-12
ATOMIC_MASS_UNIT = 1.66053906660e-27
CA40_MASS = 39.9626 * ATOMIC_MASS_UNIT

AXIAL_FREQUENCY = 2 * np.pi * 0.869e6
ANTINODE_SPACING_UM = 0.427
STRING_ANGLE_DEG = 85.3
# fitted to the centred and the 1.4 um shifted coupling sets, see fit_waist
CAVITY_WAIST_UM = 12.06


class GeometryError(ValueError):
    pass


def length_scale(omega_z: float, mass: float = CA40_MASS) -> float:
    """``(q^2 / (4 pi eps0 m omega_z^2))^(1/3)`` in micrometres."""
    if omega_z <= 0 or mass <= 0:
        raise GeometryError("omega_z and mass must be positive")
    k = ELEMENTARY_CHARGE**2 / (4 * np.pi * VACUUM_PERMITTIVITY)
    return (k / (mass * omega_z**2)) ** (1 / 3) * 1e6


def _forces(u: np.ndarray) -> np.ndarray:
    diff = u[:, None] - u[None, :]
    inv = np.divide(np.sign(diff), diff**2, out=np.zeros_like(diff), where=diff != 0)
    return -u + inv.sum(axis=1)


def _jacobian(u: np.ndarray) -> np.ndarray:
    diff = u[:, None] - u[None, :]
    off = np.divide(2.0, np.abs(diff) ** 3, out=np.zeros_like(diff), where=diff != 0)
    jac = off.copy()
    np.fill_diagonal(jac, -1.0 - off.sum(axis=1))
    return jac


def dimensionless_positions(n: int, max_iterations: int = 200) -> np.ndarray:
    """Equilibrium of ``n`` ions in units of :func:`length_scale`."""
    if n < 1:
        raise GeometryError("n must be >= 1")
    if n == 1:
        return np.zeros(1)
    # spread guess from the large-n scaling of the string length
    guess = np.linspace(-1, 1, n) * 1.05 * n**0.559 if n > 2 else np.array([-0.6, 0.6])
    sol = root(_forces, guess, jac=_jacobian, method="hybr", tol=1e-14,
               options={"maxfev": max_iterations * n})
    u = np.sort(sol.x)
    residual = float(np.linalg.norm(_forces(u)))
    # hybr may report a stalled step at machine precision; the residual is the real test
    if residual > 1e-10:
        raise GeometryError(f"equilibrium solver did not converge, residual norm {residual:.3g}")
    # symmetrize away round-off
    return (u - u[::-1]) / 2


def equilibrium_positions(n: int, omega_z: float = AXIAL_FREQUENCY, mass: float = CA40_MASS) -> np.ndarray:
    """Axial equilibrium positions in micrometres, centred on zero."""
    return dimensionless_positions(n) * length_scale(omega_z, mass)


def central_spacing(n: int, omega_z: float = AXIAL_FREQUENCY, mass: float = CA40_MASS) -> float:
    """Distance between the two ions closest to the trap centre."""
    if n < 2:
        raise GeometryError("spacing needs at least two ions")
    pos = equilibrium_positions(n, omega_z, mass)
    mid = n // 2
    return float(pos[mid] - pos[mid - 1])


def string_angle_from_projection(spacing: float, projected: float) -> float:
    """Angle in degrees between the string and the cavity axis.

    ``projected`` is the ion spacing projected onto the cavity axis.
    """
    if spacing <= 0 or projected < 0:
        raise GeometryError("spacing must be positive and projection non-negative")
    if projected > spacing:
        raise GeometryError(f"projection {projected} exceeds spacing {spacing}")
    return float(np.degrees(np.arccos(projected / spacing)))


def find_axial_frequency(target_projection: float, angle_deg: float = STRING_ANGLE_DEG,
                         mass: float = CA40_MASS, n: int = 3,
                         bracket: tuple[float, float] = (2 * np.pi * 1e3, 2 * np.pi * 1e8)) -> float:
    """Axial COM angular frequency that puts neighbouring ions ``target_projection`` apart along the cavity.

    Root-finds in ``log(omega_z)`` on the numerical equilibrium spacing.
    """
    cos_a = np.cos(np.radians(angle_deg))
    if target_projection <= 0 or cos_a <= 0:
        raise GeometryError("need a positive projection and an angle below 90 degrees")
    required = target_projection / cos_a
    u = dimensionless_positions(n)
    unit_spacing = float(u[n // 2] - u[n // 2 - 1])

    def mismatch(log_w):
        return unit_spacing * length_scale(np.exp(log_w), mass) - required

    lo, hi = np.log(bracket[0]), np.log(bracket[1])
    if mismatch(lo) * mismatch(hi) > 0:
        raise GeometryError("no axial frequency in bracket gives the requested projection")
    return float(np.exp(brentq(mismatch, lo, hi, xtol=1e-14, rtol=1e-14)))


@dataclass(frozen=True)
class StringGeometry:
    n_ions: int = 3
    omega_z: float = AXIAL_FREQUENCY
    ion_mass: float = CA40_MASS
    angle: float = STRING_ANGLE_DEG
    antinode_spacing: float = ANTINODE_SPACING_UM
    waist: float = CAVITY_WAIST_UM
    axial_shift: float = 0.0
    positions: tuple[float, ...] | None = None

    def ion_positions(self) -> np.ndarray:
        if self.positions is not None:
            pos = np.asarray(self.positions, dtype=float)
        else:
            pos = equilibrium_positions(self.n_ions, self.omega_z, self.ion_mass)
        if np.any(np.diff(pos) <= 0):
            raise GeometryError("positions must be strictly increasing")
        return pos

    def with_shift(self, shift: float) -> "StringGeometry":
        return replace(self, axial_shift=shift)


def perpendicular_distances(geometry: StringGeometry) -> np.ndarray:
    """Distance of each ion from the cavity axis, which crosses the trap axis at the centre."""
    z = geometry.ion_positions() + geometry.axial_shift
    return np.abs(z) * np.sin(np.radians(geometry.angle))


def gaussian_coupling(geometry: StringGeometry) -> np.ndarray:
    """Relative coupling ``exp(-(r/w)^2)`` of each ion to the cavity mode."""
    if geometry.waist <= 0:
        raise GeometryError("waist must be positive")
    r = perpendicular_distances(geometry)
    return np.exp(-((r / geometry.waist) ** 2))


def fit_waist(cases: list[tuple[StringGeometry, list[float]]], bounds=(1.0, 100.0)) -> float:
    """Least-squares waist shared by several ``(geometry, target couplings)`` cases."""

    def cost(w):
        return sum(float(np.sum((gaussian_coupling(replace(g, waist=w)) - np.asarray(t)) ** 2))
                   for g, t in cases)

    res = minimize_scalar(cost, bounds=bounds, method="bounded", options={"xatol": 1e-9})
    return float(res.x)


def reduced_coupling(x: float, gamma: float, g0: float) -> float:
    """Ion-cavity coupling reduced by position (``x``) and other (``gamma``) factors."""
    for name, v in (("x", x), ("gamma", gamma)):
        if not 0 <= v <= 1:
            raise GeometryError(f"{name} must be in [0, 1], got {v}")
    return x * gamma * g0


def format_positions(positions) -> str:
    lines = ["ion_index,position_um"]
    lines += [f"{i + 1},{z:.9g}" for i, z in enumerate(positions)]
    return "\n".join(lines) + "\n"
