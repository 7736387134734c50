"""Deployment geometry and Rice SIMO channel statistics.

Positions live in the 2-D plane with the access point at the origin. The
receive array axis is a unit vector; the angle of arrival of a device is
the angle between its position vector and that axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .specfun import DomainError

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_ORIENTATION = (1.0 / math.sqrt(2.0), -1.0 / math.sqrt(2.0))


class GeometryError(ValueError):
    """Degenerate deployment geometry (e.g. a device on the access point)."""


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear receive array."""

    n_rx: int = 4
    delta_r: float = 0.5
    carrier_freq: float = 2.4e9
    orientation: tuple = DEFAULT_ORIENTATION

    def __post_init__(self):
        if int(self.n_rx) != self.n_rx or self.n_rx < 1:
            raise DomainError(f"n_rx must be a positive integer, got {self.n_rx}")
        if self.delta_r <= 0 or self.carrier_freq <= 0:
            raise DomainError("antenna spacing and carrier frequency must be positive")
        norm = math.hypot(*self.orientation)
        if abs(norm - 1.0) > 1e-9:
            raise DomainError(f"array orientation must have unit norm, got {norm}")
        object.__setattr__(self, "n_rx", int(self.n_rx))
        object.__setattr__(self, "orientation", tuple(float(v) for v in self.orientation))

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def axis_angle(self) -> float:
        return math.atan2(self.orientation[1], self.orientation[0])


@dataclass(frozen=True)
class PathLossModel:
    """Received power per antenna ``P = p0 * d**(-beta/2)`` (noise-normalized).

    ``exponent="full"`` switches to ``p0 * d**(-beta)``.
    """

    p0: float = 1.0
    beta: float = 3.0
    n0: float = 1.0
    exponent: str = "half"

    def __post_init__(self):
        if self.p0 <= 0 or self.beta <= 0:
            raise DomainError("p0 and beta must be positive")
        if self.n0 != 1.0:
            raise DomainError("noise spectral density is normalized to 1")
        if self.exponent not in ("half", "full"):
            raise DomainError(f"unknown path-loss exponent mode {self.exponent!r}")

    def power(self, distance: float) -> float:
        k = 0.5 * self.beta if self.exponent == "half" else self.beta
        return self.p0 * distance ** (-k)


@dataclass(frozen=True)
class DeviceChannelStats:
    """Distribution ``CN(mean, covariance)`` of one link's channel vector."""

    mean: np.ndarray
    covariance: np.ndarray
    power: float
    rice_k: float
    distance: float
    aoa: float
    dir_cosine: float
    corr: float

    def __post_init__(self):
        for name in ("mean", "covariance"):
            arr = np.array(getattr(self, name), dtype=complex)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_rx(self) -> int:
        return self.mean.size


def spatial_signature(omega: float, array: ArrayConfig) -> np.ndarray:
    """Unit spatial signature of a ULA for directional cosine ``omega``."""
    if abs(omega) > 1.0 + 1e-12:
        raise DomainError(f"directional cosine must satisfy |omega| <= 1, got {omega}")
    n = np.arange(array.n_rx)
    return np.exp(-2j * np.pi * array.delta_r * omega * n) / math.sqrt(array.n_rx)


def correlation_matrix(n_rx: int, corr: float) -> np.ndarray:
    """Toeplitz antenna correlation ``A[i, j] = corr**|i - j|``."""
    idx = np.arange(n_rx)
    return corr ** np.abs(idx[:, None] - idx[None, :]).astype(float)


def angle_of_arrival(position, array: ArrayConfig) -> float:
    """Angle in ``[0, pi]`` between the device direction and the array axis."""
    x, y = (float(v) for v in position)
    d = math.hypot(x, y)
    if d == 0.0:
        raise GeometryError("device position coincides with the access point")
    c = (x * array.orientation[0] + y * array.orientation[1]) / d
    return math.acos(max(-1.0, min(1.0, c)))


def position_from_polar(distance: float, aoa: float, array: ArrayConfig) -> tuple:
    """Point at ``distance`` whose angle from the array axis is ``aoa``.

    The angle is measured counter-clockwise from the axis, so with the
    default axis ``(1, -1)/sqrt(2)`` an AoA of ``pi/2`` points along ``y = x``.
    """
    theta = array.axis_angle + aoa
    return (distance * math.cos(theta), distance * math.sin(theta))


def device_stats(
    position,
    rice_k: float,
    array: ArrayConfig,
    pathloss: PathLossModel,
    corr: float = 0.0,
) -> DeviceChannelStats:
    """Channel statistics of a single-antenna node at ``position``."""
    x, y = (float(v) for v in position)
    d = math.hypot(x, y)
    if d == 0.0:
        raise GeometryError("device position coincides with the access point")
    if rice_k < 0:
        raise DomainError(f"Rice factor must be >= 0, got {rice_k}")
    if not -1.0 < corr < 1.0:
        raise DomainError(f"antenna correlation must lie in (-1, 1), got {corr}")
    phi = angle_of_arrival((x, y), array)
    omega = math.cos(phi)
    p = pathloss.power(d)
    n = array.n_rx
    if math.isinf(rice_k):
        los_frac, nlos_frac = 1.0, 0.0
    else:
        los_frac, nlos_frac = rice_k / (rice_k + 1.0), 1.0 / (rice_k + 1.0)
    a = math.sqrt(p * n * los_frac)
    phase = np.exp(-2j * np.pi * d / array.wavelength)
    mean = a * phase * spatial_signature(omega, array)
    cov = p * nlos_frac * correlation_matrix(n, corr)
    return DeviceChannelStats(
        mean=mean,
        covariance=cov,
        power=p,
        rice_k=rice_k,
        distance=d,
        aoa=phi,
        dir_cosine=omega,
        corr=corr,
    )


def covariance_factor(cov: np.ndarray) -> np.ndarray:
    """Matrix ``L`` with ``L @ L^H == cov`` via a clamped eigendecomposition."""
    cov = np.asarray(cov, dtype=complex)
    if not np.allclose(cov, cov.conj().T, atol=1e-12 * max(1.0, np.abs(cov).max())):
        raise np.linalg.LinAlgError("covariance is not Hermitian")
    w, v = np.linalg.eigh(cov)
    scale = max(1.0, np.abs(w).max())
    if w.min() < -1e-12 * scale:
        raise np.linalg.LinAlgError(f"covariance has negative eigenvalue {w.min():.3e}")
    return v * np.sqrt(np.clip(w, 0.0, None))


def complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circularly-symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)


def sample_channel(
    stats: DeviceChannelStats,
    rng: np.random.Generator,
    size: Optional[int] = None,
) -> np.ndarray:
    """Draw channel vectors ``mean + L z``; shape ``(size, n_rx)`` or ``(n_rx,)``."""
    factor = covariance_factor(stats.covariance)
    n = stats.n_rx
    z = complex_normal(rng, (1 if size is None else size, n))
    h = stats.mean + z @ factor.T
    return h[0] if size is None else h


def snr_moments(stats: DeviceChannelStats, exact: bool = False) -> tuple:
    """Mean and variance of the MRC SNR ``||h||**2``.

    By default the variance is ``Tr(S^2) + m^H S m``. The exact value for
    a circular complex Gaussian vector is ``Tr(S^2) + 2 m^H S m``, returned
    with ``exact=True``.
    """
    m, cov = stats.mean, stats.covariance
    mean = float(np.real(np.trace(cov)) + np.real(np.vdot(m, m)))
    cross = float(np.real(np.vdot(m, cov @ m)))
    var = float(np.real(np.trace(cov @ cov))) + (2.0 if exact else 1.0) * cross
    return mean, var


@dataclass(frozen=True)
class Attacker:
    position: tuple
    rice_k: float = 1.0


@dataclass(frozen=True)
class Deployment:
    """Devices around an access point at the origin plus an optional attacker."""

    devices: dict
    array: ArrayConfig = field(default_factory=ArrayConfig)
    pathloss: PathLossModel = field(default_factory=PathLossModel)
    rice_k: float = 10 ** 0.6
    corr: float = 0.0
    attacker: Optional[Attacker] = None

    def __post_init__(self):
        devices = {str(k): tuple(float(c) for c in v) for k, v in dict(self.devices).items()}
        seen = set()
        for dev_id, pos in devices.items():
            if math.hypot(*pos) == 0.0:
                raise GeometryError(f"device {dev_id} sits on the access point")
            if pos in seen:
                raise GeometryError(f"device {dev_id} shares its position with another device")
            seen.add(pos)
        object.__setattr__(self, "devices", devices)

    @property
    def ids(self) -> list:
        return list(self.devices)

    def stats(self, device_id: str) -> DeviceChannelStats:
        if device_id not in self.devices:
            raise KeyError(f"unknown device id {device_id!r}")
        return device_stats(self.devices[device_id], self.rice_k, self.array, self.pathloss, self.corr)

    def attacker_stats(self) -> DeviceChannelStats:
        if self.attacker is None:
            raise ValueError("deployment has no attacker")
        return device_stats(
            self.attacker.position, self.attacker.rice_k, self.array, self.pathloss, self.corr
        )

    def with_(self, **changes) -> "Deployment":
        return replace(self, **changes)


def p0_for_edge_snr(positions, snr_db: float, beta: float, exponent: str = "half") -> float:
    """Transmit power giving the farthest position a per-antenna SNR of ``snr_db``."""
    d_max = max(math.hypot(*p) for p in positions)
    k = 0.5 * beta if exponent == "half" else beta
    return 10 ** (snr_db / 10.0) * d_max**k


def grid_positions(nx: int = 5, ny: int = 5, spacing: float = 5.0, origin=(0.0, 0.0)) -> list:
    """Square-grid points ordered column by column (x outer, y inner).

    A grid point on the access point itself is skipped, so the default
    5 x 5 grid with 5 m pitch gives 24 devices with D4 at (0, 20).
    """
    if nx < 1 or ny < 1:
        raise DomainError("grid needs at least one row and one column")
    x0, y0 = origin
    pts = []
    for i in range(nx):
        for j in range(ny):
            p = (x0 + i * spacing, y0 + j * spacing)
            if p != (0.0, 0.0):
                pts.append(p)
    return pts


def square_grid_deployment(
    nx: int = 5,
    ny: int = 5,
    spacing: float = 5.0,
    origin=(0.0, 0.0),
    array: Optional[ArrayConfig] = None,
    beta: float = 3.0,
    edge_snr_db: float = 15.0,
    rice_k: float = 10 ** 0.6,
    corr: float = 0.0,
    attacker: Optional[Attacker] = None,
) -> Deployment:
    """Grid deployment with ids ``D1..Dn`` and ``p0`` set from the edge SNR."""
    pts = grid_positions(nx, ny, spacing, origin)
    devices = {f"D{i + 1}": p for i, p in enumerate(pts)}
    p0 = p0_for_edge_snr(pts, edge_snr_db, beta)
    return Deployment(
        devices=devices,
        array=array or ArrayConfig(),
        pathloss=PathLossModel(p0=p0, beta=beta),
        rice_k=rice_k,
        corr=corr,
        attacker=attacker,
    )


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)
