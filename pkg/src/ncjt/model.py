"""Network model: PPP deployments, bounded path loss, Rayleigh fading, random pilots.

The typical UE sits at the origin.  The infinite PPP is simulated inside a
disk whose radius is chosen so that the expected channel energy of the APs
left out is a small fraction of the total network energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, SystemConfig

# Refuse windows that would hold more APs than this on average.
MAX_EXPECTED_POINTS = 2_000_000


class DegenerateDrawError(RuntimeError):
    """The sampled window holds fewer APs than the cluster size."""


def path_loss(r, cfg: SystemConfig):
    """Bounded power-law gain r0^alpha * max(r0, r)^-alpha."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distance must be non-negative")
    out = (cfg.r0 / np.maximum(cfg.r0, r)) ** cfg.alpha
    return out if out.ndim else float(out)


def disk_average_path_loss(radius, cfg: SystemConfig):
    """Mean of path_loss over a point uniform in a disk of the given radius."""
    radius = np.asarray(radius, dtype=float)
    a, r0 = cfg.alpha, cfg.r0
    big = np.maximum(radius, r0)
    outer = 2.0 * r0**2 * (1.0 - (r0 / big) ** (a - 2.0)) / (a - 2.0)
    out = np.where(radius <= r0, 1.0, (r0**2 + outer) / big**2)
    return out if out.ndim else float(out)


def truncation_radius(cfg: SystemConfig) -> float:
    """Radius beyond which the expected energy is <= epsilon * sigma_phi^2.

    The tail 2 pi lambda int_R^inf r l(r) dr over sigma_phi^2 equals
    (2/alpha) (r0/R)^(alpha-2); solving for R and never going below r0.
    """
    a = cfg.alpha
    radius = cfg.r0 * (2.0 / (a * cfg.epsilon_trunc)) ** (1.0 / (a - 2.0))
    return max(radius, cfg.r0)


def tail_energy(cfg: SystemConfig, r_max: float) -> float:
    """Expected channel energy of all APs beyond r_max."""
    a, r0 = cfg.alpha, cfg.r0
    r = max(r_max, r0)
    inner = 0.0
    if r_max < r0:
        inner = cfg.lam * math.pi * (r0**2 - r_max**2)
    return inner + 2.0 * math.pi * cfg.lam * r0**a * r ** (2.0 - a) / (a - 2.0)


def window_radius(cfg: SystemConfig) -> float:
    """Simulation window: the truncation radius, widened to hold the cluster.

    For steep path loss the energy rule alone gives windows holding about one
    AP; the window is widened so that the expected count exceeds n_a by a
    margin that makes a short draw practically impossible.
    """
    need = cfg.n_a + 10.0 * math.sqrt(cfg.n_a) + 30.0
    radius = max(truncation_radius(cfg), math.sqrt(need / (math.pi * cfg.lam)))
    if cfg.lam * math.pi * radius**2 > MAX_EXPECTED_POINTS:
        raise ConfigError(
            f"simulation window of radius {radius:.3g} needs more than "
            f"{MAX_EXPECTED_POINTS} APs on average; increase epsilon_trunc"
        )
    return radius


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """i.i.d. CN(0, 1) samples."""
    z = rng.standard_normal(size=(2,) + tuple(np.atleast_1d(size)))
    return (z[0] + 1j * z[1]) * math.sqrt(0.5)


@dataclass(frozen=True)
class NetworkRealization:
    positions: np.ndarray  # (n, 2), sorted by distance
    distances: np.ndarray  # (n,), non-decreasing
    fading: np.ndarray  # (n,) complex
    pilots: np.ndarray | None  # (n_p, n) complex
    cluster_indices: np.ndarray
    r_max: float

    @property
    def n_aps(self) -> int:
        return len(self.distances)

    @property
    def cluster_pilots(self) -> np.ndarray:
        return self.pilots[:, self.cluster_indices]


@dataclass(frozen=True)
class ChannelVector:
    amplitudes: np.ndarray
    cluster_sum: complex


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_network(
    cfg: SystemConfig, seed, r_max: float | None = None, with_pilots: bool = True
) -> NetworkRealization:
    """Draw one deployment around the typical UE.

    The draw order is count, positions, fading, pilots, so a call with
    ``with_pilots=False`` reproduces the geometry and fading of the full call.
    """
    rng = _as_rng(seed)
    if r_max is None:
        r_max = window_radius(cfg)
    count = int(rng.poisson(cfg.lam * math.pi * r_max**2))
    if count < cfg.n_a:
        raise DegenerateDrawError(f"window holds {count} APs, cluster needs {cfg.n_a}")
    radius = r_max * np.sqrt(rng.random(count))
    angle = 2.0 * math.pi * rng.random(count)
    order = np.argsort(radius, kind="stable")
    radius = radius[order]
    angle = angle[order]
    positions = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    fading = complex_normal(rng, count)
    pilots = complex_normal(rng, (cfg.n_p, count)) if with_pilots else None
    return NetworkRealization(
        positions=positions,
        distances=radius,
        fading=fading,
        pilots=pilots,
        cluster_indices=np.arange(cfg.n_a),
        r_max=float(r_max),
    )


def channel_vector(net: NetworkRealization, cfg: SystemConfig) -> ChannelVector:
    amplitudes = net.fading * np.sqrt(path_loss(net.distances, cfg))
    return ChannelVector(amplitudes, complex(amplitudes[net.cluster_indices].sum()))


def pilot_signal(
    net: NetworkRealization,
    channel: ChannelVector,
    cfg: SystemConfig,
    rng: np.random.Generator,
    far_field: bool = True,
) -> np.ndarray:
    """Received training signal sum_x h_x p_x + w_p over every AP in the window.

    With ``far_field`` the APs beyond the window enter as extra white Gaussian
    interference carrying their expected energy, which keeps the mean
    estimation error unbiased when the out-of-cluster energy is tiny.
    """
    noise_var = cfg.sigma_w_sq
    if far_field:
        noise_var += tail_energy(cfg, net.r_max)
    y = net.pilots @ channel.amplitudes
    return y + math.sqrt(noise_var) * complex_normal(rng, cfg.n_p)
