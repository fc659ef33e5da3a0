"""Design rules: pilot length, cluster size and the NCJT crossover point."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import analytic
from .config import SystemConfig

log = logging.getLogger(__name__)

# gamma * (N_a + 1) >= this counts as "gamma >> 1/(N_a + 1)"
VALIDITY_FACTOR = 10.0


class UnreachableTargetError(ValueError):
    def __init__(self, target: float, limit: float):
        super().__init__(f"target SNR {target:.6g} not reachable; limit is {limit:.6g}")
        self.target = target
        self.limit = limit


@dataclass(frozen=True)
class DesignQuery:
    gamma: float = 10 ** (-0.1)
    snr0_db: float | None = None
    scan_cap: int = 1000
    np_cap: int = 1_000_000

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.scan_cap < 1 or self.np_cap < 1:
            raise ValueError("scan caps must be >= 1")


def min_pilot_length_formula(
    gamma: float, n_a: int, sigma_phi_sq: float, sigma_c_sq: float, sigma_w_sq: float
) -> float:
    """Approximate N_p reaching SNR >= gamma * sigma_C^2 / sigma_w^2."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if sigma_w_sq <= 0:
        raise ValueError("formula diverges for sigma_w^2 = 0")
    return (
        gamma * n_a * (sigma_phi_sq - sigma_c_sq + sigma_w_sq) * (sigma_c_sq + sigma_w_sq)
        / ((1.0 - gamma) * sigma_c_sq * sigma_w_sq)
    )


def np_star_approx(cfg: SystemConfig, gamma: float) -> tuple[float, bool]:
    """(approximate minimum N_p, whether gamma * (N_a + 1) >= VALIDITY_FACTOR)."""
    phi = analytic.sigma_phi_sq(cfg)
    sc = analytic.sigma_c_sq_exact(cfg)
    value = min_pilot_length_formula(gamma, cfg.n_a, phi, sc, cfg.sigma_w_sq)
    return value, gamma * (cfg.n_a + 1) >= VALIDITY_FACTOR


def snr_ceiling(cfg: SystemConfig) -> float:
    """Perfect-CSI SNR sigma_C^2 / sigma_w^2, the N_p -> infinity limit."""
    if cfg.sigma_w_sq == 0:
        return math.inf
    return analytic.sigma_c_sq_exact(cfg) / cfg.sigma_w_sq


def np_star_numeric(cfg: SystemConfig, target_snr: float, np_cap: int = 1_000_000) -> int:
    """Smallest integer N_p <= np_cap whose analytic SNR reaches target_snr.

    Galloping search followed by bisection, which relies on the SNR growing
    with N_p.  If a probe ever shows the SNR decreasing, falls back to a
    linear scan.
    """
    snr = lambda n: analytic.snr(cfg, n_p=n)
    if target_snr <= snr(1):
        return 1
    if snr(np_cap) < target_snr:
        raise UnreachableTargetError(target_snr, snr_ceiling(cfg))

    lo, hi = 1, 2
    prev = snr(1)
    while hi < np_cap:
        cur = snr(hi)
        if cur < prev:
            return _linear_scan(snr, target_snr, np_cap)
        if cur >= target_snr:
            break
        prev = cur
        lo, hi = hi, min(2 * hi, np_cap)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if snr(mid) >= target_snr:
            hi = mid
        else:
            lo = mid
    return hi


def _linear_scan(snr, target, cap):
    log.warning("SNR not monotone in N_p; falling back to a linear scan")
    for n in range(1, cap + 1):
        if snr(n) >= target:
            return n
    raise UnreachableTargetError(target, snr(cap))


def contamination_objective(cfg: SystemConfig, n_a: int) -> float:
    """sigma_C^2 / (N_a (sigma_phi^2 - sigma_C^2)): SNR per pilot symbol as noise -> 0."""
    c = cfg.replace(n_a=n_a)
    return analytic.sigma_c_sq_exact(c) / (n_a * analytic.out_of_cluster_energy(c))


def contamination_scan(cfg: SystemConfig, scan_cap: int = 1000) -> np.ndarray:
    return np.array([contamination_objective(cfg, n) for n in range(1, scan_cap + 1)])


@dataclass(frozen=True)
class ClusterSize:
    n_a: int
    cap_reached: bool = False

    def __str__(self):
        return f">={self.n_a}" if self.cap_reached else str(self.n_a)


def na_star_contamination(cfg: SystemConfig, query: DesignQuery = DesignQuery()) -> ClusterSize:
    """Cluster size maximising the noiseless large-N_p SNR; ties go to the smaller N_a."""
    values = contamination_scan(cfg, query.scan_cap)
    best = int(np.argmax(values)) + 1
    return ClusterSize(best, cap_reached=best == query.scan_cap)


def na_suboptimal(cfg: SystemConfig, query: DesignQuery, gamma: float) -> int:
    """Smallest N_a whose objective is within a factor gamma of the best over the scan.

    When the optimum sits at the scan cap, the best value is the objective at
    the cap, i.e. an arbitrarily large cluster is stood in for by scan_cap.
    """
    if not 0 < gamma <= 1:
        raise ValueError("gamma must lie in (0, 1]")
    values = contamination_scan(cfg, query.scan_cap)
    threshold = gamma * values.max()
    return int(np.flatnonzero(values >= threshold)[0]) + 1


def best_cluster_size(cfg: SystemConfig, n_p: float | None = None, scan_cap: int = 64) -> int:
    """N_a maximising the analytic SNR at fixed N_p and noise."""
    values = [analytic.snr(cfg.replace(n_a=n), n_p=n_p) for n in range(1, scan_cap + 1)]
    return int(np.argmax(values)) + 1


@dataclass(frozen=True)
class Crossover:
    """Pilot length above which N_a = 2 beats N_a = 1.

    ``n_p`` is None when no sign change exists in range; ``dominant`` then
    names the cluster size that wins throughout.
    """

    n_p: float | None
    dominant: int | None = None


def _snr_difference(cfg: SystemConfig):
    one, two = cfg.replace(n_a=1), cfg.replace(n_a=2)
    return lambda n: analytic.snr(two, n_p=n) - analytic.snr(one, n_p=n)


def ncjt_crossover(cfg: SystemConfig, np_cap: float = 1e6, rtol: float = 1e-6) -> Crossover:
    """Real-valued N_p where the two-AP and single-AP SNRs are equal."""
    g = _snr_difference(cfg)
    grid = np.geomspace(1.0, np_cap, 241)
    vals = np.array([g(n) for n in grid])
    if np.all(vals > 0):
        return Crossover(None, dominant=2)
    if np.all(vals <= 0):
        return Crossover(None, dominant=1)
    # last upward sign change: above it N_a = 2 stays ahead
    idx = np.flatnonzero((vals[:-1] <= 0) & (vals[1:] > 0))
    if len(idx) == 0:
        return Crossover(None, dominant=1 if vals[-1] <= 0 else 2)
    i = idx[-1]
    root = optimize.brentq(g, grid[i], grid[i + 1], rtol=rtol, xtol=1e-12)
    return Crossover(float(root))
