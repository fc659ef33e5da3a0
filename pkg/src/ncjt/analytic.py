"""Closed-form and quadrature evaluation of the NCJT energies, error variance and SNR."""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .config import ConfigError, SystemConfig
from .model import tail_energy

log = logging.getLogger(__name__)


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


def sigma_phi_sq(cfg: SystemConfig) -> float:
    """Mean channel energy summed over every AP of the network."""
    a = cfg.alpha
    if a <= 2:
        raise ConfigError("sigma_phi^2 diverges for alpha <= 2")
    return a * cfg.lam * math.pi * cfg.r0**2 / (a - 2.0)


def _quad(f, lo, hi, scale, **kw):
    # scale: magnitude the absolute error is judged against
    if hi <= lo:
        return 0.0
    val, err, info = integrate.quad(
        f, lo, hi, epsabs=1e-13 * scale, epsrel=1e-11, limit=400, full_output=True, **kw
    )[:3]
    if err > 1e-10 * scale:
        raise QuadratureError(f"quadrature on [{lo:.4g}, {hi:.4g}] reached only {err:.3g}")
    return val


def _transition(n_a: int, lam: float) -> tuple[float, float]:
    # radii where the n_a-th nearest AP distance cdf leaves 0 and reaches 1
    z_lo = special.gammaincinv(n_a, 1e-15)
    z_hi = special.gammainccinv(n_a, 1e-18)
    return math.sqrt(z_lo / (math.pi * lam)), math.sqrt(z_hi / (math.pi * lam))


@functools.lru_cache(maxsize=65536)
def _cluster_energies(n_a: int, lam: float, alpha: float, r0: float) -> tuple[float, float]:
    """(sigma_C^2, sigma_phi^2 - sigma_C^2), each integrated directly."""
    z = lambda r: lam * math.pi * r * r
    pl = lambda r: (r0 / max(r0, r)) ** alpha
    # sigma_phi^2 / (2 pi lambda): tolerances are relative to it
    scale = alpha * r0 * r0 / (2.0 * (alpha - 2.0))
    r_lo, r_hi = _transition(n_a, lam)
    r_lo = max(r_lo, r0)
    r_hi = max(r_hi, r_lo)

    inside = lambda r: r * pl(r) * special.gammaincc(n_a, z(r))
    cluster = _quad(inside, 0.0, r0, scale) + _quad(inside, r0, r_lo, scale)
    cluster += _quad(inside, r_lo, r_hi, scale)

    outside = lambda r: r * pl(r) * special.gammainc(n_a, z(r))
    gap_scale = max(tail_energy_integral(r_hi, alpha, r0), 1e-300)
    gap = 0.0
    # separate scale: the out-of-cluster energy can be 1e-8 of the total
    for lo, hi in ((0.0, r0), (r0, r_lo), (r_lo, r_hi)):
        if hi > lo:
            val, err = integrate.quad(outside, lo, hi, epsabs=0.0, epsrel=1e-11, limit=400)[:2]
            if err > 1e-8 * max(abs(val), gap_scale):
                raise QuadratureError(f"out-of-cluster energy quadrature reached only {err:.3g}")
            gap += val
    gap += tail_energy_integral(r_hi, alpha, r0)
    return 2.0 * math.pi * lam * cluster, 2.0 * math.pi * lam * gap


def tail_energy_integral(radius: float, alpha: float, r0: float) -> float:
    """int_radius^inf r l(r) dr for radius >= r0."""
    return r0**alpha * radius ** (2.0 - alpha) / (alpha - 2.0)


def sigma_c_sq_exact(cfg: SystemConfig) -> float:
    """Mean energy of the NCJT channel of the n_a nearest APs.

    Integrates 2 pi lambda r l(r) Q(n_a, lambda pi r^2) with the regularised
    upper incomplete gamma Q, split at r0 and around the transition region
    of the n_a-th nearest distance.
    """
    return _cluster_energies(cfg.n_a, cfg.lam, cfg.alpha, cfg.r0)[0]


def out_of_cluster_energy(cfg: SystemConfig) -> float:
    """sigma_phi^2 - sigma_C^2, integrated with the regularised lower gamma to avoid cancellation."""
    return _cluster_energies(cfg.n_a, cfg.lam, cfg.alpha, cfg.r0)[1]


def sigma_c_sq_approx(cfg: SystemConfig) -> float:
    """Large-cluster approximation placing the n_a-th AP at its mean distance."""
    a = cfg.alpha
    correction = (2.0 / a) * (cfg.mean_aps_in_reference_disk / cfg.n_a) ** (a / 2.0 - 1.0)
    if correction > 1.0:
        log.warning("cluster energy approximation negative (correction %.3g); clamped to 0", correction)
        return 0.0
    return sigma_phi_sq(cfg) * (1.0 - correction)


def stieltjes_factor(a: float, b: float) -> float:
    """Large-system limit of (N_p/N_a) tr((N_a b I + P^H P)^-1).

    P is N_p x N_a with i.i.d. CN(0,1) entries and N_a/N_p -> a.  This is the
    Marchenko-Pastur Stieltjes transform m(-ab) of P^H P / N_p,

        f = [a - 1 - ab + sqrt((1 + a + ab)^2 - 4a)] / (2 a^2 b),

    evaluated in a form free of cancellation: with t = 1 - a + ab the radicand
    equals t^2 + 4 a^2 b, and f = 2 / (t + sqrt(t^2 + 4 a^2 b)).
    """
    if not (a > 0 and b > 0):
        raise ValueError(f"stieltjes_factor needs a > 0 and b > 0, got a={a}, b={b}")
    t = 1.0 - a + a * b
    root = math.sqrt(t * t + 4.0 * a * a * b)
    if t >= 0:
        return 2.0 / (t + root)
    return (root - t) / (2.0 * a * a * b)


def sigma_e_sq_asymptotic(cfg: SystemConfig, sigma_c_sq: float, sigma_phi_sq: float) -> float:
    """Asymptotic LMMSE error variance of the NCJT channel estimate."""
    if sigma_c_sq <= 0:
        raise ValueError("sigma_C^2 must be positive")
    if sigma_c_sq > sigma_phi_sq * (1 + 1e-12):
        raise ValueError("sigma_C^2 cannot exceed sigma_phi^2")
    noise = cfg.sigma_w_sq + max(sigma_phi_sq - sigma_c_sq, 0.0)
    return _error_variance(cfg.n_a, cfg.n_p, noise, sigma_c_sq)


def _error_variance(n_a: int, n_p: float, noise: float, sigma_c_sq: float) -> float:
    # noise: sigma_w^2 + out-of-cluster energy
    if noise == 0.0:
        return 0.0 if n_p >= n_a else sigma_c_sq * (1.0 - n_p / n_a)
    a = n_a / n_p
    value = a * noise * stieltjes_factor(a, noise / sigma_c_sq)
    if value > sigma_c_sq:
        log.warning("asymptotic error variance %.6g exceeds prior %.6g; clamped", value, sigma_c_sq)
        return sigma_c_sq
    return value


def snr_effective(sigma_c_sq: float, sigma_e_sq: float, sigma_w_sq: float) -> float:
    """Spatial-average data detection SNR under LMMSE channel estimation."""
    if sigma_e_sq < 0 or sigma_e_sq > sigma_c_sq * (1 + 1e-12):
        raise ValueError("need 0 <= sigma_e^2 <= sigma_C^2")
    denom = sigma_w_sq + sigma_e_sq
    if denom <= 0:
        raise ValueError("SNR undefined (infinite) for sigma_w^2 = sigma_e^2 = 0")
    return max(sigma_c_sq - sigma_e_sq, 0.0) / denom


def noise_for_snr0(cfg: SystemConfig, snr0: float) -> float:
    """Noise variance giving reference SNR snr0 = E|h_nearest|^2 / sigma_w^2."""
    if not snr0 > 0:
        raise ValueError("snr0 must be positive")
    return sigma_c_sq_exact(cfg.replace(n_a=1)) / snr0


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def linear_to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def snr_contamination_leading(cfg: SystemConfig, sigma_c_sq: float, sigma_phi_sq: float) -> float:
    """Leading term (N_p/N_a - 1) sigma_C^2 / (sigma_phi^2 - sigma_C^2) of the noiseless SNR."""
    if cfg.n_p < cfg.n_a:
        raise ValueError("leading-term SNR needs n_p >= n_a")
    gap = sigma_phi_sq - sigma_c_sq
    if gap <= 0:
        raise ValueError("undefined for sigma_C^2 = sigma_phi^2")
    return (cfg.n_p / cfg.n_a - 1.0) * sigma_c_sq / gap


def nth_nearest_pdf(s: int, rho, cfg: SystemConfig):
    """Density of the distance to the s-th nearest AP (log-space evaluation)."""
    if s < 1:
        raise ValueError("rank s must be >= 1")
    rho = np.asarray(rho, dtype=float)
    mu = math.pi * cfg.lam
    with np.errstate(divide="ignore"):
        logp = (
            math.log(2.0)
            + s * math.log(mu)
            - special.gammaln(s)
            + (2 * s - 1) * np.log(rho)
            - mu * rho**2
        )
    out = np.where(rho > 0, np.exp(logp), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class EnergySummary:
    sigma_phi_sq: float
    sigma_c_sq: float
    sigma_e_sq: float
    snr: float
    snr0: float


def energy_summary(cfg: SystemConfig, exact: bool = True) -> EnergySummary:
    """All derived scalars for cfg (exact cluster energy unless ``exact=False``)."""
    phi = sigma_phi_sq(cfg)
    if exact:
        sc, gap = sigma_c_sq_exact(cfg), out_of_cluster_energy(cfg)
    else:
        sc = sigma_c_sq_approx(cfg)
        gap = phi - sc
    se = _error_variance(cfg.n_a, cfg.n_p, cfg.sigma_w_sq + gap, sc)
    if cfg.sigma_w_sq > 0:
        snr0 = sigma_c_sq_exact(cfg.replace(n_a=1)) / cfg.sigma_w_sq
    else:
        snr0 = math.inf
    snr = snr_effective(sc, se, cfg.sigma_w_sq) if cfg.sigma_w_sq + se > 0 else math.inf
    return EnergySummary(phi, sc, se, snr, snr0)


def snr(cfg: SystemConfig, n_p: float | None = None) -> float:
    """Analytic SNR for cfg; n_p may be real-valued to override cfg.n_p."""
    sc, gap = sigma_c_sq_exact(cfg), out_of_cluster_energy(cfg)
    se = _error_variance(cfg.n_a, cfg.n_p if n_p is None else n_p, cfg.sigma_w_sq + gap, sc)
    return snr_effective(sc, se, cfg.sigma_w_sq)


def expected_tail_fraction(cfg: SystemConfig, r_max: float) -> float:
    """Share of sigma_phi^2 carried by APs beyond r_max."""
    return tail_energy(cfg, r_max) / sigma_phi_sq(cfg)
