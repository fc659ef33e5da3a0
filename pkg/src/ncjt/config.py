"""System parameters for the NCJT network model."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace


class ConfigError(ValueError):
    """Raised for parameter combinations outside the model's domain."""


# r0 as a fraction of the mean nearest-AP distance 1/(2*sqrt(lambda))
REFERENCE_DISTANCE_FRACTION = 0.08


def reference_distance(lam: float) -> float:
    """Default reference distance r0 = 0.08 / (2 sqrt(lambda))."""
    if lam <= 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    return REFERENCE_DISTANCE_FRACTION / (2.0 * math.sqrt(lam))


@dataclass(frozen=True)
class SystemConfig:
    """Scalar model parameters.

    lam          AP density (APs per unit area)
    alpha        path loss factor, must exceed 2
    r0           reference distance of the bounded path loss law
    sigma_w_sq   noise variance normalised by the transmit power
    n_a          cluster size (number of nearest APs serving the UE)
    n_p          pilot sequence length
    epsilon_trunc
                 fraction of the network energy sigma_phi^2 allowed to fall
                 outside the simulation window
    """

    lam: float = 1.0
    alpha: float = 3.67
    r0: float = 0.04
    sigma_w_sq: float = 0.0
    n_a: int = 1
    n_p: int = 1
    epsilon_trunc: float = 1e-4

    def __post_init__(self):
        if not self.alpha > 2:
            raise ConfigError(f"alpha must exceed 2, got {self.alpha}")
        if not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if not self.r0 > 0:
            raise ConfigError(f"r0 must be positive, got {self.r0}")
        if not self.sigma_w_sq >= 0:
            raise ConfigError(f"sigma_w_sq must be non-negative, got {self.sigma_w_sq}")
        if int(self.n_a) != self.n_a or self.n_a < 1:
            raise ConfigError(f"n_a must be a positive integer, got {self.n_a}")
        if int(self.n_p) != self.n_p or self.n_p < 1:
            raise ConfigError(f"n_p must be a positive integer, got {self.n_p}")
        if not 0 < self.epsilon_trunc < 1:
            raise ConfigError(f"epsilon_trunc must lie in (0, 1), got {self.epsilon_trunc}")
        object.__setattr__(self, "n_a", int(self.n_a))
        object.__setattr__(self, "n_p", int(self.n_p))

    @classmethod
    def preset(cls, alpha: float = 3.67, lam: float = 1.0, **kwargs) -> "SystemConfig":
        """Config with the default reference distance r0 = 0.08/(2 sqrt(lam))."""
        return cls(lam=lam, alpha=alpha, r0=reference_distance(lam), **kwargs)

    @property
    def mean_aps_in_reference_disk(self) -> float:
        return self.lam * math.pi * self.r0**2

    def replace(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)
