"""Seeded Monte Carlo runners that check the analytic engine.

Two engines produce the same statistics:

``pipeline``
    One trial at a time through the model/estimator API: sample_network,
    channel_vector, pilot_signal, build_context, estimate.  Each trial owns a
    stream derived from (seed, trial index).  Slow, but a literal transcription
    of the system model.

``batch``
    Blocks of trials vectorised with numpy.  The PPP is drawn radially (the
    ranked squared distances times pi*lambda are partial sums of unit
    exponentials), the out-of-cluster pilot interference is drawn through its
    conditional law CN(0, sum |h_x|^2 I), and the cluster pilot Gram matrix
    P^H P and the projected noise P^H g are drawn through a complex Bartlett
    factor, so the cost per trial does not grow with N_p.  Each block owns a
    stream derived from (seed, block index); block boundaries depend only on
    the config, so results do not depend on the worker count.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import analytic
from .config import SystemConfig
from .estimator import build_context, estimate
from .model import (
    DegenerateDrawError,
    channel_vector,
    complex_normal,
    disk_average_path_loss,
    path_loss,
    pilot_signal,
    sample_network,
    tail_energy,
    window_radius,
)

log = logging.getLogger(__name__)

WORKERS_ENV = "NCJT_WORKERS"

# spawn-key tags keep the stream families of different runners apart
_PIPELINE, _BATCH, _ENERGY, _WISHART, _WINDOW = range(5)

QPSK = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / math.sqrt(2.0)


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def default_workers() -> int:
    return max(1, int(os.environ.get(WORKERS_ENV, "1")))


@dataclass
class TrialResult:
    squared_error: float
    cluster_energy: float
    estimate_energy: float
    symbol_errors: int = 0
    symbols_sent: int = 0
    rejected: bool = False
    cross: complex = 0j  # conj(estimate) * error
    # E[squared_error | cluster geometry, cluster pilots]; see conditional_error
    conditional_error: float = math.nan


@dataclass(frozen=True)
class RunSummary:
    trials: int
    rejected: int
    mse: float
    mse_stderr: float
    mean_cluster_energy: float
    cluster_energy_stderr: float
    mean_estimate_energy: float
    estimate_energy_stderr: float
    ser: float = math.nan
    ser_stderr: float = math.nan
    symbols: int = 0
    seed: int = 0
    engine: str = "batch"
    # sample mean of conj(estimate) * error; zero by the orthogonality principle
    cross_correlation: complex = 0j
    cross_correlation_stderr: float = 0.0
    # same target as mse, averaged out over fading and out-of-cluster APs
    mse_conditional: float = math.nan
    mse_conditional_stderr: float = math.nan


def _mean_stderr(x: np.ndarray) -> tuple[float, float]:
    n = len(x)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(x) / n
    if n < 2:
        return mean, math.nan
    var = math.fsum((x - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def _summarise(arrays: dict, seed: int, engine: str) -> RunSummary:
    ok = ~arrays["rejected"]
    trials = int(ok.sum())
    if trials == 0:
        raise RuntimeError("every trial was rejected (window held fewer APs than the cluster)")
    mse, mse_se = _mean_stderr(arrays["squared_error"][ok])
    mc_, mc_se = _mean_stderr(arrays["conditional_error"][ok])
    ce, ce_se = _mean_stderr(arrays["cluster_energy"][ok])
    ee, ee_se = _mean_stderr(arrays["estimate_energy"][ok])
    cross = arrays["cross"][ok]
    cr, cr_se = _mean_stderr(cross.real)
    ci, ci_se = _mean_stderr(cross.imag)
    sent = arrays["symbols_sent"][ok]
    errors = arrays["symbol_errors"][ok]
    symbols = int(sent.sum())
    if symbols:
        ser = errors.sum() / symbols
        _, ser_se = _mean_stderr(errors / np.maximum(sent, 1))
    else:
        ser, ser_se = math.nan, math.nan
    return RunSummary(
        trials=trials,
        rejected=int((~ok).sum()),
        mse=mse,
        mse_stderr=mse_se,
        mean_cluster_energy=ce,
        cluster_energy_stderr=ce_se,
        mean_estimate_energy=ee,
        estimate_energy_stderr=ee_se,
        ser=float(ser),
        ser_stderr=ser_se,
        symbols=symbols,
        seed=seed,
        engine=engine,
        cross_correlation=complex(cr, ci),
        cross_correlation_stderr=math.hypot(cr_se, ci_se),
        mse_conditional=mc_,
        mse_conditional_stderr=mc_se,
    )


def _priors(cfg: SystemConfig) -> tuple[float, float]:
    """(sigma_C^2, sigma_phi^2) known to the UE."""
    return analytic.sigma_c_sq_exact(cfg), analytic.sigma_phi_sq(cfg)


def conditional_error(gains, v, gram, reg, far_energy, sigma_w_sq):
    """E|e|^2 given the cluster path gains, the cluster pilot Gram and the N_a-th distance.

    With v = (reg I + W)^-1 1 the error is reg v^T h_C minus the filtered
    interference, so averaging over the cluster fading and over the
    out-of-cluster APs (a PPP beyond the N_a-th nearest distance, whose
    expected energy is ``far_energy``) gives

        reg^2 sum_i l_i |v_i|^2 + (far_energy + sigma_w^2) v^H W v.

    Works on single trials (1-D gains) and on blocks (leading batch axis).
    """
    gains = np.asarray(gains)
    v = np.asarray(v)
    quad = np.real(np.einsum("...i,...ij,...j->...", np.conj(v), gram, v))
    prior = reg * reg * (gains * np.abs(v) ** 2).sum(axis=-1)
    return prior + (np.asarray(far_energy) + sigma_w_sq) * quad


# -- detection -----------------------------------------------------------------


def qpsk_errors(rng: np.random.Generator, chi, chi_hat, sigma_w_sq: float, n_symbols: int):
    """Symbol errors of equalise-and-slice QPSK detection, per trial.

    chi and chi_hat have shape (trials,); returns integer counts of shape (trials,).
    """
    chi = np.atleast_1d(chi)
    chi_hat = np.atleast_1d(chi_hat)
    idx = rng.integers(0, 4, size=(len(chi), n_symbols))
    noise = math.sqrt(sigma_w_sq) * complex_normal(rng, (len(chi), n_symbols))
    received = QPSK[idx] * chi[:, None] + noise
    dead = chi_hat == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        z = received / np.where(dead, 1.0, chi_hat)[:, None]
    decided = np.where(z.real >= 0, np.where(z.imag >= 0, 0, 3), np.where(z.imag >= 0, 1, 2))
    errors = (decided != idx).sum(axis=1)
    if dead.any():
        log.warning("%d trials with a zero channel estimate; all their symbols counted as errors", dead.sum())
        errors[dead] = n_symbols
    return errors


# -- pipeline engine -------------------------------------------------------------


def pipeline_trial(cfg: SystemConfig, seed: int, index: int, priors, n_symbols: int = 0) -> TrialResult:
    rng = stream(seed, _PIPELINE, index)
    sc, phi = priors
    try:
        net = sample_network(cfg, rng)
    except DegenerateDrawError:
        return TrialResult(math.nan, math.nan, math.nan, rejected=True)
    ch = channel_vector(net, cfg)
    y = pilot_signal(net, ch, cfg, rng)
    ctx = build_context(net.cluster_pilots, sc, phi, cfg.sigma_w_sq)
    _, chi_hat = estimate(ctx, y)
    chi = ch.cluster_sum
    v = ctx.solve(np.ones(cfg.n_a, dtype=complex))
    cond = float(conditional_error(
        path_loss(net.distances[: cfg.n_a], cfg), v, ctx.pilot_gram, ctx.regularizer,
        tail_energy(cfg, net.distances[cfg.n_a - 1]), cfg.sigma_w_sq,
    ))
    errors = 0
    if n_symbols:
        errors = int(qpsk_errors(rng, chi, chi_hat, cfg.sigma_w_sq, n_symbols)[0])
    return TrialResult(
        abs(chi - chi_hat) ** 2,
        abs(chi) ** 2,
        abs(chi_hat) ** 2,
        errors,
        n_symbols,
        cross=np.conj(chi_hat) * (chi - chi_hat),
        conditional_error=cond,
    )


def _pipeline_chunk(args):
    cfg, seed, start, stop, priors, n_symbols = args
    return [pipeline_trial(cfg, seed, i, priors, n_symbols) for i in range(start, stop)]


def _pipeline_arrays(results: list[TrialResult]) -> dict:
    return {
        "squared_error": np.array([r.squared_error for r in results]),
        "cluster_energy": np.array([r.cluster_energy for r in results]),
        "estimate_energy": np.array([r.estimate_energy for r in results]),
        "cross": np.array([r.cross for r in results], dtype=complex),
        "conditional_error": np.array([r.conditional_error for r in results]),
        "symbol_errors": np.array([r.symbol_errors for r in results]),
        "symbols_sent": np.array([r.symbols_sent for r in results]),
        "rejected": np.array([r.rejected for r in results]),
    }


# -- batch engine ------------------------------------------------------------------


def block_size(cfg: SystemConfig) -> int:
    """Trials per block; a deterministic function of the config only."""
    mu = cfg.lam * math.pi * window_radius(cfg) ** 2
    columns = mu + 6.0 * math.sqrt(mu) + 20.0 + cfg.n_a * cfg.n_a
    if cfg.n_p < cfg.n_a:
        columns += cfg.n_p * cfg.n_a
    return int(min(4096, max(16, 2 ** int(math.log2(2**21 / columns)))))


def ranked_squared_radii(rng: np.random.Generator, size: int, mu: float) -> np.ndarray:
    """pi*lambda*rho_s^2 for every PPP point with pi*lambda*rho^2 <= mu, padded with inf.

    Rows are partial sums of unit exponentials, so the count below mu is
    Poisson(mu) and each row is sorted.
    """
    width = int(math.ceil(mu + 6.0 * math.sqrt(mu) + 20.0))
    g = np.cumsum(rng.standard_exponential((size, width)), axis=1)
    while np.any(g[:, -1] <= mu):
        more = np.cumsum(rng.standard_exponential((size, width)), axis=1) + g[:, -1:]
        g = np.concatenate([g, more], axis=1)
    g[g > mu] = np.inf
    return g


def bartlett_factor(rng: np.random.Generator, size: int, n_p: int, n_a: int) -> np.ndarray:
    """Lower-triangular L with L L^H distributed as P^H P, P (n_p x n_a) i.i.d. CN(0,1)."""
    shapes = n_p - np.arange(n_a)
    diag = np.sqrt(rng.standard_gamma(shapes, size=(size, n_a)))
    L = np.tril(complex_normal(rng, (size, n_a, n_a)), k=-1)
    L[:, np.arange(n_a), np.arange(n_a)] = diag
    return L


def _batch_training(cfg: SystemConfig, rng: np.random.Generator, size: int, priors, r_max: float):
    """Simulate training for one block; returns (chi, chi_hat, conditional error, rejected)."""
    sc, phi = priors
    n_a, n_p = cfg.n_a, cfg.n_p
    mu = cfg.lam * math.pi * r_max**2
    g = ranked_squared_radii(rng, size, mu)
    rejected = ~np.isfinite(g[:, n_a - 1])
    rho = np.sqrt(np.where(np.isfinite(g), g, mu) / (cfg.lam * math.pi))
    gain = np.where(np.isfinite(g), path_loss(rho, cfg), 0.0)

    h = complex_normal(rng, (size, n_a)) * np.sqrt(gain[:, :n_a])
    power = rng.standard_exponential(gain.shape)
    interference = (power[:, n_a:] * gain[:, n_a:]).sum(axis=1)
    spread = np.sqrt(interference + tail_energy(cfg, r_max) + cfg.sigma_w_sq)

    if n_p >= n_a:
        L = bartlett_factor(rng, size, n_p, n_a)
        gram = L @ np.conj(np.swapaxes(L, 1, 2))
        z = complex_normal(rng, (size, n_a))
        rhs = (gram @ h[..., None])[..., 0] + spread[:, None] * (L @ z[..., None])[..., 0]
    else:
        P = complex_normal(rng, (size, n_p, n_a))
        PH = np.conj(np.swapaxes(P, 1, 2))
        gram = PH @ P
        y = (P @ h[..., None])[..., 0] + spread[:, None] * complex_normal(rng, (size, n_p))
        rhs = (PH @ y[..., None])[..., 0]

    reg = n_a * (cfg.sigma_w_sq + phi - sc) / sc
    system = gram + reg * np.eye(n_a)
    ones = np.ones((size, n_a), dtype=complex)
    sol = np.linalg.solve(system, np.stack([rhs, ones], axis=-1))
    h_hat, v = sol[..., 0], sol[..., 1]
    far = np.array([tail_energy(cfg, r) for r in rho[:, n_a - 1]])
    cond = conditional_error(gain[:, :n_a], v, gram, reg, far, cfg.sigma_w_sq)
    return h.sum(axis=1), h_hat.sum(axis=1), cond, rejected


def _batch_block(args):
    cfg, seed, block, size, priors, n_symbols, r_max = args
    rng = stream(seed, _BATCH, block)
    chi, chi_hat, cond, rejected = _batch_training(cfg, rng, size, priors, r_max)
    out = {
        "squared_error": np.abs(chi - chi_hat) ** 2,
        "cluster_energy": np.abs(chi) ** 2,
        "estimate_energy": np.abs(chi_hat) ** 2,
        "cross": np.conj(chi_hat) * (chi - chi_hat),
        "conditional_error": cond,
        "symbol_errors": np.zeros(size, dtype=np.int64),
        "symbols_sent": np.zeros(size, dtype=np.int64),
        "rejected": rejected,
    }
    if n_symbols:
        out["symbol_errors"] = qpsk_errors(rng, chi, chi_hat, cfg.sigma_w_sq, n_symbols)
        out["symbols_sent"][:] = n_symbols
    return out


def _blocks(trials: int, size: int):
    n_blocks = -(-trials // size)
    return [(b, min(size, trials - b * size)) for b in range(n_blocks)]


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _concat(parts: list[dict]) -> dict:
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _run(cfg, trials, seed, n_symbols, engine, workers):
    if trials < 1:
        raise ValueError("trials must be >= 1")
    workers = default_workers() if workers is None else workers
    priors = _priors(cfg)
    if engine == "pipeline":
        chunk = max(1, -(-trials // max(1, workers * 4)))
        jobs = [(cfg, seed, s, min(s + chunk, trials), priors, n_symbols) for s in range(0, trials, chunk)]
        results = [r for part in _map(_pipeline_chunk, jobs, workers) for r in part]
        return _summarise(_pipeline_arrays(results), seed, engine)
    if engine == "batch":
        r_max = window_radius(cfg)
        jobs = [
            (cfg, seed, b, size, priors, n_symbols, r_max)
            for b, size in _blocks(trials, block_size(cfg))
        ]
        return _summarise(_concat(_map(_batch_block, jobs, workers)), seed, engine)
    raise ValueError(f"unknown engine {engine!r}")


def run_mse_trials(cfg: SystemConfig, trials: int, seed: int, engine: str = "batch", workers=None) -> RunSummary:
    """Average |1^T h_C - 1^T h_hat_C|^2 over independent networks, fading and pilots."""
    return _run(cfg, trials, seed, 0, engine, workers)


def run_ser_trials(
    cfg: SystemConfig,
    trials: int,
    seed: int,
    symbols_per_trial: int = 10,
    engine: str = "batch",
    workers=None,
) -> RunSummary:
    """Uncoded QPSK symbol error rate with the LMMSE estimate used for equalisation.

    Every trial draws one network and training phase, then sends
    ``symbols_per_trial`` symbols over the resulting channel.
    """
    if symbols_per_trial < 1:
        raise ValueError("symbols_per_trial must be >= 1")
    return _run(cfg, trials, seed, symbols_per_trial, engine, workers)


# -- cluster energy ------------------------------------------------------------------


@dataclass(frozen=True)
class EnergyEstimate:
    """Two Monte Carlo estimates of sigma_C^2 from the same PPP draws.

    ``raw`` averages |1^T h_C|^2.  ``conditional`` averages its conditional
    mean given the distance to the (N_a+1)-th AP, N_a times the disk average of
    the path loss (given that distance the cluster APs are uniform in the
    disk).  Both are unbiased; the second has far smaller variance because it
    does not depend on whether an AP happens to land inside r0.
    """

    raw: float
    raw_stderr: float
    conditional: float
    conditional_stderr: float
    trials: int
    seed: int


def _energy_block(args):
    cfg, seed, block, size = args
    rng = stream(seed, _ENERGY, block)
    n_a = cfg.n_a
    g = np.cumsum(rng.standard_exponential((size, n_a + 1)), axis=1)
    rho = np.sqrt(g / (cfg.lam * math.pi))
    h = complex_normal(rng, (size, n_a)) * np.sqrt(path_loss(rho[:, :n_a], cfg))
    raw = np.abs(h.sum(axis=1)) ** 2
    cond = n_a * disk_average_path_loss(rho[:, n_a], cfg)
    return raw, cond


def run_energy_trials(cfg: SystemConfig, trials: int, seed: int, workers=None) -> EnergyEstimate:
    """Cluster energy of the n_a nearest APs of an unbounded PPP."""
    workers = default_workers() if workers is None else workers
    jobs = [(cfg, seed, b, size) for b, size in _blocks(trials, 8192)]
    parts = _map(_energy_block, jobs, workers)
    raw = np.concatenate([p[0] for p in parts])
    cond = np.concatenate([p[1] for p in parts])
    return EnergyEstimate(*_mean_stderr(raw), *_mean_stderr(cond), trials=trials, seed=seed)


def run_window_energy(cfg: SystemConfig, trials: int, seed: int, r_max: float) -> tuple[float, float]:
    """Mean |sum of every channel in the window|^2 with its stderr.

    Uses the radial construction, so calls with the same seed and a larger
    window reuse the same inner points and differ only by the annulus.
    """
    mu_big = cfg.lam * math.pi * r_max**2
    out = []
    for b, size in _blocks(trials, 2048):
        rng = stream(seed, _WINDOW, b)
        g = ranked_squared_radii(rng, size, mu_big)
        rho = np.sqrt(np.where(np.isfinite(g), g, 0.0) / (cfg.lam * math.pi))
        gain = np.where(np.isfinite(g), path_loss(rho, cfg), 0.0)
        out.append(np.abs((complex_normal(rng, gain.shape) * np.sqrt(gain)).sum(axis=1)) ** 2)
    return _mean_stderr(np.concatenate(out))


# -- random matrix oracle ---------------------------------------------------------


@dataclass(frozen=True)
class WishartEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    n_a: int
    n_p: int
    draws: int


def wishart_f_oracle(a: float, b, n_a: int = 200, draws: int = 100, seed: int = 0) -> WishartEstimate:
    """Average of (N_p/N_a) tr((N_a b I + P^H P)^-1) over draws of P.

    ``b`` may be an array; the eigenvalues of each P^H P are reused for all b.
    """
    if a <= 0 or n_a < 1 or draws < 1:
        raise ValueError("need a > 0, n_a >= 1, draws >= 1")
    b = np.atleast_1d(np.asarray(b, dtype=float))
    n_p = max(1, int(round(n_a / a)))
    samples = np.empty((draws, len(b)))
    for d in range(draws):
        rng = stream(seed, _WISHART, d)
        P = complex_normal(rng, (n_p, n_a))
        eig = np.linalg.eigvalsh(P.conj().T @ P)
        samples[d] = (n_p / n_a) * (1.0 / (n_a * b[:, None] + eig[None, :])).sum(axis=1)
    mean = samples.mean(axis=0)
    stderr = samples.std(axis=0, ddof=1) / math.sqrt(draws) if draws > 1 else np.full(len(b), np.nan)
    return WishartEstimate(mean, stderr, n_a, n_p, draws)
