"""Link-level physics: transceiver distortion, SINDR, rates, energy efficiency.

Hardware impairment is modeled through error-vector-magnitude style
coefficients: a transmit distortion that propagates through every channel the
transmitter excites, and a receive distortion that rides on the direct link's
received power. Both systems (primary "p", secondary "s") share the band, so
each receiver sees its own system's residual interference plus everything the
other system radiates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import GainMatrices

# -173 dBm/Hz thermal noise density over a 10 MHz band = -103 dBm.
DEFAULT_NOISE_POWER_W = 10.0 ** (-13.3)


@dataclass(frozen=True)
class RadioConfig:
    """Impairment coefficients, budgets and QoS constants for both systems."""

    kappa_t_p: float = 0.1
    kappa_r_p: float = 0.1
    kappa_t_s: float = 0.1
    kappa_r_s: float = 0.1
    noise_power: float = DEFAULT_NOISE_POWER_W
    p_max_p: float = 1.0
    p_max_s: float = 1.0
    rate_threshold: float = 0.5
    tau: float = 1.0
    p_circuit: float = 0.1
    rho_decode: float = 0.1

    def __post_init__(self):
        for name in ("kappa_t_p", "kappa_r_p", "kappa_t_s", "kappa_r_s"):
            k = getattr(self, name)
            if not 0.0 <= k <= 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5]")
        if self.noise_power <= 0.0:
            raise ValueError("noise_power must be positive")
        if self.p_max_p <= 0.0 or self.p_max_s <= 0.0:
            raise ValueError("power caps must be positive")
        if self.rate_threshold < 0.0:
            raise ValueError("rate_threshold must be non-negative")
        if self.tau < 0.0:
            raise ValueError("tau must be non-negative")
        if self.p_circuit <= 0.0:
            raise ValueError("p_circuit must be positive")
        if self.rho_decode < 0.0:
            raise ValueError("rho_decode must be non-negative")


@dataclass(frozen=True, eq=False)
class PowerAllocation:
    """Applied (already clamped) transmit powers for both systems, in watts."""

    p_primary: np.ndarray
    p_secondary: np.ndarray

    def __post_init__(self):
        for name in ("p_primary", "p_secondary"):
            p = getattr(self, name)
            if p.ndim != 1:
                raise ValueError(f"{name} must be 1-D")
            if p.size and (not np.all(np.isfinite(p)) or np.any(p < 0.0)):
                raise ValueError(f"{name} entries must be finite and non-negative")


@dataclass(frozen=True, eq=False)
class LinkMetrics:
    """Per-link physics results for one channel draw and power allocation."""

    sindr_p: np.ndarray
    sindr_s: np.ndarray
    rate_p: np.ndarray
    rate_s: np.ndarray
    ee_s: np.ndarray
    nack_p: np.ndarray
    nqos_p: int


def _check_dims(h: GainMatrices, p: PowerAllocation) -> None:
    if p.p_primary.shape[0] != h.k_p or p.p_secondary.shape[0] != h.k_s:
        raise ValueError("power vector lengths must match gain matrix dimensions")


def distortion_powers(
    h: GainMatrices, p: PowerAllocation, cfg: RadioConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Aggregate distortion power at each primary and secondary receiver.

    Receiver distortion scales with the direct link's received power
    (kappa_r**2 * h_kk * P_k). Transmit distortion from every transmitter,
    the desired one included, arrives through the corresponding channel, so
    the sums below run over all j including j = k.
    """
    _check_dims(h, p)
    pp, ps = p.p_primary, p.p_secondary
    kt_p2 = cfg.kappa_t_p**2
    kr_p2 = cfg.kappa_r_p**2
    kt_s2 = cfg.kappa_t_s**2
    kr_s2 = cfg.kappa_r_s**2
    d_p = kr_p2 * np.diag(h.h_pp) * pp + kt_p2 * (pp @ h.h_pp) + kt_s2 * (ps @ h.h_sp)
    d_s = kr_s2 * np.diag(h.h_ss) * ps + kt_s2 * (ps @ h.h_ss) + kt_s2 * (pp @ h.h_ps)
    return d_p, d_s


def compute_sindr(
    h: GainMatrices, p: PowerAllocation, cfg: RadioConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Per-link SINDR for both systems.

    Each link k sees its own direct power over noise + distortion + same-system
    interference (j != k) + everything the other system transmits.
    """
    _check_dims(h, p)
    pp, ps = p.p_primary, p.p_secondary
    d_p, d_s = distortion_powers(h, p, cfg)

    off_pp = h.h_pp.copy()
    np.fill_diagonal(off_pp, 0.0)
    off_ss = h.h_ss.copy()
    np.fill_diagonal(off_ss, 0.0)

    direct_p = np.diag(h.h_pp) * pp
    denom_p = cfg.noise_power + d_p + pp @ off_pp + ps @ h.h_sp
    direct_s = np.diag(h.h_ss) * ps
    denom_s = cfg.noise_power + d_s + ps @ off_ss + pp @ h.h_ps
    return direct_p / denom_p, direct_s / denom_s


def compute_rates(sindr: np.ndarray) -> np.ndarray:
    """Spectral efficiency log2(1 + sindr) in bit/s/Hz."""
    sindr = np.asarray(sindr, dtype=float)
    if np.any(sindr < 0.0):
        raise ValueError("sindr must be non-negative")
    return np.log2(1.0 + sindr)


def energy_efficiency(
    rate_s: np.ndarray, p_s: np.ndarray, cfg: RadioConfig
) -> np.ndarray:
    """Bits per joule proxy: rate / (tau * (p + p_circuit) + rho_decode * rate)."""
    rate_s = np.asarray(rate_s, dtype=float)
    p_s = np.asarray(p_s, dtype=float)
    denom = cfg.tau * (p_s + cfg.p_circuit) + cfg.rho_decode * rate_s
    ee = np.zeros_like(rate_s)
    mask = rate_s > 0.0
    ee[mask] = rate_s[mask] / denom[mask]
    return ee


def nqos(rate_p: np.ndarray, cfg: RadioConfig) -> tuple[np.ndarray, int]:
    """Per-link NACK flags and their count for the primary system.

    A link NACKs iff its rate is strictly below the threshold; hitting the
    threshold exactly counts as satisfied.
    """
    rate_p = np.asarray(rate_p, dtype=float)
    nack = (rate_p < cfg.rate_threshold).astype(np.int64)
    return nack, int(nack.sum())


def evaluate_links(h: GainMatrices, p: PowerAllocation, cfg: RadioConfig) -> LinkMetrics:
    """Full physics chain for one channel draw: SINDR, rates, EE, QoS flags."""
    sindr_p, sindr_s = compute_sindr(h, p, cfg)
    rate_p = compute_rates(sindr_p)
    rate_s = compute_rates(sindr_s)
    ee_s = energy_efficiency(rate_s, p.p_secondary, cfg)
    nack_p, count = nqos(rate_p, cfg)
    return LinkMetrics(
        sindr_p=sindr_p,
        sindr_s=sindr_s,
        rate_p=rate_p,
        rate_s=rate_s,
        ee_s=ee_s,
        nack_p=nack_p,
        nqos_p=count,
    )
