"""Received signal strength model: log-distance path loss, Gaussian
shadowing and bearing-dependent antenna lobes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class LobeModel:
    """Fourier-series gain pattern in dB over the receiver-frame bearing.

    The constant term is left out; it is absorbed into the nominal RSSI.
    """

    order: int = 3
    cosine_coeffs: tuple[float, ...] = (1.0, 1.0, 1.0)
    sine_coeffs: tuple[float, ...] = (1.0, 1.0, 1.0)
    fundamental_period: float = 2.0 * math.pi

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("lobe order must be >= 1")
        object.__setattr__(self, "cosine_coeffs", tuple(float(c) for c in self.cosine_coeffs))
        object.__setattr__(self, "sine_coeffs", tuple(float(c) for c in self.sine_coeffs))
        if len(self.cosine_coeffs) != self.order or len(self.sine_coeffs) != self.order:
            raise ValueError(
                f"lobe model of order {self.order} needs {self.order} cosine and sine coefficients"
            )
        if not self.fundamental_period > 0:
            raise ValueError("fundamental_period must be positive")

    @classmethod
    def unitary(cls, order: int = 3) -> "LobeModel":
        return cls(order, (1.0,) * order, (1.0,) * order)


@dataclass(frozen=True)
class ChannelParams:
    p_n: float = -63.0
    gamma_l: float = 2.0
    sigma_shadow: float = 5.0
    lobe: LobeModel | None = field(default_factory=LobeModel.unitary)
    quantize: bool = False

    def __post_init__(self):
        if not self.gamma_l > 0:
            raise ValueError(f"gamma_l must be > 0, got {self.gamma_l}")
        if not self.sigma_shadow >= 0:
            raise ValueError(f"sigma_shadow must be >= 0, got {self.sigma_shadow}")


def ld_model(rho, params: ChannelParams):
    """Noise-free log-distance RSSI in dB. Accepts scalars or arrays."""
    r = np.asarray(rho, dtype=float)
    if np.any(~(r > 0)):
        raise ValueError("log-distance model needs rho > 0")
    out = params.p_n - 10.0 * params.gamma_l * np.log10(r)
    return float(out) if out.ndim == 0 else out


def invert_ld(s, params: ChannelParams):
    """Range in meters that the log-distance model maps to RSSI ``s``."""
    out = 10.0 ** ((params.p_n - np.asarray(s, dtype=float)) / (10.0 * params.gamma_l))
    return float(out) if out.ndim == 0 else out


def lobe_gain(beta, lobe: LobeModel | None):
    b = np.asarray(beta, dtype=float)
    out = np.zeros_like(b)
    if lobe is not None:
        w = 2.0 * math.pi / lobe.fundamental_period
        for n, (a_n, b_n) in enumerate(zip(lobe.cosine_coeffs, lobe.sine_coeffs), start=1):
            out = out + a_n * np.cos(n * w * b) + b_n * np.sin(n * w * b)
    return float(out) if out.ndim == 0 else out


def rssi_mean(rho, beta, params: ChannelParams):
    """Expected RSSI at true range/bearing (path loss plus lobes)."""
    return ld_model(rho, params) + lobe_gain(beta, params.lobe)


def sample_rssi(true_rho: float, true_beta: float, params: ChannelParams, rng: np.random.Generator) -> float:
    """One noisy RSSI reading; draws exactly one standard normal from ``rng``."""
    if not true_rho > 0:
        raise ValueError("sample_rssi needs true_rho > 0")
    n = rng.standard_normal()
    return float(noisy_rssi(true_rho, true_beta, params, n))


def noisy_rssi(rho, beta, params: ChannelParams, std_normal):
    """RSSI from pre-drawn standard normals; used by the batched simulator."""
    s = rssi_mean(rho, beta, params) + params.sigma_shadow * np.asarray(std_normal)
    if params.quantize:
        s = np.round(s)
    return s
