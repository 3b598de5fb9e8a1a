"""Emulated anycast control-packet channel.

Each node i turns its multiplier mu_i into category-tagged control packets:
category-j packets are emitted at rate r_ij = gamma * mu_i * corr[j,i] /
corr[i,j]. The packets ride the same anycast routing as data (a category-j
packet emitted by node i lands on node l with probability corr[i,l]), so the
rate of category-i packets received at node i is exactly gamma * beta_i with
beta_i = (corr @ mu)_i. Dividing by gamma recovers the coupling factor with
no explicit message exchange: the network performs the matrix-vector product.

Deterministic mode evaluates expected rates; poisson mode samples packet
counts over an observation window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemInstance

DETERMINISTIC = "deterministic"
POISSON = "poisson"


class ChannelError(ValueError):
    """Raised when the channel cannot operate (zero correlation entries)."""


@dataclass(frozen=True)
class ChannelConfig:
    gamma_rate: float = 10.0
    mode: str = DETERMINISTIC
    window: float = 1e3
    seed: int | None = 0

    def __post_init__(self):
        if self.gamma_rate <= 0.0:
            raise ValueError("gamma_rate must be > 0")
        if self.window <= 0.0:
            raise ValueError("window must be > 0")
        if self.mode not in (DETERMINISTIC, POISSON):
            raise ValueError(f"unknown channel mode {self.mode!r}")


@dataclass(frozen=True)
class EmissionMatrix:
    """r[i, j] = rate at which node i forces generation of category-j packets."""

    r: np.ndarray

    def __post_init__(self):
        self.r.setflags(write=False)


@dataclass
class BetaEstimate:
    beta: np.ndarray
    low_confidence: np.ndarray  # nodes that received zero packets in the window


def emit_rates(instance: SystemInstance, mu, config: ChannelConfig) -> EmissionMatrix:
    """Emission rates r_ij = gamma * mu_i * corr[j,i] / corr[i,j]."""
    if not instance.strictly_positive:
        raise ChannelError("control-packet channel requires strictly positive correlations")
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0.0):
        raise ValueError("multipliers must be >= 0")
    c = instance.corr
    r = config.gamma_rate * mu[:, None] * c.T / c
    return EmissionMatrix(r)


def route_and_receive(instance: SystemInstance, emission: EmissionMatrix,
                      config: ChannelConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Received rate of category-i packets at node i.

    Deterministic mode returns the expectation R_i = sum_j r[j,i] * corr[j,i].
    Poisson mode samples each generator's packet count over the window and
    thins it by the landing probability, returning counts / window.
    """
    r = emission.r
    c = instance.corr
    if config.mode == DETERMINISTIC:
        return np.einsum("ji,ji->i", r, c)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    generated = rng.poisson(r.T * config.window)  # generated[i, j]: category-i packets from node j
    landed = rng.binomial(generated, c.T)  # of those, the ones that land on node i
    return landed.sum(axis=1) / config.window


def recover_beta(received, config: ChannelConfig) -> np.ndarray:
    """beta_i = R_i / gamma."""
    received = np.asarray(received, dtype=float)
    if np.any(received < 0.0):
        raise ValueError("received rates must be >= 0")
    return received / config.gamma_rate


def channel_beta(instance: SystemInstance, mu, config: ChannelConfig,
                 rng: np.random.Generator | None = None) -> BetaEstimate:
    """One complete channel round trip, with the zero-reception guard.

    In deterministic mode the landing probability cancels the emission
    denominator exactly, so the recovered value is the exact coupling factor
    (computed without the spurious divide/multiply rounding of a literal
    emulation). Poisson mode runs the sampled pipeline; nodes that received
    no packets report beta = 0 flagged low-confidence instead of failing.
    """
    mu = np.asarray(mu, dtype=float)
    if config.mode == DETERMINISTIC:
        if not instance.strictly_positive:
            raise ChannelError("control-packet channel requires strictly positive correlations")
        beta = instance.corr @ mu
        return BetaEstimate(beta=beta, low_confidence=np.zeros(instance.n, dtype=bool))
    emission = emit_rates(instance, mu, config)
    received = route_and_receive(instance, emission, config, rng=rng)
    beta = recover_beta(received, config)
    return BetaEstimate(beta=beta, low_confidence=received == 0.0)
