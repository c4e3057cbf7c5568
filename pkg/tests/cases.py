"""Random desk-scale sensing instances and target helpers shared by tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from oddm_isac.beamforming import sensing_precoder, steering_combiner
from oddm_isac.channel import DelayDopplerOperator
from oddm_isac.crlb import frame_gram
from oddm_isac.scenario import ScenarioConfig, TargetParams, derive_delay_doppler
from oddm_isac.waveform import random_streams


@dataclass
class FimCase:
    cfg: ScenarioConfig
    theta: float
    phi: float
    tau: float
    nu: float
    alpha: complex
    X_dd: np.ndarray
    F: np.ndarray
    W: np.ndarray

    def gram(self):
        l = self.tau / self.cfg.sample_period
        k = self.nu * self.cfg.frame_length * self.cfg.sample_period
        return frame_gram(self.X_dd, DelayDopplerOperator.from_config(l, k, self.cfg), self.cfg)


def random_case(rng: np.random.Generator, cfg: ScenarioConfig | None = None) -> FimCase:
    cfg = cfg or ScenarioConfig()
    theta, phi = rng.uniform(-40, 40), rng.uniform(60, 120)
    target = TargetParams(theta, phi, rng.uniform(10, 70), rng.uniform(-80, 80))
    dd = derive_delay_doppler(target, cfg)
    n = cfg.num_rf_chains_rx
    genes = np.column_stack([theta + rng.uniform(-6, 6, n), phi + rng.uniform(-6, 6, n)])
    F = sensing_precoder(theta + rng.uniform(-3, 3), phi + rng.uniform(-3, 3), cfg).effective
    W = steering_combiner(genes, cfg).effective
    alpha = 0.01 * rng.uniform(0.5, 2) * np.exp(2j * np.pi * rng.uniform())
    X_dd = random_streams(cfg.num_delay_bins, cfg.num_doppler_bins, cfg.num_streams, rng)
    return FimCase(cfg, theta, phi, dd.delay_s, dd.doppler_hz, alpha, X_dd, F, W)


def entrywise_relative_error(J, ref):
    """|J - ref| / |ref| per entry; exact structural zeros are scaled by the diagonal."""
    scale = np.sqrt(np.outer(np.diag(ref), np.diag(ref)))
    return np.abs(J - ref) / np.maximum(np.abs(ref), 1e-6 * scale)


def target_at(cfg: ScenarioConfig, theta: float, phi: float, l: float, k: float,
              alpha: complex = 0.01) -> TargetParams:
    """Target whose normalized delay and Doppler are exactly (l, k)."""
    c0 = 299_792_458.0
    tau = l * cfg.sample_period
    nu = k / (cfg.frame_length * cfg.sample_period)
    return TargetParams(theta, phi, c0 * tau / 2, c0 * nu / (2 * cfg.carrier_frequency_hz), alpha)
