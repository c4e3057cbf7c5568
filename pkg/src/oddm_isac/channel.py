"""Off-grid doubly-selective channel, UPA array responses and the MIMO echo model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .scenario import ScenarioConfig, TargetParams, derive_delay_doppler
from .waveform import oddm_modulate, pulse_g_truncated


# -- delay / Doppler operators ---------------------------------------------------------


@dataclass(frozen=True)
class DelayDopplerOperator:
    """Delta(k) G(l) acting on length-MN frames.

    ``l`` and ``k`` are the normalized delay and Doppler and may be fractional.
    """

    l: float
    k: float
    half_span: int
    size: int
    rolloff: float = 0.1
    cp_length: int | None = None

    @classmethod
    def from_config(cls, l: float, k: float, cfg: ScenarioConfig) -> "DelayDopplerOperator":
        return cls(l, k, cfg.pulse_half_span, cfg.frame_length, cfg.rolloff, cfg.cp_length)

    def taps(self) -> tuple[np.ndarray, np.ndarray]:
        """Tap offsets m in [-Q, Q+1] and weights g((m - frac(l)) T_s)."""
        frac = self.l - np.floor(self.l)
        m = np.arange(-self.half_span, self.half_span + 2)
        return m, pulse_g_truncated(m - frac, self.rolloff, self.half_span)

    def delay_response(self) -> np.ndarray:
        """DFT of the circulant's first column; G x = ifft(response * fft(x))."""
        m, h = self.taps()
        kernel = np.zeros(self.size, dtype=float)
        # integer part of the delay folded into the kernel as a circular shift
        np.add.at(kernel, (m + int(np.floor(self.l))) % self.size, h)
        return np.fft.fft(kernel)

    def doppler_diagonal(self) -> np.ndarray:
        return np.exp(2j * np.pi * self.k * np.arange(self.size) / self.size)

    def apply_delay(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        resp = self.delay_response()
        if x.ndim == 2:
            resp = resp[:, None]
        return np.fft.ifft(resp * np.fft.fft(x, axis=0), axis=0)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Fast O(MN log MN) application to a vector or to each column of a matrix."""
        x = np.asarray(x)
        if x.shape[0] != self.size:
            raise ValueError(f"operator size {self.size} does not match input length {x.shape[0]}")
        d = self.doppler_diagonal()
        y = self.apply_delay(x)
        return d[:, None] * y if y.ndim == 2 else d * y

    def dense_delay(self) -> np.ndarray:
        """Entrywise G[k, q] = g(([k - q - l + M_cp]_MN - M_cp) T_s); O((MN)^2) memory."""
        cp = self.cp_length if self.cp_length is not None else self.half_span + 1
        idx = np.arange(self.size)
        arg = np.mod(idx[:, None] - idx[None, :] - self.l + cp, self.size) - cp
        return pulse_g_truncated(arg, self.rolloff, self.half_span)

    def dense(self) -> np.ndarray:
        return self.doppler_diagonal()[:, None] * self.dense_delay()


def apply_delay_doppler(op: DelayDopplerOperator, x: np.ndarray) -> np.ndarray:
    return op.apply(x)


def target_operator(target: TargetParams, cfg: ScenarioConfig) -> DelayDopplerOperator:
    dd = derive_delay_doppler(target, cfg)
    return DelayDopplerOperator.from_config(dd.l, dd.k, cfg)


# -- array responses ----------------------------------------------------------------------


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array in the yz-plane; spacing in wavelengths."""

    ny: int
    nz: int
    spacing: float = 0.5

    @classmethod
    def from_config(cls, cfg: ScenarioConfig) -> "ArrayGeometry":
        return cls(cfg.upa_y, cfg.upa_z, cfg.element_spacing_wavelengths)

    @property
    def size(self) -> int:
        return self.ny * self.nz


def _factors(theta_deg, phi_deg, geom: ArrayGeometry):
    th, ph = np.deg2rad(theta_deg), np.deg2rad(phi_deg)
    c = 2 * np.pi * geom.spacing
    ny, nz = np.arange(geom.ny), np.arange(geom.nz)
    a_y = np.exp(1j * c * ny * np.sin(th) * np.sin(ph)) / np.sqrt(geom.ny)
    a_z = np.exp(1j * c * nz * np.cos(ph)) / np.sqrt(geom.nz)
    return th, ph, c, ny, nz, a_y, a_z


def steering_vector(theta_deg: float, phi_deg: float, geom: ArrayGeometry) -> np.ndarray:
    """a(theta, phi) = a_z(phi) kron a_y(theta, phi), unit norm."""
    *_, a_y, a_z = _factors(theta_deg, phi_deg, geom)
    return np.kron(a_z, a_y)


def steering_matrix(thetas_deg, phis_deg, geom: ArrayGeometry) -> np.ndarray:
    """Steering vectors for paired angle arrays, stacked as columns (N x K)."""
    th = np.deg2rad(np.atleast_1d(thetas_deg))[None, None, :]
    ph = np.deg2rad(np.atleast_1d(phis_deg))[None, None, :]
    c = 2 * np.pi * geom.spacing
    ny = np.arange(geom.ny)[None, :, None]
    nz = np.arange(geom.nz)[:, None, None]
    phase = c * (ny * np.sin(th) * np.sin(ph) + nz * np.cos(ph))
    return (np.exp(1j * phase) / np.sqrt(geom.size)).reshape(geom.size, -1)


def steering_derivatives(theta_deg: float, phi_deg: float,
                         geom: ArrayGeometry) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form da/dtheta and da/dphi, per radian."""
    th, ph, c, ny, nz, a_y, a_z = _factors(theta_deg, phi_deg, geom)
    dy_a = np.kron(a_z, ny * a_y)
    dz_a = np.kron(nz * a_z, a_y)
    da_dtheta = 1j * c * np.cos(th) * np.sin(ph) * dy_a
    da_dphi = 1j * c * (-np.sin(ph)) * dz_a + 1j * c * np.sin(th) * np.cos(ph) * dy_a
    return da_dtheta, da_dphi


@dataclass(frozen=True)
class ArrayResponse:
    steering: np.ndarray

    @property
    def sensing_matrix(self) -> np.ndarray:
        """A = a a^T (symmetric, rank one)."""
        return np.outer(self.steering, self.steering)


def array_response(theta_deg: float, phi_deg: float, geom: ArrayGeometry) -> ArrayResponse:
    return ArrayResponse(steering_vector(theta_deg, phi_deg, geom))


# -- end-to-end channels -------------------------------------------------------------------


def siso_channel(x: np.ndarray, targets: Sequence[TargetParams], cfg: ScenarioConfig) -> np.ndarray:
    """Noiseless sum_p alpha_p Delta_p G_p x."""
    x = np.asarray(x, dtype=complex)
    y = np.zeros_like(x)
    for t in targets:
        y += t.path_coeff * target_operator(t, cfg).apply(x)
    return y


def dd_to_time(X_dd: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    """(F_N^H kron I_M) applied to each stream column of an MN x N_s matrix."""
    M, N = cfg.num_delay_bins, cfg.num_doppler_bins
    X_dd = np.asarray(X_dd)
    return np.stack(
        [oddm_modulate(X_dd[:, s].reshape((M, N), order="F")) for s in range(X_dd.shape[1])], axis=1
    )


def complex_noise(shape, variance: float, rng: np.random.Generator) -> np.ndarray:
    return np.sqrt(variance / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def mimo_receive(X_dd: np.ndarray, F: np.ndarray, W: np.ndarray, targets: Sequence[TargetParams],
                 cfg: ScenarioConfig, noise_rng: np.random.Generator | None = None,
                 noise_variance: float | None = None) -> np.ndarray:
    """Combined time-domain echo Y (MN x N_s) of the hybrid-beamformed monostatic link.

    Y = sqrt(N_t N_r) sum_p alpha_p Delta_p G_p X F^T A_p^T W^* + N W^*, with
    X the ODDM-modulated streams. The spatial part W^H A F is rank one, so the
    delay-Doppler operator is applied to a single MN-vector per target and the
    N_r MN x N_t MN channel matrix is never formed. Noise is skipped when
    ``noise_rng`` is None.
    """
    X_dd = np.asarray(X_dd)
    MN, Ns = cfg.frame_length, X_dd.shape[1]
    if X_dd.shape[0] != MN:
        raise ValueError(f"X_dd must have {MN} rows, got {X_dd.shape[0]}")
    if F.shape != (cfg.num_tx_antennas, Ns) or W.shape != (cfg.num_rx_antennas, Ns):
        raise ValueError(
            f"precoder {F.shape} / combiner {W.shape} inconsistent with "
            f"N_t={cfg.num_tx_antennas}, N_r={cfg.num_rx_antennas}, N_s={Ns}"
        )
    X = dd_to_time(X_dd, cfg)
    geom = ArrayGeometry.from_config(cfg)
    gain = np.sqrt(cfg.num_tx_antennas * cfg.num_rx_antennas)
    Y = np.zeros((MN, Ns), dtype=complex)
    for t in targets:
        op = target_operator(t, cfg)
        a = steering_vector(t.azimuth_deg, t.elevation_deg, geom)
        tx_gain = F.T @ a            # F^T a
        rx_gain = W.conj().T @ a     # W^H a
        Y += gain * t.path_coeff * np.outer(op.apply(X @ tx_gain), rx_gain)
    if noise_rng is not None:
        var = cfg.noise_variance if noise_variance is None else noise_variance
        Y += complex_noise((MN, cfg.num_rx_antennas), var, noise_rng) @ W.conj()
    return Y
