"""Hybrid beamformers: sensing precoder, SVD communication design and factorization.

Transmit-side gains use the non-conjugated form a^T f, because the echo model
carries the transmit response as F^T A^T with A = a a^T. Receive-side gains use
a^H w as usual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ArrayGeometry, steering_matrix, steering_vector
from .scenario import ScenarioConfig

GAIN_FLOOR_DB = -120.0


@dataclass(frozen=True)
class HybridBeamformer:
    """Analog (constant modulus) times digital beamformer.

    ``effective`` is the matrix the link actually uses. For the sensing
    precoder and the optimized combiner it equals ``analog @ digital``
    exactly; for SVD designs it is the ideal unconstrained matrix and
    ``residual`` records how far the hybrid realization is from it.
    """

    analog: np.ndarray
    digital: np.ndarray
    effective: np.ndarray
    side: str = "tx"
    residual: float = 0.0
    residual_history: tuple = field(default=(), repr=False)

    @classmethod
    def from_factors(cls, analog: np.ndarray, digital: np.ndarray, side: str = "tx",
                     **kw) -> "HybridBeamformer":
        return cls(analog, digital, analog @ digital, side, **kw)

    @property
    def num_streams(self) -> int:
        return self.effective.shape[1]

    @property
    def num_antennas(self) -> int:
        return self.effective.shape[0]

    def realized(self) -> np.ndarray:
        return self.analog @ self.digital

    def check_constraints(self, atol: float = 1e-10) -> None:
        n = self.analog.shape[0]
        if not np.allclose(np.abs(self.analog), 1 / np.sqrt(n), atol=atol):
            raise AssertionError("analog beamformer violates the constant-modulus constraint")
        energy = np.linalg.norm(self.effective) ** 2
        if abs(energy - self.num_streams) > atol * max(1.0, self.num_streams):
            raise AssertionError(f"||effective||_F^2 = {energy}, expected {self.num_streams}")


def normalize_streams(M: np.ndarray) -> np.ndarray:
    """Scale so that ||M||_F^2 equals the number of columns."""
    nrm = np.linalg.norm(M)
    if nrm == 0:
        raise ValueError("cannot normalize an all-zero beamformer")
    return M * np.sqrt(M.shape[1]) / nrm


def sensing_precoder(theta_bar: float, phi_bar: float, cfg: ScenarioConfig,
                     num_streams: int | None = None) -> HybridBeamformer:
    """All RF chains steered at (theta_bar, phi_bar)."""
    ns = num_streams or cfg.num_streams
    n_rf = cfg.num_rf_chains_tx
    geom = ArrayGeometry.from_config(cfg)
    # conj so that the transmit gain a^T f peaks at the steering direction
    col = np.conj(steering_vector(theta_bar, phi_bar, geom))
    analog = np.tile(col[:, None], (1, n_rf))
    # unit-norm columns, so ||F||_F^2 = N_s holds without rescaling
    digital = np.full((n_rf, ns), 1.0 / n_rf, dtype=complex)
    return HybridBeamformer.from_factors(analog, digital, side="tx")


def steering_combiner(gene_angles, cfg: ScenarioConfig,
                      num_streams: int | None = None) -> HybridBeamformer:
    """Receive combiner whose analog columns are steering vectors at the given angles.

    The digital part is a truncated identity, so stream s uses gene s.
    """
    ns = num_streams or cfg.num_streams
    angles = np.asarray(gene_angles, dtype=float).reshape(-1, 2)
    analog = steering_matrix(angles[:, 0], angles[:, 1], ArrayGeometry.from_config(cfg))
    digital = np.eye(angles.shape[0], ns, dtype=complex)
    return HybridBeamformer.from_factors(analog, digital, side="rx")


def factorize_hybrid(target: np.ndarray, n_rf: int, iters: int = 50, tol: float = 1e-8,
                     side: str = "tx") -> HybridBeamformer:
    """Alternating minimization of ||target - analog @ digital||_F.

    The digital step is a least-squares solve. The analog step takes the
    entrywise phase of target @ digital^H and is kept only when it does not
    increase the residual, so the residual history is non-increasing. Two
    starts are run (phases of the leading left singular vectors, and phases
    of the target columns themselves) and the lower final residual wins.
    """
    target = np.asarray(target, dtype=complex)
    n_ant, ns = target.shape
    if n_rf < ns:
        raise ValueError(f"need n_rf >= N_s, got n_rf={n_rf}, N_s={ns}")
    scale = 1.0 / np.sqrt(n_ant)

    def phase(M):
        return scale * np.exp(1j * np.angle(M))

    def solve(analog):
        digital = np.linalg.lstsq(analog, target, rcond=None)[0]
        return digital, np.linalg.norm(target - analog @ digital)

    def descend(analog):
        digital, res = solve(analog)
        history = [res]
        for _ in range(iters):
            if res < tol:
                break
            cand = phase(target @ digital.conj().T)
            cand_digital, cand_res = solve(cand)
            if cand_res > res:
                break
            improvement = res - cand_res
            analog, digital, res = cand, cand_digital, cand_res
            history.append(res)
            if improvement < tol:
                break
        return analog, digital, res, history

    u = np.linalg.svd(target, full_matrices=True)[0]
    starts = [phase(u[:, :n_rf]),
              phase(np.column_stack([target, u[:, ns:n_rf]]))]
    analog, digital, res, history = min((descend(s) for s in starts), key=lambda r: r[2])
    return HybridBeamformer(analog, digital, target, side, float(res), tuple(history))


def comm_channel(cfg: ScenarioConfig, rng: np.random.Generator,
                 los_direction: tuple[float, float] | None = None) -> np.ndarray:
    """Geometric multipath channel from the base-station array to the user array.

    H_c = sqrt(N_t N_r) sum_l gamma_l a_r(theta_l^r, phi_l^r) a_t(theta_l^t, phi_l^t)^T.
    Path 0 leaves toward the sensing target; its power exceeds each scattered
    path by ``comm_los_dominance_db``. Path powers sum to one.
    """
    n_paths = cfg.comm_num_paths
    tx_geom = ArrayGeometry.from_config(cfg)
    rx_geom = ArrayGeometry(cfg.comm_upa_y, cfg.comm_upa_z, cfg.element_spacing_wavelengths)
    los = los_direction or (cfg.target_azimuth_deg, cfg.target_elevation_deg)
    theta_t = np.concatenate([[los[0]], rng.uniform(-60, 60, n_paths - 1)])
    phi_t = np.concatenate([[los[1]], rng.uniform(60, 120, n_paths - 1)])
    theta_r = rng.uniform(-60, 60, n_paths)
    phi_r = rng.uniform(60, 120, n_paths)
    power = np.ones(n_paths)
    power[0] = 10 ** (cfg.comm_los_dominance_db / 10)
    power /= power.sum()
    gamma = np.sqrt(power / 2) * (rng.standard_normal(n_paths) + 1j * rng.standard_normal(n_paths))
    At = steering_matrix(theta_t, phi_t, tx_geom)
    Ar = steering_matrix(theta_r, phi_r, rx_geom)
    return np.sqrt(tx_geom.size * rx_geom.size) * (Ar * gamma) @ At.T


def svd_comm_design(H_c: np.ndarray, cfg: ScenarioConfig, num_streams: int | None = None,
                    rcond: float = 1e-10) -> tuple[HybridBeamformer, HybridBeamformer]:
    """Leading right/left singular vectors as precoder/combiner, plus hybrid realizations."""
    ns = num_streams or cfg.num_streams
    U, s, Vh = np.linalg.svd(H_c)
    if len(s) < ns or s[ns - 1] <= rcond * s[0]:
        raise ValueError(f"channel rank below N_s={ns}; singular values {s[:ns]}")
    F = normalize_streams(Vh[:ns].conj().T)
    C = normalize_streams(U[:, :ns])
    n_rf_rx = min(cfg.num_rf_chains_rx, C.shape[0])
    return (factorize_hybrid(F, cfg.num_rf_chains_tx, side="tx"),
            factorize_hybrid(C, n_rf_rx, side="rx"))


def spectral_efficiency(H_c: np.ndarray, F: np.ndarray, C: np.ndarray, rho: float,
                        sigma_n2: float) -> float:
    """log2 det(I + rho/N_s R_n^-1 C^H H F F^H H^H C), R_n = sigma_n^2 C^H C."""
    ns = F.shape[1]
    Rn = sigma_n2 * (C.conj().T @ C)
    if np.linalg.matrix_rank(Rn) < Rn.shape[0]:
        raise np.linalg.LinAlgError("noise covariance C^H C is singular")
    G = C.conj().T @ H_c @ F
    M = np.eye(C.shape[1]) + (rho / ns) * np.linalg.solve(Rn, G @ G.conj().T)
    sign, logdet = np.linalg.slogdet(M)
    return float(logdet / np.log(2))


def beampattern(bf: HybridBeamformer, theta_grid, phi_grid, geom: ArrayGeometry) -> np.ndarray:
    """Summed per-stream power gain in dB, shape (len(theta_grid), len(phi_grid))."""
    th, ph = np.meshgrid(np.asarray(theta_grid, float), np.asarray(phi_grid, float), indexing="ij")
    A = steering_matrix(th.ravel(), ph.ravel(), geom)
    resp = A.T @ bf.effective if bf.side == "tx" else A.conj().T @ bf.effective
    power = np.sum(np.abs(resp) ** 2, axis=1).reshape(th.shape)
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(power)
    return np.maximum(db, GAIN_FLOOR_DB)
