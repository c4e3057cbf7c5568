"""Independent slow reference implementations used only by the tests.

Nothing here imports the fast paths under test; each oracle builds the
quantity entrywise or as an explicit dense matrix.
"""

from __future__ import annotations

import numpy as np


def raised_cosine(t, beta):
    """Entrywise raised cosine; removable singularities by a symmetric limit."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(t)
    for i, ti in enumerate(t):
        if ti == 0.0:
            out[i] = 1.0
            continue
        if beta > 0 and abs(abs(2 * beta * ti) - 1.0) < 1e-9:
            eps = 1e-6
            out[i] = 0.5 * (raised_cosine(ti + eps, beta)[0] + raised_cosine(ti - eps, beta)[0])
            continue
        s = np.sin(np.pi * ti) / (np.pi * ti)
        out[i] = s * np.cos(np.pi * beta * ti) / (1.0 - (2 * beta * ti) ** 2)
    return out


def dense_delay_matrix(l, size, half_span, beta, cp):
    """G[k, q] = g(([k - q - l + cp]_size - cp) T_s), truncated to |t| <= Q T_s, by loops."""
    G = np.zeros((size, size))
    for k in range(size):
        for q in range(size):
            t = ((k - q - l + cp) % size) - cp
            if abs(t) <= half_span + 1e-12:
                G[k, q] = raised_cosine(t, beta)[0]
    return G


def doppler_matrix(k, size):
    return np.diag(np.exp(2j * np.pi * k * np.arange(size) / size))


def unitary_dft(n):
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) / np.sqrt(n)


def oddm_matrix(M, N):
    """F_N^H kron I_M."""
    return np.kron(unitary_dft(N).conj().T, np.eye(M))


def cyclic_shift_matrix(l, size):
    """Pi^l with (Pi x)[i] = x[i - 1]."""
    return np.roll(np.eye(size), l, axis=0)


def steering(theta_deg, phi_deg, ny, nz, spacing=0.5):
    """a[n_z * ny + n_y] = exp(j 2 pi d (n_y sin th sin ph + n_z cos ph)) / sqrt(N)."""
    th, ph = np.deg2rad(theta_deg), np.deg2rad(phi_deg)
    a = np.empty(ny * nz, dtype=complex)
    for nz_i in range(nz):
        for ny_i in range(ny):
            phase = 2 * np.pi * spacing * (ny_i * np.sin(th) * np.sin(ph) + nz_i * np.cos(ph))
            a[nz_i * ny + ny_i] = np.exp(1j * phase)
    return a / np.sqrt(ny * nz)


def mimo_echo_dense(X_dd, F, W, targets, cfg):
    """Noiseless combined echo through the full N_r MN x N_t MN channel matrix.

    vec(R) = sqrt(N_t N_r) sum_p alpha_p (A_p kron Delta_p G_p) vec(X F^T), Y = R W^*.
    """
    M, N, MN = cfg.num_delay_bins, cfg.num_doppler_bins, cfg.frame_length
    c0 = 299_792_458.0
    X = oddm_matrix(M, N) @ X_dd
    S = X @ F.T  # per-antenna transmit samples, MN x N_t
    H = np.zeros((cfg.num_rx_antennas * MN, cfg.num_tx_antennas * MN), dtype=complex)
    for t in targets:
        tau = 2 * t.range_m / c0
        nu = 2 * cfg.carrier_frequency_hz * t.velocity_mps / c0
        Ts = 1 / (cfg.subcarrier_spacing_hz * M)
        l, k = tau / Ts, nu * MN * Ts
        DG = doppler_matrix(k, MN) @ dense_delay_matrix(l, MN, cfg.pulse_half_span, cfg.rolloff,
                                                       cfg.cp_length)
        a = steering(t.azimuth_deg, t.elevation_deg, cfg.upa_y, cfg.upa_z,
                     cfg.element_spacing_wavelengths)
        H += t.path_coeff * np.kron(np.outer(a, a), DG)
    H *= np.sqrt(cfg.num_tx_antennas * cfg.num_rx_antennas)
    r = H @ S.reshape(-1, order="F")
    R = r.reshape((MN, cfg.num_rx_antennas), order="F")
    return R @ W.conj()


def fisher_inverse_diag(J):
    return np.diag(np.linalg.inv(J))
