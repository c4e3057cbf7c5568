"""Three-stage single-target estimator: MUSIC angles, grid ML delay-Doppler, joint refinement.

All stages maximize the normalized correlation |tr(Y^H B)|^2 / ||B||_F^2 between
the (optionally whitened) combined echo Y and the noiseless template
B(tau, nu, theta, phi) = sqrt(N_t N_r) Delta G X F^T A^T W^*. The template is
rank one, B = s v^T, so tr(Y^H B) = (Y v^*)^H s and ||B||^2 = ||s||^2 ||v||^2.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from .channel import (ArrayGeometry, DelayDopplerOperator, dd_to_time, steering_matrix,
                      steering_vector)
from .scenario import ScenarioConfig, delay_to_range, doppler_to_velocity

PSEUDOSPECTRUM_DETECTION_DB = 6.0


@dataclass
class EstimationResult:
    theta_deg: float
    phi_deg: float
    range_m: float
    velocity_mps: float
    alpha_hat: complex
    objective: float
    tau_s: float = float("nan")
    doppler_hz: float = float("nan")
    l: float = float("nan")
    k: float = float("nan")
    refined: bool = True
    low_confidence: bool = False
    stage_trace: dict = field(default_factory=dict)


def alpha_hat(Y: np.ndarray, B: np.ndarray) -> complex:
    """Least-squares path coefficient tr(B^H Y) / ||B||_F^2.

    This is the conjugate of tr(Y^H B) / ||B||_F^2, which is what makes a
    noiseless Y = alpha B return alpha rather than alpha^*.
    """
    nrm2 = np.vdot(B, B).real
    if nrm2 == 0:
        raise ValueError("template B is identically zero")
    return complex(np.vdot(B, Y) / nrm2)


class MatchedObjective:
    """Evaluates the normalized template correlation for one observation.

    With ``whiten`` the echo is right-multiplied by (W^H W)^{-1/2 T}, which turns
    the combined noise white; the objective then has the same form in the
    whitened coordinates.
    """

    def __init__(self, Y: np.ndarray, X_dd: np.ndarray, F: np.ndarray, W: np.ndarray,
                 cfg: ScenarioConfig, whiten: bool = True):
        self.cfg = cfg
        self.geom = ArrayGeometry.from_config(cfg)
        self.F, self.W = F, W
        self.X = dd_to_time(X_dd, cfg)
        self.gain = np.sqrt(cfg.num_tx_antennas * cfg.num_rx_antennas)
        if whiten:
            gram = W.conj().T @ W
            self.T = scipy.linalg.fractional_matrix_power(gram, -0.5).T
        else:
            self.T = np.eye(W.shape[1])
        self.Yw = np.asarray(Y) @ self.T
        self.evaluations = 0

    def spatial(self, theta: float, phi: float):
        a = steering_vector(theta, phi, self.geom)
        u = self.X @ (self.F.T @ a)
        v = self.T.T @ (self.gain * (self.W.conj().T @ a))
        return u, v

    def operator(self, l: float, k: float) -> DelayDopplerOperator:
        return DelayDopplerOperator.from_config(l, k, self.cfg)

    def correlate(self, theta, phi, l, k):
        """Returns (tr(Yw^H Bw), ||Bw||^2)."""
        self.evaluations += 1
        u, v = self.spatial(theta, phi)
        s = self.operator(l, k).apply(u)
        corr = np.vdot(self.Yw @ v.conj(), s)
        return corr, np.vdot(s, s).real * np.vdot(v, v).real

    def __call__(self, theta, phi, l, k) -> float:
        corr, nrm2 = self.correlate(theta, phi, l, k)
        return float(abs(corr) ** 2 / nrm2) if nrm2 > 0 else 0.0

    def alpha(self, theta, phi, l, k) -> complex:
        corr, nrm2 = self.correlate(theta, phi, l, k)
        return complex(np.conj(corr) / nrm2)

    def template(self, theta, phi, l, k) -> np.ndarray:
        """Unwhitened B = sqrt(N_t N_r) Delta G X F^T A^T W^*."""
        a = steering_vector(theta, phi, self.geom)
        s = self.operator(l, k).apply(self.X @ (self.F.T @ a))
        return np.outer(s, self.gain * (self.W.conj().T @ a))


# -- stage 1 ----------------------------------------------------------------------------------


def angle_grid(theta_center: float, phi_center: float, half_width: float = 8.0,
               step: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    n = int(round(half_width / step))
    offs = np.arange(-n, n + 1) * step
    return theta_center + offs, phi_center + offs


def music_angles(Y: np.ndarray, W: np.ndarray, cfg: ScenarioConfig, grid: tuple,
                 whiten: bool = True) -> tuple[float, float, np.ndarray, bool]:
    """MUSIC over a (theta, phi) grid with one signal eigenvector.

    R_y = Y^T Y^* / MN. With ``whiten`` the generalized problem R_y u = lambda W^H W u
    is solved, so colored combiner noise does not bias the noise subspace.
    Returns (theta, phi, pseudospectrum[theta, phi], confident).
    """
    Y = np.asarray(Y)
    ns = W.shape[1]
    if ns < 2:
        raise ValueError("MUSIC needs at least two combined streams")
    R = Y.T @ Y.conj() / Y.shape[0]
    if not np.any(R):
        raise ValueError("received covariance is identically zero")
    if whiten:
        _, U = scipy.linalg.eigh(R, W.conj().T @ W)
    else:
        _, U = np.linalg.eigh(R)
    Un = U[:, : ns - 1]  # ascending eigenvalues: all but the largest
    thetas, phis = (np.asarray(g, float) for g in grid)
    th, ph = np.meshgrid(thetas, phis, indexing="ij")
    A = steering_matrix(th.ravel(), ph.ravel(), ArrayGeometry.from_config(cfg))
    WA = W.conj().T @ A
    num = np.sum(np.abs(WA) ** 2, axis=0)
    den = np.sum(np.abs(Un.conj().T @ WA) ** 2, axis=0)
    spec = (num / np.maximum(den, 1e-300)).reshape(th.shape)
    idx = np.unravel_index(np.argmax(spec), spec.shape)
    confident = 10 * np.log10(spec.max() / np.median(spec)) > PSEUDOSPECTRUM_DETECTION_DB
    return float(thetas[idx[0]]), float(phis[idx[1]]), spec, bool(confident)


# -- stage 2 ----------------------------------------------------------------------------------


def delay_doppler_grid_search(obj: MatchedObjective, theta: float, phi: float) -> tuple[int, int, float]:
    """Exhaustive search over integer l in [0, M_cp) and integer k in [-N/2, N/2).

    For each l the Doppler axis is evaluated with one FFT over the sample index.
    Ties resolve to the lowest (l, k) index.
    """
    cfg = obj.cfg
    MN, N = cfg.frame_length, cfg.num_doppler_bins
    u, v = obj.spatial(theta, phi)
    y = obj.Yw @ v.conj()
    ks = np.arange(-(N // 2), N - N // 2)
    vv = np.vdot(v, v).real
    best = (0, 0, -np.inf)
    for l in range(cfg.cp_length):
        s = obj.operator(l, 0).apply_delay(u)
        # sum_i conj(y_i) s_i e^{j 2 pi k i / MN} for all k at once
        corr = np.fft.ifft(np.conj(y) * s) * MN
        vals = np.abs(corr[ks % MN]) ** 2 / (np.vdot(s, s).real * vv)
        j = int(np.argmax(vals))
        if vals[j] > best[2]:
            best = (l, int(ks[j]), float(vals[j]))
    obj.evaluations += cfg.cp_length
    return best


def _coordinate_search(obj: MatchedObjective, x0: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                       active: tuple, rel_tol: float = 1e-10, max_cycles: int = 100,
                       xatol: float = 1e-8) -> tuple[np.ndarray, float, int]:
    """Cyclic bounded scalar maximization over the ``active`` coordinates."""
    x = x0.astype(float).copy()
    fx = obj(*x)
    cycles = 0
    for cycles in range(1, max_cycles + 1):
        f_start = fx
        for i in active:
            def neg(t, i=i):
                z = x.copy()
                z[i] = t
                return -obj(*z)

            res = minimize_scalar(neg, bounds=(lower[i], upper[i]), method="bounded",
                                  options={"xatol": xatol})
            if -res.fun > fx:
                x[i], fx = res.x, -res.fun
        if abs(fx - f_start) <= rel_tol * max(abs(fx), 1e-300):
            break
    return x, fx, cycles


def ml_delay_doppler(obj: MatchedObjective, theta: float, phi: float,
                     refine: bool = True) -> tuple[float, float, dict]:
    """Grid ML for (l, k), then bounded off-grid refinement within one cell."""
    l0, k0, f0 = delay_doppler_grid_search(obj, theta, phi)
    trace = {"grid_l": l0, "grid_k": k0, "grid_objective": f0}
    if not refine:
        return float(l0), float(k0), trace
    x0 = np.array([theta, phi, l0, k0], float)
    lo = np.array([theta, phi, max(l0 - 1, 0.0), k0 - 1.0])
    hi = np.array([theta, phi, min(l0 + 1, obj.cfg.cp_length), k0 + 1.0])
    x, f, _ = _coordinate_search(obj, x0, lo, hi, active=(2, 3))
    trace.update(offgrid_l=float(x[2]), offgrid_k=float(x[3]), offgrid_objective=f)
    return float(x[2]), float(x[3]), trace


# -- stage 3 ----------------------------------------------------------------------------------


def joint_refine(obj: MatchedObjective, coarse: tuple, angle_cell: float = 1.0,
                 rel_tol: float = 1e-10, max_cycles: int = 100,
                 trust_center: tuple | None = None) -> EstimationResult:
    """Cyclic bounded search over (l, k, theta, phi) in a one-cell box around ``coarse``.

    ``coarse`` is (theta_deg, phi_deg, l, k). The box is centered on
    ``trust_center`` (default ``coarse``). If no coordinate improves the
    objective the coarse values are returned with ``refined=False``.
    """
    cfg = obj.cfg
    c = np.asarray(trust_center if trust_center is not None else coarse, float)
    x0 = np.asarray(coarse, float)
    cell = np.array([angle_cell, angle_cell, 1.0, 1.0])
    lo, hi = c - cell, c + cell
    lo[2], hi[2] = max(lo[2], 0.0), min(hi[2], cfg.cp_length)
    f0 = obj(*x0)
    x, f, cycles = _coordinate_search(obj, x0, lo, hi, active=(2, 3, 0, 1), rel_tol=rel_tol,
                                      max_cycles=max_cycles, xatol=1e-9)
    refined = f > f0
    if not refined:
        x, f = x0, f0
    return _result(obj, x, f, refined, {"joint_cycles": cycles, "coarse_objective": f0})


def _result(obj: MatchedObjective, x: np.ndarray, f: float, refined: bool, trace: dict) -> EstimationResult:
    cfg = obj.cfg
    theta, phi, l, k = (float(v) for v in x)
    tau = l * cfg.sample_period
    nu = k / (cfg.frame_length * cfg.sample_period)
    return EstimationResult(
        theta_deg=theta, phi_deg=phi, range_m=delay_to_range(tau),
        velocity_mps=doppler_to_velocity(nu, cfg), alpha_hat=obj.alpha(theta, phi, l, k),
        objective=float(f), tau_s=tau, doppler_hz=nu, l=l, k=k, refined=refined,
        stage_trace=dict(trace),
    )


def estimate(Y: np.ndarray, X_dd: np.ndarray, F: np.ndarray, W: np.ndarray, cfg: ScenarioConfig,
             scan_center: tuple[float, float] | None = None, half_width: float = 8.0,
             angle_step: float = 1.0, whiten: bool = True) -> EstimationResult:
    """Full pipeline: MUSIC, delay-Doppler ML, joint 4D refinement."""
    center = scan_center or (cfg.target_azimuth_deg, cfg.target_elevation_deg)
    obj = MatchedObjective(Y, X_dd, F, W, cfg, whiten=whiten)
    t0 = time.perf_counter()
    grid = angle_grid(*center, half_width, angle_step)
    theta1, phi1, _, confident = music_angles(Y, W, cfg, grid, whiten=whiten)
    t1 = time.perf_counter()
    l2, k2, dd_trace = ml_delay_doppler(obj, theta1, phi1)
    t2 = time.perf_counter()
    res = joint_refine(obj, (theta1, phi1, l2, k2), angle_cell=angle_step)
    t3 = time.perf_counter()
    res.low_confidence = not confident
    res.stage_trace.update(
        music_theta=theta1, music_phi=phi1, angle_grid_step=angle_step,
        angle_grid_half_width=half_width, **dd_trace,
        stage2_objective=obj(theta1, phi1, l2, k2),
        timings=(t1 - t0, t2 - t1, t3 - t2), evaluations=obj.evaluations,
    )
    return res


# -- SISO delay-Doppler estimation ----------------------------------------------------------


def _refine_2d(metric, x0: np.ndarray, lower: np.ndarray, upper: np.ndarray,
               rel_tol: float = 1e-10, max_cycles: int = 100) -> tuple[np.ndarray, float]:
    x = x0.astype(float).copy()
    fx = metric(*x)
    for _ in range(max_cycles):
        f_start = fx
        for i in (0, 1):
            def neg(t, i=i):
                z = x.copy()
                z[i] = t
                return -metric(*z)

            res = minimize_scalar(neg, bounds=(lower[i], upper[i]), method="bounded",
                                  options={"xatol": 1e-9})
            if -res.fun > fx:
                x[i], fx = res.x, -res.fun
        if abs(fx - f_start) <= rel_tol * max(abs(fx), 1e-300):
            break
    return x, fx


def siso_delay_doppler(y: np.ndarray, x: np.ndarray, cfg: ScenarioConfig) -> tuple[float, float]:
    """ML (l, k) for y = alpha Delta G x + noise: integer grid, then one-cell refinement."""
    MN, N = cfg.frame_length, cfg.num_doppler_bins
    ks = np.arange(-(N // 2), N - N // 2)
    best = (0, 0, -np.inf)
    for l in range(cfg.cp_length):
        s = DelayDopplerOperator.from_config(l, 0, cfg).apply_delay(x)
        vals = np.abs(np.fft.ifft(np.conj(y) * s)[ks % MN] * MN) ** 2 / np.vdot(s, s).real
        j = int(np.argmax(vals))
        if vals[j] > best[2]:
            best = (l, int(ks[j]), float(vals[j]))

    def metric(l, k):
        s = DelayDopplerOperator.from_config(l, k, cfg).apply(x)
        return abs(np.vdot(y, s)) ** 2 / np.vdot(s, s).real

    l0, k0, _ = best
    x_opt, _ = _refine_2d(metric, np.array([l0, k0], float),
                          np.array([max(l0 - 1, 0.0), k0 - 1.0]),
                          np.array([min(l0 + 1.0, cfg.cp_length), k0 + 1.0]))
    return float(x_opt[0]), float(x_opt[1])


def ofdm_symbol_period(cfg: ScenarioConfig) -> float:
    """OFDM symbol duration including its cyclic prefix."""
    return (cfg.num_delay_bins + cfg.cp_length) * cfg.sample_period


def ofdm_delay_doppler(Y: np.ndarray, X: np.ndarray, cfg: ScenarioConfig) -> tuple[float, float]:
    """ML (l, nu) under the per-symbol static OFDM model.

    Y and X are M x N subcarrier-by-symbol grids. The template is
    e^{j 2 pi nu n T_sym} H_l[m] X[m, n], where H_l is the exact subcarrier
    response of the fractionally delayed pulse. Returns (l, nu in Hz).
    """
    M, N = X.shape
    t_sym = ofdm_symbol_period(cfg)
    ks = np.arange(-(N // 2), N - N // 2)

    def response(l):
        return DelayDopplerOperator(l, 0.0, cfg.pulse_half_span, M, cfg.rolloff).delay_response()

    def per_symbol(l):
        H = response(l)[:, None] * X
        return np.sum(np.conj(Y) * H, axis=0), np.vdot(H, H).real

    best = (0, 0, -np.inf)
    for l in range(cfg.cp_length):
        c, nrm = per_symbol(l)
        vals = np.abs(np.fft.ifft(c)[ks % N] * N) ** 2 / nrm
        j = int(np.argmax(vals))
        if vals[j] > best[2]:
            best = (l, int(ks[j]), float(vals[j]))

    def metric(l, kk):
        c, nrm = per_symbol(l)
        phase = np.exp(2j * np.pi * kk * np.arange(N) / N)
        return abs(np.sum(c * phase)) ** 2 / nrm

    l0, k0, _ = best
    x_opt, _ = _refine_2d(metric, np.array([l0, k0], float),
                          np.array([max(l0 - 1, 0.0), k0 - 1.0]),
                          np.array([min(l0 + 1.0, cfg.cp_length), k0 + 1.0]))
    return float(x_opt[0]), float(x_opt[1] / (N * t_sym))
