"""Fisher information and Cramer-Rao bounds for the beamformed echo model.

The mean of the combined echo is Y = g alpha S F^T A^T W^*, with g = sqrt(N_t N_r),
S = Delta G X the delay-Doppler shifted frame and A = a a^T. Rows of the noise
N W^* have covariance sigma^2 W^H W, so every Fisher entry has the form
(2/sigma^2) Re tr(dY_i^H dY_j K^T) with K = (W^H W)^-1.

Angles are in radians inside the FIM; reported CRLBs are in deg^2 for angles,
s^2 / Hz^2 for delay / Doppler and m^2 / (m/s)^2 after the chain rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .channel import (ArrayGeometry, DelayDopplerOperator, dd_to_time, steering_derivatives,
                      steering_vector)
from .scenario import SPEED_OF_LIGHT, ScenarioConfig

RAD2_TO_DEG2 = (180.0 / np.pi) ** 2
ANGLE_PARAMS = ("theta", "phi", "re_alpha", "im_alpha")
FULL_PARAMS = ("theta", "phi", "tau", "nu", "re_alpha", "im_alpha")


@dataclass(frozen=True)
class FimReport:
    """Real FIM over ``params`` plus the derived variance bounds."""

    params: tuple
    fim: np.ndarray
    crlb: dict = field(default_factory=dict)
    scale_factor: float = float("nan")

    def index(self, name: str) -> int:
        return self.params.index(name)


def _combiner_inverse_gram(W: np.ndarray) -> np.ndarray:
    gram = W.conj().T @ W
    # columns of W must be linearly independent for the noise covariance to be invertible
    if np.linalg.cond(gram) > 1e12:
        raise np.linalg.LinAlgError("W^H W is singular; the combiner must have full column rank")
    return np.linalg.inv(gram)


def operator_energy(op: DelayDopplerOperator) -> float:
    """||Delta G_l||_F^2, exact for the circulant G (MN times the squared tap norm)."""
    _, h = op.taps()
    return float(op.size * np.sum(h**2))


def frame_gram(X_dd: np.ndarray, op: DelayDopplerOperator, cfg: ScenarioConfig) -> np.ndarray:
    """Gamma = S^H S with S = Delta G X for the transmitted frame."""
    S = op.apply(dd_to_time(X_dd, cfg))
    return S.conj().T @ S


def _to_crlb(var_rad2: dict, cfg: ScenarioConfig) -> dict:
    out = {}
    for name, v in var_rad2.items():
        if name in ("theta", "phi"):
            out[name] = v * RAD2_TO_DEG2
        else:
            out[name] = v
    if "tau" in var_rad2:
        out["range"] = (SPEED_OF_LIGHT / 2) ** 2 * var_rad2["tau"]
    if "nu" in var_rad2:
        out["velocity"] = (SPEED_OF_LIGHT / (2 * cfg.carrier_frequency_hz)) ** 2 * var_rad2["nu"]
    return out


def _diag_inverse(J: np.ndarray, names: tuple) -> dict:
    """Diagonal of J^-1, inverted after unit-diagonal scaling (entries span many decades)."""
    dj = np.diag(J)
    if np.any(dj <= 0):
        return {n: float("inf") for n in names}
    r = 1.0 / np.sqrt(dj)
    try:
        inv = np.linalg.inv(J * np.outer(r, r))
    except np.linalg.LinAlgError:
        return {n: float("inf") for n in names}
    d = np.diag(inv) * r**2
    return {n: (float(v) if v > 0 else float("inf")) for n, v in zip(names, d)}


# -- analytic (theta, phi, alpha) block ----------------------------------------------------


def angle_fim_terms(theta_deg: float, phi_deg: float, F: np.ndarray, W: np.ndarray,
                    cfg: ScenarioConfig, gram: np.ndarray | float) -> dict:
    """Trace terms c_ij = tr(N_i^H Gamma N_j K^T), i, j in {theta, phi, A}.

    N_D = F^T D W^* for D in {dA/dtheta, dA/dphi, A}, and each D is a sum of
    rank-one terms b1 b2^T. For N = p q^T with p = F^T b1 and q = W^H b2,
    tr(N_1^H Gamma N_2 K^T) = (p_1^H Gamma p_2)(b2_1^H P b2_2), where
    P = W K W^H is the projection onto the column space of W. Forming P from
    a QR factorization keeps W -> W R invariance at rounding level.
    """
    geom = ArrayGeometry.from_config(cfg)
    a = steering_vector(theta_deg, phi_deg, geom)
    da_t, da_p = steering_derivatives(theta_deg, phi_deg, geom)
    _combiner_inverse_gram(W)  # raises unless W has full column rank
    Qh = np.linalg.qr(W)[0].conj().T
    Ft = F.T
    # dA = da a^T + a da^T, A = a a^T
    N = {
        "A": [(Ft @ a, Qh @ a)],
        "theta": [(Ft @ da_t, Qh @ a), (Ft @ a, Qh @ da_t)],
        "phi": [(Ft @ da_p, Qh @ a), (Ft @ a, Qh @ da_p)],
    }
    G = gram * np.eye(F.shape[1]) if np.isscalar(gram) else np.asarray(gram)
    return {(i, j): sum(np.vdot(p1, G @ p2) * np.vdot(q1, q2) for p1, q1 in N[i] for p2, q2 in N[j])
            for i in N for j in N}


def analytic_angle_fim(theta_deg: float, phi_deg: float, alpha: complex, F: np.ndarray,
                       W: np.ndarray, cfg: ScenarioConfig, noise_variance: float | None = None,
                       gram: np.ndarray | None = None, l: float | None = None,
                       k: float = 0.0) -> FimReport:
    """Closed-form 4x4 FIM over (theta, phi, Re alpha, Im alpha).

    With ``gram=None`` the frame Gram matrix S^H S is replaced by
    ||Delta G_l||_F^2 I, its expectation over unit-energy i.i.d. symbols
    (``l`` defaults to the configured target delay). Passing the exact Gram
    matrix of a known frame makes this agree with :func:`numerical_fim_4d`.
    """
    sigma2 = cfg.noise_variance if noise_variance is None else noise_variance
    if gram is None:
        if l is None:
            from .scenario import derive_delay_doppler
            dd = derive_delay_doppler(cfg.target(), cfg)
            l, k = dd.l, dd.k
        scale = operator_energy(DelayDopplerOperator.from_config(l, k, cfg))
        terms = angle_fim_terms(theta_deg, phi_deg, F, W, cfg, scale)
    else:
        scale = float(np.real(np.trace(gram))) / gram.shape[0]
        terms = angle_fim_terms(theta_deg, phi_deg, F, W, cfg, gram)
    g2 = cfg.num_tx_antennas * cfg.num_rx_antennas
    c = {key: g2 * v for key, v in terms.items()}
    al = complex(alpha)
    # derivative prefactors: alpha for angles, 1 and j for Re/Im alpha
    pref = {"theta": ("theta", al), "phi": ("phi", al), "re_alpha": ("A", 1.0), "im_alpha": ("A", 1j)}
    J = np.empty((4, 4))
    for r, pi in enumerate(ANGLE_PARAMS):
        for s, pj in enumerate(ANGLE_PARAMS):
            (ti, wi), (tj, wj) = pref[pi], pref[pj]
            J[r, s] = 2.0 / sigma2 * np.real(np.conj(wi) * wj * c[(ti, tj)])
    J = 0.5 * (J + J.T)
    report = FimReport(ANGLE_PARAMS, J, {}, scale)
    th, ph = crlb_angles(report)
    return FimReport(ANGLE_PARAMS, J, {"theta": th, "phi": ph}, scale)


def crlb_angles(report: FimReport) -> tuple[float, float]:
    """CRLB(theta), CRLB(phi) in deg^2 by successive Schur complements.

    The alpha nuisance block is eliminated first, then the other angle.
    Returns inf when a Schur complement is not positive.
    """
    J = report.fim
    it, ip = report.index("theta"), report.index("phi")
    ia = [report.index("re_alpha"), report.index("im_alpha")]
    Jaa = J[np.ix_(ia, ia)]
    try:
        Jaa_inv = np.linalg.inv(Jaa)
    except np.linalg.LinAlgError:
        return float("inf"), float("inf")

    def j(p, q):
        return J[p, q] - J[p, ia] @ Jaa_inv @ J[ia, q]

    jt, jp, jtp = j(it, it), j(ip, ip), j(it, ip)
    out = []
    for own, other in ((jt, jp), (jp, jt)):
        schur = own - jtp**2 / other if other > 0 else -1.0
        out.append(RAD2_TO_DEG2 / schur if schur > 0 else float("inf"))
    return out[0], out[1]


def fitness(report: FimReport) -> float:
    """CRLB(theta) + CRLB(phi) in deg^2."""
    return report.crlb["theta"] + report.crlb["phi"]


# -- numerical 4D FIM -----------------------------------------------------------------------


def _richardson(f: Callable[[float], np.ndarray], x0: float, h: float, rtol: float = 1e-2,
                max_halvings: int = 8) -> np.ndarray:
    """Central difference with one Richardson step; h is halved while the estimates drift."""

    def central(step):
        return (f(x0 + step) - f(x0 - step)) / (2 * step)

    d1 = central(h)
    for _ in range(max_halvings):
        d2 = central(h / 2)
        drift = np.linalg.norm(d2 - d1) / max(np.linalg.norm(d2), 1e-300)
        if drift < rtol:
            return (4 * d2 - d1) / 3
        h, d1 = h / 2, d2
    raise FloatingPointError("finite-difference derivative did not stabilize")


def numerical_fim_4d(xi: tuple, alpha: complex, X_dd: np.ndarray, F: np.ndarray, W: np.ndarray,
                     cfg: ScenarioConfig, noise_variance: float | None = None,
                     steps: dict | None = None) -> FimReport:
    """6x6 FIM over (theta, phi, tau, nu, Re alpha, Im alpha) by finite differences.

    ``xi`` is (theta_deg, phi_deg, tau_s, nu_hz). Steps default to 1e-5 rad for
    angles, 1e-4 T_s for delay and 1e-4/(NT) for Doppler. The echo is
    g s a^T W^* with s = Delta G X F^T a, so only the steering vector and the
    operator applied to a fixed frame are differenced. W enters through the
    projection onto its column space, which makes W -> W R invariance hold at
    rounding level instead of at the conditioning of W^H W.
    """
    sigma2 = cfg.noise_variance if noise_variance is None else noise_variance
    theta, phi, tau, nu = (float(v) for v in xi)
    X = dd_to_time(X_dd, cfg)
    _combiner_inverse_gram(W)  # raises unless W has full column rank
    h = {"theta": 1e-5, "phi": 1e-5, "tau": 1e-4 * cfg.sample_period,
         "nu": 1e-4 * cfg.doppler_resolution}
    h.update(steps or {})
    if not (tau - h["tau"] > 0 and tau + h["tau"] <= cfg.cp_length * cfg.sample_period):
        raise ValueError("delay too close to the admissible range for the finite-difference step")
    geom = ArrayGeometry.from_config(cfg)
    rad = np.rad2deg(1.0)
    T, MN = cfg.sample_period, cfg.frame_length

    def op(ta, n):
        return DelayDopplerOperator.from_config(ta / T, n * MN * T, cfg)

    a = steering_vector(theta, phi, geom)
    da = [_richardson(lambda x: steering_vector(theta + rad * x, phi, geom), 0.0, h["theta"]),
          _richardson(lambda x: steering_vector(theta, phi + rad * x, geom), 0.0, h["phi"])]
    u = X @ (F.T @ a)
    G0 = op(tau, nu)
    s = G0.apply(u)
    g = np.sqrt(cfg.num_tx_antennas * cfg.num_rx_antennas)
    ga, gs = g * complex(alpha), g * s
    # each derivative of the combined echo is a sum of terms x b^T W^*
    derivs = [
        [(ga * G0.apply(X @ (F.T @ da[0])), a), (ga * s, da[0])],
        [(ga * G0.apply(X @ (F.T @ da[1])), a), (ga * s, da[1])],
        [(ga * _richardson(lambda x: op(x, nu).apply(u), tau, h["tau"]), a)],
        [(ga * _richardson(lambda x: op(tau, x).apply(u), nu, h["nu"]), a)],
        [(gs, a)],
        [(1j * gs, a)],
    ]
    # <x1 b1^T W^*, x2 b2^T W^*>_K = (x1^H x2)(b1^H P b2) with P = Q Q^H the projection onto span(W)
    Q = np.linalg.qr(W)[0]
    J = np.empty((6, 6))
    for r in range(6):
        for c in range(r, 6):
            val = sum(np.vdot(x1, x2) * np.vdot(Q.conj().T @ b1, Q.conj().T @ b2)
                      for x1, b1 in derivs[r] for x2, b2 in derivs[c])
            J[r, c] = J[c, r] = 2.0 / sigma2 * val.real
    var = _diag_inverse(J, FULL_PARAMS)
    scale = float(np.real(np.trace(X.conj().T @ X))) / X.shape[1]
    return FimReport(FULL_PARAMS, J, _to_crlb(var, cfg), scale)


def restrict(report: FimReport, names: tuple = ANGLE_PARAMS) -> np.ndarray:
    idx = [report.index(n) for n in names]
    return report.fim[np.ix_(idx, idx)]
