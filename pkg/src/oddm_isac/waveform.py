"""Delay-Doppler and multicarrier modulation, pulse shapes and PAPR.

Signals are plain complex numpy arrays. A time-domain frame of ``M*N``
samples is stored in column-major (``order="F"``) order, i.e. sample
``q = m + M*n`` belongs to delay tap ``m`` of time slot ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SCHEMES = ("ODDM", "OTFS", "OFDM", "DFTS_ODDM", "DFTS_OTFS", "DFTS_OFDM")
_DD_SCHEMES = ("ODDM", "OTFS", "DFTS_ODDM", "DFTS_OTFS")

_QPSK = np.array([1 + 1j, -1 + 1j, -1 - 1j, 1 - 1j]) / np.sqrt(2)
_QAM16_LEVELS = np.array([-3, -1, 1, 3])
_QAM16 = (_QAM16_LEVELS[:, None] + 1j * _QAM16_LEVELS[None, :]).ravel() / np.sqrt(10)


@dataclass(frozen=True)
class DDFrame:
    """M x N grid of delay-Doppler symbols (rows: delay bins, columns: Doppler bins)."""

    symbols: np.ndarray
    constellation: str = "QPSK"
    scheme: str = "ODDM"

    def __post_init__(self):
        if self.symbols.ndim != 2:
            raise ValueError("symbols must be an M x N matrix")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.symbols.shape

    def with_scheme(self, scheme: str) -> "DDFrame":
        return DDFrame(self.symbols, self.constellation, scheme)


def constellation_points(name: str) -> np.ndarray:
    """Unit average energy alphabet."""
    if name == "QPSK":
        return _QPSK
    if name == "16QAM":
        return _QAM16
    raise ValueError(f"unknown constellation {name!r}")


def random_symbols(shape, rng: np.random.Generator, constellation: str = "QPSK") -> np.ndarray:
    points = constellation_points(constellation)
    return points[rng.integers(0, len(points), size=shape)]


def random_frame(M: int, N: int, rng: np.random.Generator, constellation: str = "QPSK",
                 scheme: str = "ODDM") -> DDFrame:
    return DDFrame(random_symbols((M, N), rng, constellation), constellation, scheme)


def random_streams(M: int, N: int, num_streams: int, rng: np.random.Generator,
                   constellation: str = "QPSK") -> np.ndarray:
    """MN x N_s matrix whose columns are vectorized random delay-Doppler grids."""
    return random_symbols((M * N, num_streams), rng, constellation)


def vec(X: np.ndarray) -> np.ndarray:
    return np.asarray(X).reshape(-1, order="F")


def unvec(x: np.ndarray, M: int, N: int) -> np.ndarray:
    return np.asarray(x).reshape((M, N), order="F")


# -- ODDM / OTFS core transform --------------------------------------------------


def oddm_modulate(frame: DDFrame | np.ndarray) -> np.ndarray:
    """x = (F_N^H kron I_M) vec(X): unitary N-point IDFT along the Doppler axis."""
    X = frame.symbols if isinstance(frame, DDFrame) else np.asarray(frame)
    return vec(np.fft.ifft(X, axis=1, norm="ortho"))


def oddm_demodulate(samples: np.ndarray, M: int, N: int) -> np.ndarray:
    """Exact inverse of :func:`oddm_modulate`; returns the M x N delay-Doppler grid."""
    samples = np.asarray(samples)
    if samples.shape != (M * N,):
        raise ValueError(f"expected {M * N} samples, got shape {samples.shape}")
    return np.fft.fft(unvec(samples, M, N), axis=1, norm="ortho")


def modulate(frame: DDFrame) -> np.ndarray:
    """Sample-rate time signal of any supported scheme (length M*N, no CP).

    OFDM treats the grid as M subcarriers by N symbols and applies an M-point
    IDFT per symbol. OTFS with rectangular pulses shares the ODDM sample
    values. DFT-spread variants precode with a unitary DFT along the axis
    the modulator inverse-transforms, which turns the samples back into
    constellation points (single-carrier-like envelope).
    """
    X = frame.symbols
    scheme = frame.scheme
    if scheme.startswith("DFTS_"):
        X = dft_spread(X, scheme)
        scheme = scheme[len("DFTS_"):]
    if scheme in ("ODDM", "OTFS"):
        return oddm_modulate(X)
    if scheme == "OFDM":
        return vec(np.fft.ifft(X, axis=0, norm="ortho"))
    raise ValueError(f"unknown scheme {frame.scheme!r}")


baseline_modulate = modulate


def demodulate(samples: np.ndarray, scheme: str, M: int, N: int) -> np.ndarray:
    """Inverse of :func:`modulate`, including de-spreading."""
    samples = np.asarray(samples)
    if samples.shape != (M * N,):
        raise ValueError(f"expected {M * N} samples, got shape {samples.shape}")
    base = scheme[len("DFTS_"):] if scheme.startswith("DFTS_") else scheme
    if base in ("ODDM", "OTFS"):
        X = oddm_demodulate(samples, M, N)
    elif base == "OFDM":
        X = np.fft.fft(unvec(samples, M, N), axis=0, norm="ortho")
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme.startswith("DFTS_"):
        X = dft_despread(X, scheme)
    return X


def dft_spread(X: np.ndarray, scheme: str) -> np.ndarray:
    if scheme == "DFTS_OFDM":
        return np.fft.fft(X, axis=0, norm="ortho")
    if scheme in ("DFTS_ODDM", "DFTS_OTFS"):
        return np.fft.fft(X, axis=1, norm="ortho")
    raise ValueError(f"{scheme!r} is not a DFT-spread scheme")


def dft_despread(X: np.ndarray, scheme: str) -> np.ndarray:
    if scheme == "DFTS_OFDM":
        return np.fft.ifft(X, axis=0, norm="ortho")
    if scheme in ("DFTS_ODDM", "DFTS_OTFS"):
        return np.fft.ifft(X, axis=1, norm="ortho")
    raise ValueError(f"{scheme!r} is not a DFT-spread scheme")


# -- cyclic prefix -----------------------------------------------------------------


def add_cp(samples: np.ndarray, cp_length: int) -> np.ndarray:
    samples = np.asarray(samples)
    if not 0 <= cp_length < len(samples):
        raise ValueError(f"cp_length must lie in [0, {len(samples)}), got {cp_length}")
    if cp_length == 0:
        return samples.copy()
    return np.concatenate([samples[-cp_length:], samples])


def remove_cp(samples: np.ndarray, cp_length: int) -> np.ndarray:
    samples = np.asarray(samples)
    if not 0 <= cp_length < len(samples):
        raise ValueError(f"cp_length must lie in [0, {len(samples)}), got {cp_length}")
    return samples[cp_length:].copy()


# -- pulses ------------------------------------------------------------------------


def pulse_g(t_over_Ts, rolloff: float):
    """Raised-cosine pulse g = a * a^*(-t) evaluated at t / T_s.

    The removable singularities at |t| = T_s / (2 beta) use the analytic
    limit (pi/4) sinc(1/(2 beta)); nonzero integer instants return exact zeros.
    """
    t = np.asarray(t_over_Ts, dtype=float)
    beta = float(rolloff)
    out = np.sinc(t)
    if beta > 0:
        denom = 1.0 - (2.0 * beta * t) ** 2
        singular = np.isclose(denom, 0.0, atol=1e-12)
        safe = np.where(singular, 1.0, denom)
        out = np.where(singular, np.pi / 4 * np.sinc(1.0 / (2 * beta)),
                       out * np.cos(np.pi * beta * t) / safe)
    nyquist_zero = (t == np.round(t)) & (t != 0)
    out = np.where(nyquist_zero, 0.0, out)
    return out if out.ndim else float(out)


def pulse_g_truncated(t_over_Ts, rolloff: float, half_span: int):
    """Raised cosine restricted to |t| <= Q T_s (the 2Q+1 tap support)."""
    t = np.asarray(t_over_Ts, dtype=float)
    out = np.where(np.abs(t) <= half_span + 1e-12, pulse_g(t, rolloff), 0.0)
    return out if out.ndim else float(out)


def srrc_pulse(t_over_Ts, rolloff: float):
    """Square-root raised cosine a(t), normalized so a * a^*(-t) has peak 1 at t=0."""
    t = np.asarray(t_over_Ts, dtype=float)
    beta = float(rolloff)
    if beta == 0:
        out = np.sinc(t)
        return out if out.ndim else float(out)
    at_zero = np.isclose(t, 0.0, atol=1e-12)
    at_sing = np.isclose(np.abs(t), 1.0 / (4 * beta), atol=1e-12)
    num = np.sin(np.pi * t * (1 - beta)) + 4 * beta * t * np.cos(np.pi * t * (1 + beta))
    den = np.pi * t * (1 - (4 * beta * t) ** 2)
    # singular points are overwritten below
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    out = np.where(at_zero, 1 - beta + 4 * beta / np.pi, out)
    sing_val = beta / np.sqrt(2) * (
        (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta)) + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
    )
    out = np.where(at_sing, sing_val, out)
    return out if out.ndim else float(out)


def pulse_g_numeric(t_over_Ts, rolloff: float, oversample: int = 64, span: int = 64):
    """g(t) = a(t) * a^*(-t) by direct numerical convolution of sampled SRRC pulses.

    Only used to cross-check :func:`pulse_g`; accuracy is limited by the
    truncation ``span`` (in T_s) and the quadrature step ``1/oversample``.
    """
    step = 1.0 / oversample
    grid = np.arange(-span * oversample, span * oversample + 1) * step
    a = srrc_pulse(grid, rolloff)
    t = np.atleast_1d(np.asarray(t_over_Ts, dtype=float))
    # a is real and even: g(t) = integral a(s) a(s - t) ds
    vals = np.array([np.sum(a * srrc_pulse(grid - ti, rolloff)) * step for ti in t])
    return vals if np.ndim(t_over_Ts) else float(vals[0])


# -- waveform on a fine grid and PAPR -------------------------------------------------


def pulse_shaped_waveform(samples: np.ndarray, oversample: int, rolloff: float,
                          half_span: int) -> np.ndarray:
    """Periodic superposition sum_q x[q] a(t - q T_s) on a grid of T_s / oversample.

    The SRRC pulse is truncated to |t| <= half_span * T_s. The frame is treated
    cyclically, which is what the receiver sees after CP removal.
    """
    samples = np.asarray(samples, dtype=complex)
    L = len(samples) * oversample
    up = np.zeros(L, dtype=complex)
    up[::oversample] = samples
    offsets = np.arange(-half_span * oversample, half_span * oversample + 1)
    kernel = np.zeros(L)
    kernel[offsets % L] += srrc_pulse(offsets / oversample, rolloff)
    return np.fft.ifft(np.fft.fft(up) * np.fft.fft(kernel))


def trig_interpolate(block: np.ndarray, oversample: int) -> np.ndarray:
    """Band-limited (multicarrier) interpolation of each column of ``block``."""
    M = block.shape[0]
    spec = np.fft.fft(block, axis=0)
    padded = np.zeros((M * oversample,) + block.shape[1:], dtype=complex)
    half = M // 2
    if M % 2:
        padded[: half + 1] = spec[: half + 1]
        padded[-half:] = spec[half + 1:]
    else:
        padded[:half] = spec[:half]
        if half > 1:
            padded[-(half - 1):] = spec[half + 1:]
        # split the Nyquist bin so real-valued inputs stay real
        padded[half] = spec[half] / 2
        padded[-half] += spec[half] / 2
    return np.fft.ifft(padded, axis=0) * oversample


def oversampled_waveform(frame: DDFrame, oversample: int = 4, rolloff: float = 0.1,
                         half_span: int = 4) -> np.ndarray:
    """Continuous-time approximation of the transmitted frame.

    ODDM variants are shaped with the SRRC pulse; OTFS and OFDM variants use
    rectangular slots of M band-limited subcarrier samples.
    """
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    x = modulate(frame)
    M, N = frame.shape
    base = frame.scheme.replace("DFTS_", "")
    if base == "ODDM":
        return pulse_shaped_waveform(x, oversample, rolloff, half_span)
    if oversample == 1:
        return x
    return vec(trig_interpolate(unvec(x, M, N), oversample))


def papr_db(samples: np.ndarray) -> float:
    p = np.abs(np.asarray(samples)) ** 2
    mean = p.mean()
    if mean <= 0:
        raise ValueError("PAPR undefined for a zero-energy signal")
    return float(10 * np.log10(p.max() / mean))


def ccdf(values: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Fraction of ``values`` strictly above each threshold."""
    v = np.sort(np.asarray(values))
    return 1.0 - np.searchsorted(v, thresholds, side="right") / len(v)


def ccdf_level(values: np.ndarray, prob: float) -> float:
    """Threshold exceeded with probability ``prob`` (empirical 1 - prob quantile)."""
    return float(np.quantile(np.asarray(values), 1.0 - prob))
