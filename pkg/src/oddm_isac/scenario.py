"""Scenario configuration, physical conversions and seeded random streams.

Everything that a simulation run depends on lives in :class:`ScenarioConfig`,
so a config file plus a seed reproduces a run exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s

# relative slack on closed interval bounds so exact boundary values survive rounding
_BOUND_RTOL = 1e-12


@dataclass(frozen=True)
class ScenarioConfig:
    """System, geometry and noise parameters for one simulation scenario.

    Defaults are the desk-scale profile (M=32, N=8, 8x8 UPA on both sides).
    Use :func:`profile` to obtain the full-scale parameter set.
    """

    carrier_frequency_hz: float = 0.3e12
    subcarrier_spacing_hz: float = 480e3
    num_delay_bins: int = 32
    num_doppler_bins: int = 8
    rolloff: float = 0.1
    pulse_half_span: int = 4
    cp_length: int = 16
    num_tx_antennas: int = 64
    num_rx_antennas: int = 64
    upa_y: int = 8
    upa_z: int = 8
    element_spacing_wavelengths: float = 0.5
    num_rf_chains_tx: int = 4
    num_rf_chains_rx: int = 4
    num_streams: int = 4
    transmit_power_dbm: float = 20.0
    noise_variance: float = 1e-3
    rng_seed: int = 0
    constellation: str = "QPSK"
    # single sensing target
    target_azimuth_deg: float = 15.0
    target_elevation_deg: float = 90.0
    target_range_m: float = 50.0
    target_velocity_mps: float = 300.0 / 3.6
    path_coeff: complex = 1e-2 + 0j
    alpha_mode: str = "direct"  # "direct" or "radar"
    rcs_m2: float = 1.0
    # communication link (user equipment side)
    comm_upa_y: int = 4
    comm_upa_z: int = 4
    comm_num_paths: int = 5
    comm_los_dominance_db: float = 10.0

    def __post_init__(self) -> None:
        M, N = self.num_delay_bins, self.num_doppler_bins
        if M < 1 or N < 1:
            raise ValueError("num_delay_bins and num_doppler_bins must be positive")
        if not 0.0 <= self.rolloff <= 1.0:
            raise ValueError(f"rolloff must lie in [0, 1], got {self.rolloff}")
        if not 0 < self.pulse_half_span < M / 2:
            raise ValueError(
                f"pulse_half_span must satisfy 0 < Q < M/2 = {M / 2}, got {self.pulse_half_span}"
            )
        # the circulant delay operator needs the pulse support inside the CP window
        if not self.pulse_half_span < self.cp_length < M * N - self.pulse_half_span - 1:
            raise ValueError(
                f"cp_length must satisfy Q < M_cp < MN - Q - 1, got M_cp={self.cp_length}"
            )
        if self.upa_y * self.upa_z != self.num_tx_antennas:
            raise ValueError("num_tx_antennas must equal upa_y * upa_z")
        if self.upa_y * self.upa_z != self.num_rx_antennas:
            raise ValueError("num_rx_antennas must equal upa_y * upa_z")
        for n_rf, n_ant in (
            (self.num_rf_chains_tx, self.num_tx_antennas),
            (self.num_rf_chains_rx, self.num_rx_antennas),
        ):
            if not self.num_streams <= n_rf <= n_ant:
                raise ValueError("need num_streams <= num_rf_chains <= num_antennas")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be non-negative")
        if self.constellation not in ("QPSK", "16QAM"):
            raise ValueError(f"unknown constellation {self.constellation!r}")
        if self.alpha_mode not in ("direct", "radar"):
            raise ValueError(f"unknown alpha_mode {self.alpha_mode!r}")

    # -- derived quantities -------------------------------------------------

    @property
    def symbol_period(self) -> float:
        """T = 1 / subcarrier spacing."""
        return 1.0 / self.subcarrier_spacing_hz

    @property
    def sample_period(self) -> float:
        """T_s = T / M, also the delay resolution."""
        return self.symbol_period / self.num_delay_bins

    @property
    def delay_resolution(self) -> float:
        return self.symbol_period / self.num_delay_bins

    @property
    def doppler_resolution(self) -> float:
        return 1.0 / (self.num_doppler_bins * self.symbol_period)

    @property
    def frame_length(self) -> int:
        return self.num_delay_bins * self.num_doppler_bins

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency_hz

    @property
    def transmit_power_w(self) -> float:
        return 10.0 ** ((self.transmit_power_dbm - 30.0) / 10.0)

    def target(self) -> "TargetParams":
        return TargetParams(
            azimuth_deg=self.target_azimuth_deg,
            elevation_deg=self.target_elevation_deg,
            range_m=self.target_range_m,
            velocity_mps=self.target_velocity_mps,
            path_coeff=self.path_coeff,
        )

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class TargetParams:
    """Point target: angles in degrees, range in m, radial velocity in m/s."""

    azimuth_deg: float
    elevation_deg: float
    range_m: float
    velocity_mps: float
    path_coeff: complex = 1.0 + 0j


class DelayDoppler(NamedTuple):
    delay_s: float
    doppler_hz: float
    l: float  # normalized delay, tau / T_s
    k: float  # normalized Doppler, nu * M * N * T_s


PAPER_PROFILE = dict(
    num_delay_bins=64,
    num_doppler_bins=16,
    pulse_half_span=8,
    cp_length=24,
    num_tx_antennas=1024,
    num_rx_antennas=1024,
    upa_y=32,
    upa_z=32,
    comm_upa_y=8,
    comm_upa_z=8,
)


def profile(name: str = "desk", **overrides) -> ScenarioConfig:
    """Return the ``"desk"`` or ``"paper"`` (full-scale) parameter set."""
    if name == "desk":
        base: dict = {}
    elif name == "paper":
        base = dict(PAPER_PROFILE)
    else:
        raise ValueError(f"unknown profile {name!r}; expected 'desk' or 'paper'")
    base.update(overrides)
    return ScenarioConfig(**base)


def derive_delay_doppler(target: TargetParams, cfg: ScenarioConfig) -> DelayDoppler:
    """Round-trip delay and Doppler of the echo plus their grid-normalized forms.

    Raises ValueError when the delay leaves (0, M_cp T/M] or the Doppler
    leaves (-1/(2T), 1/(2T)].
    """
    tau = 2.0 * target.range_m / SPEED_OF_LIGHT
    nu = 2.0 * cfg.carrier_frequency_hz * target.velocity_mps / SPEED_OF_LIGHT
    tau_max = cfg.cp_length * cfg.sample_period
    nu_max = 1.0 / (2.0 * cfg.symbol_period)
    if not 0.0 < tau <= tau_max * (1 + _BOUND_RTOL):
        raise ValueError(
            f"delay {tau:.6g} s outside (0, M_cp*T/M = {tau_max:.6g} s] (cyclic prefix bound)"
        )
    if not -nu_max < nu <= nu_max * (1 + _BOUND_RTOL):
        raise ValueError(
            f"Doppler {nu:.6g} Hz outside (-1/(2T), 1/(2T)] = (-{nu_max:.6g}, {nu_max:.6g}] Hz"
        )
    l = tau / cfg.sample_period
    k = nu * cfg.frame_length * cfg.sample_period
    return DelayDoppler(tau, nu, l, k)


def delay_to_range(tau: float) -> float:
    return SPEED_OF_LIGHT * tau / 2.0


def doppler_to_velocity(nu: float, cfg: ScenarioConfig) -> float:
    return SPEED_OF_LIGHT * nu / (2.0 * cfg.carrier_frequency_hz)


def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Independent, reproducible generator for the pair ``(seed, label)``.

    The label is hashed into the seed sequence spawn key, so streams with
    different labels never share state and are stable across platforms.
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    key = tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def radar_path_coefficient(cfg: ScenarioConfig, range_m: float, rng: np.random.Generator) -> complex:
    """Free-space monostatic radar amplitude with a uniform random phase."""
    lam = cfg.wavelength
    amp = math.sqrt(lam**2 * cfg.rcs_m2 / ((4 * math.pi) ** 3 * range_m**4))
    return complex(amp * np.exp(1j * rng.uniform(0.0, 2 * math.pi)))


def path_coefficient(cfg: ScenarioConfig) -> complex:
    if cfg.alpha_mode == "direct":
        return complex(cfg.path_coeff)
    return radar_path_coefficient(cfg, cfg.target_range_m, rng_stream(cfg.rng_seed, "alpha-phase"))


def noise_variance_for_snr(snr_db: float, alpha: complex, cfg: ScenarioConfig) -> float:
    """sigma^2 such that |alpha|^2 N_t N_r E|x|^2 / sigma^2 equals the SNR (unit-energy symbols)."""
    gain = abs(alpha) ** 2 * cfg.num_tx_antennas * cfg.num_rx_antennas
    return gain / 10.0 ** (snr_db / 10.0)


# -- flat key = value config files --------------------------------------------


def _format_value(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, (int, float, complex)):
        return repr(value)
    return str(value)


def to_text(cfg: ScenarioConfig) -> str:
    lines = ["# scenario configuration: one `key = value` per line, '#' starts a comment"]
    for f in dataclasses.fields(cfg):
        lines.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def parse_text(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Parse the flat config format; keys not present keep the values of ``base``."""
    base = base or ScenarioConfig()
    types = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}
    changes = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        changes[key] = _parse_value(types[key], value)
    return dataclasses.replace(base, **changes)


def _parse_value(type_name: str, value: str):
    if type_name == "int":
        return int(value)
    if type_name == "float":
        return float(value)
    if type_name == "complex":
        return complex(value.replace(" ", ""))
    return value


def load_config(path: str | Path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    return parse_text(Path(path).read_text(), base)


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(to_text(cfg))


def scenario_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(to_text(cfg).encode("utf-8")).hexdigest()
