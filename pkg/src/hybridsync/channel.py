"""Tapped delay line wireless channels with Doppler-shaped fading.

Profiles are synthesized as exponentially decaying taps on a uniform delay
grid, solved so the rms delay spread hits a target value.  Each tap fades as
a complex Gaussian process whose power spectrum follows a configurable
Doppler shape (Jakes by default, so the tap autocorrelation is
``J0(2 * pi * f_d * tau)``).  A preamble-style detector locks onto a single
replica, typically the instantaneous strongest tap, which is what injects
multipath error into receive timestamps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import erfinv

__all__ = [
    "CHANNEL_CATALOG",
    "ChannelRealization",
    "ChannelSpecError",
    "FadingConfig",
    "FadingProcess",
    "LinkGeometry",
    "PowerDelayProfile",
    "SPEED_OF_LIGHT_M_PER_NS",
    "build_pdp",
    "canonical_channel_name",
    "coherence_time_s",
    "detect_arrival",
    "detected_excess_series",
    "doppler_from_speed",
    "load_channel_dict",
    "propagation_delay_ns",
    "realize_channel",
    "rms_delay_spread",
    "tap_gain_series",
]

SPEED_OF_LIGHT_M_PER_NS = 0.2998
DEFAULT_CARRIER_HZ = 2.4e9
DEFAULT_TAP_SPACING_NS = 25.0
MAX_TAPS = 10


class ChannelSpecError(ValueError):
    """Raised for unknown channel names or infeasible profile targets."""


@dataclass(frozen=True)
class PowerDelayProfile:
    """Tap delays (ns) and mean tap powers (dB), first tap at delay 0."""

    taps: tuple[tuple[float, float], ...]
    rms_delay_spread_ns: float
    max_excess_delay_ns: float
    name: str = ""

    def __post_init__(self):
        delays = [d for d, _ in self.taps]
        if not delays or delays[0] != 0.0:
            raise ChannelSpecError("first tap must sit at delay 0")
        if any(b <= a for a, b in zip(delays, delays[1:])):
            raise ChannelSpecError("tap delays must be strictly increasing")
        if not math.isclose(self.max_excess_delay_ns, delays[-1] - delays[0]):
            raise ChannelSpecError("max_excess_delay_ns must equal the tap span")
        recomputed = _moment_rms(np.array(delays), self.linear_powers)
        tol = max(0.01 * self.rms_delay_spread_ns, 1e-9)
        if abs(recomputed - self.rms_delay_spread_ns) > tol:
            raise ChannelSpecError(
                f"declared rms delay spread {self.rms_delay_spread_ns:.3f} ns is "
                f"inconsistent with taps (recomputed {recomputed:.3f} ns)"
            )

    @classmethod
    def from_taps(cls, taps, name: str = "") -> "PowerDelayProfile":
        taps = tuple((float(d), float(p)) for d, p in taps)
        delays = np.array([d for d, _ in taps])
        powers = 10.0 ** (np.array([p for _, p in taps]) / 10.0)
        return cls(
            taps=taps,
            rms_delay_spread_ns=_moment_rms(delays, powers),
            max_excess_delay_ns=float(delays[-1] - delays[0]),
            name=name,
        )

    @cached_property
    def delays_ns(self) -> np.ndarray:
        return np.array([d for d, _ in self.taps])

    @cached_property
    def linear_powers(self) -> np.ndarray:
        return 10.0 ** (np.array([p for _, p in self.taps]) / 10.0)

    @property
    def n_taps(self) -> int:
        return len(self.taps)


@dataclass(frozen=True)
class FadingConfig:
    """Fading statistics of every tap.

    ``doppler_hz`` of zero freezes the channel: one draw per process, constant
    over time.  ``spectrum`` selects the Doppler power spectrum shape used to
    correlate successive realizations.
    """

    distribution: str = "rayleigh"
    spectrum: str = "jakes"
    doppler_hz: float = 0.0
    rice_k_db: float = 0.0

    def __post_init__(self):
        if self.distribution not in ("rayleigh", "rice"):
            raise ChannelSpecError(f"unknown fading distribution {self.distribution!r}")
        if self.spectrum not in ("jakes", "bell", "gaussian"):
            raise ChannelSpecError(f"unknown Doppler spectrum {self.spectrum!r}")
        if self.doppler_hz < 0:
            raise ChannelSpecError("doppler_hz must be >= 0")


@dataclass(frozen=True)
class ChannelRealization:
    """Instantaneous complex tap gains drawn at one emission instant."""

    tap_gains: np.ndarray
    realized_at_ns: float


@dataclass(frozen=True)
class LinkGeometry:
    """Line-of-sight distance plus any fixed processing/port delay."""

    distance_m: float = 0.0
    base_delay_ns: float = 0.0

    def __post_init__(self):
        if self.distance_m < 0 or self.base_delay_ns < 0:
            raise ChannelSpecError("distance and base delay must be >= 0")


def propagation_delay_ns(geometry: LinkGeometry) -> float:
    """One-way flight time plus the fixed base delay."""
    return geometry.distance_m / SPEED_OF_LIGHT_M_PER_NS + geometry.base_delay_ns


def doppler_from_speed(speed_kmh: float, carrier_hz: float = DEFAULT_CARRIER_HZ) -> float:
    """Maximum Doppler shift for a scatterer speed in km/h."""
    if speed_kmh < 0:
        raise ChannelSpecError("speed must be >= 0")
    c_m_per_s = SPEED_OF_LIGHT_M_PER_NS * 1e9
    return speed_kmh / 3.6 * carrier_hz / c_m_per_s


def coherence_time_s(fading: FadingConfig) -> float:
    """Approximate channel coherence time ``0.423 / f_d``; inf when static."""
    if fading.doppler_hz == 0:
        return math.inf
    return 0.423 / fading.doppler_hz


def _moment_rms(delays: np.ndarray, powers: np.ndarray) -> float:
    total = powers.sum()
    mean = float((powers * delays).sum() / total)
    second = float((powers * delays**2).sum() / total)
    return math.sqrt(max(second - mean * mean, 0.0))


def rms_delay_spread(pdp: PowerDelayProfile) -> float:
    """Power-weighted rms spread of the tap delays, in linear power."""
    return _moment_rms(pdp.delays_ns, pdp.linear_powers)


# Catalog of named scenarios: (scenario label, rms delay spread ns, max excess ns).
CHANNEL_CATALOG = {
    "AWGN": ("Ideal", 0.0, 0.0),
    "WLAN_A": ("Small Office", 50.0, 390.0),
    "WLAN_C": ("Large Office", 150.0, 1050.0),
    "IWLAN_A": ("Industrial", 29.0, 140.0),
    "IWLAN_B": ("Industrial", 89.0, 600.0),
}

_NAME_LOOKUP = {k.replace("_", ""). upper(): k for k in CHANNEL_CATALOG}


def canonical_channel_name(name: str) -> str:
    key = "".join(ch for ch in name if ch.isalnum()).upper()
    try:
        return _NAME_LOOKUP[key]
    except KeyError:
        raise ChannelSpecError(f"unknown channel {name!r}") from None


def _synthesize_pdp(
    rms_target_ns: float,
    max_excess_ns: float,
    tap_spacing_ns: float | None = None,
    name: str = "",
) -> PowerDelayProfile:
    if max_excess_ns == 0.0:
        if rms_target_ns != 0.0:
            raise ChannelSpecError("single-tap profile cannot have nonzero delay spread")
        return PowerDelayProfile(taps=((0.0, 0.0),), rms_delay_spread_ns=0.0,
                                 max_excess_delay_ns=0.0, name=name)
    if rms_target_ns <= 0.0:
        raise ChannelSpecError("multi-tap profile needs a positive rms delay spread")
    if tap_spacing_ns is None:
        n_taps = min(MAX_TAPS, round(max_excess_ns / DEFAULT_TAP_SPACING_NS) + 1)
    else:
        n_taps = round(max_excess_ns / tap_spacing_ns) + 1
        if n_taps > MAX_TAPS:
            raise ChannelSpecError(f"tap spacing implies more than {MAX_TAPS} taps")
    n_taps = max(n_taps, 2)
    delays = np.linspace(0.0, max_excess_ns, n_taps)
    uniform_limit = _moment_rms(delays, np.ones(n_taps))
    if rms_target_ns >= uniform_limit:
        raise ChannelSpecError(
            f"rms delay spread {rms_target_ns} ns unreachable on a "
            f"{n_taps}-tap grid spanning {max_excess_ns} ns "
            f"(uniform-power limit {uniform_limit:.1f} ns)"
        )

    def spread_error(log_alpha: float) -> float:
        powers = np.exp(-delays / math.exp(log_alpha))
        return _moment_rms(delays, powers) - rms_target_ns

    log_alpha = brentq(spread_error, math.log(1e-3), math.log(1e9), xtol=1e-12)
    powers_db = -delays / math.exp(log_alpha) * (10.0 / math.log(10.0))
    return PowerDelayProfile.from_taps(zip(delays, powers_db), name=name)


@lru_cache(maxsize=None)
def _catalog_pdp(name: str) -> PowerDelayProfile:
    _, rms, excess = CHANNEL_CATALOG[name]
    return _synthesize_pdp(rms, excess, name=name)


def build_pdp(spec) -> PowerDelayProfile:
    """Build a profile from a catalog name or an ``(rms, max_excess[, spacing])`` tuple."""
    if isinstance(spec, PowerDelayProfile):
        return spec
    if isinstance(spec, str):
        return _catalog_pdp(canonical_channel_name(spec))
    return _synthesize_pdp(*spec)


# --- Doppler spectrum shapes -------------------------------------------------
#
# All shapes are normalized to the band [-f_d, +f_d] and expressed through
# their CDF on x = f / f_d, which gives exact band-limited bin masses and
# inverse-CDF frequency sampling without special handling of the band-edge
# singularity of the Jakes shape.

_BELL_SLOPE = 3.0  # classic bell shape 1 / (1 + 9 (f/f_d)^2)
_GAUSS_SIGMA = 1.0 / math.sqrt(2.0)


def _spectrum_cdf(spectrum: str, x: np.ndarray) -> np.ndarray:
    x = np.clip(x, -1.0, 1.0)
    if spectrum == "jakes":
        return 0.5 + np.arcsin(x) / math.pi
    if spectrum == "bell":
        norm = 2.0 * math.atan(_BELL_SLOPE)
        return 0.5 + np.arctan(_BELL_SLOPE * x) / norm
    norm = math.erf(1.0 / (_GAUSS_SIGMA * math.sqrt(2.0)))
    return 0.5 + 0.5 * np.vectorize(math.erf)(x / (_GAUSS_SIGMA * math.sqrt(2.0))) / norm


def _spectrum_inverse_cdf(spectrum: str, q: np.ndarray) -> np.ndarray:
    if spectrum == "jakes":
        return np.sin(math.pi * (q - 0.5))
    if spectrum == "bell":
        norm = 2.0 * math.atan(_BELL_SLOPE)
        return np.tan((q - 0.5) * norm) / _BELL_SLOPE
    norm = math.erf(1.0 / (_GAUSS_SIGMA * math.sqrt(2.0)))
    return _GAUSS_SIGMA * math.sqrt(2.0) * erfinv((2.0 * q - 1.0) * norm)


def _rice_split(pdp: PowerDelayProfile, fading: FadingConfig):
    """Split tap powers into diffuse power and a static first-tap LOS term."""
    diffuse = pdp.linear_powers.copy()
    los = np.zeros(pdp.n_taps, dtype=complex)
    if fading.distribution == "rice":
        k_lin = 10.0 ** (fading.rice_k_db / 10.0)
        los[0] = math.sqrt(diffuse[0] * k_lin / (k_lin + 1.0))
        diffuse[0] = diffuse[0] / (k_lin + 1.0)
    return diffuse, los


class FadingProcess:
    """Stationary tap-gain process evaluable at arbitrary instants.

    Each tap is a sum of ``components`` complex exponentials whose
    frequencies are drawn by stratified inverse-CDF sampling of the Doppler
    spectrum and whose amplitudes are independent complex Gaussians.  The
    ensemble autocorrelation therefore matches the configured spectrum
    exactly, and a zero Doppler collapses to one frozen draw per process.
    """

    def __init__(
        self,
        pdp: PowerDelayProfile,
        fading: FadingConfig,
        rng: np.random.Generator,
        components: int = 128,
    ):
        self.pdp = pdp
        self.fading = fading
        diffuse, self._los = _rice_split(pdp, fading)
        n = pdp.n_taps
        if fading.doppler_hz == 0.0:
            self._freqs = np.zeros((n, 1))
            scale = np.sqrt(diffuse / 2.0)[:, None]
            self._coeffs = scale * (
                rng.standard_normal((n, 1)) + 1j * rng.standard_normal((n, 1))
            )
            return
        strata = (np.arange(components) + rng.random((n, components))) / components
        self._freqs = fading.doppler_hz * _spectrum_inverse_cdf(fading.spectrum, strata)
        scale = np.sqrt(diffuse / (2.0 * components))[:, None]
        self._coeffs = scale * (
            rng.standard_normal((n, components)) + 1j * rng.standard_normal((n, components))
        )

    def gains_at(self, true_time_ns: float) -> np.ndarray:
        phases = np.exp(2j * math.pi * self._freqs * (true_time_ns * 1e-9))
        return (self._coeffs * phases).sum(axis=1) + self._los

    def realize(self, true_time_ns: float) -> ChannelRealization:
        return ChannelRealization(self.gains_at(true_time_ns), float(true_time_ns))


def realize_channel(pdp, fading, true_time_ns, rng_stream) -> ChannelRealization:
    """Draw instantaneous tap gains at one instant.

    ``rng_stream`` may be a ``FadingProcess`` (successive calls are then
    time-correlated per the Doppler spectrum) or a ``numpy`` generator, in
    which case a fresh process is drawn and sampled once.
    """
    if isinstance(rng_stream, FadingProcess):
        return rng_stream.realize(true_time_ns)
    return FadingProcess(pdp, fading, rng_stream).realize(true_time_ns)


def detect_arrival(
    realization: ChannelRealization,
    pdp: PowerDelayProfile,
    policy: str = "strongest_tap",
    threshold_db: float = 6.0,
) -> float:
    """Excess delay (ns) of the replica a preamble detector locks onto.

    ``strongest_tap`` picks the instantaneous power maximum;
    ``first_above_threshold`` picks the earliest tap within ``threshold_db``
    of that maximum.
    """
    powers = np.abs(realization.tap_gains) ** 2
    if policy == "strongest_tap":
        idx = int(np.argmax(powers))
    elif policy == "first_above_threshold":
        floor = powers.max() * 10.0 ** (-threshold_db / 10.0)
        idx = int(np.argmax(powers >= floor))
    else:
        raise ChannelSpecError(f"unknown detector policy {policy!r}")
    delays = pdp.delays_ns
    return float(delays[idx] - delays[0])


# --- Series synthesis for periodic sampling ----------------------------------

_DIRECT_COUNT_LIMIT = 65536


def _tap_series(power, fading, period_s, count, offset_s, rng) -> np.ndarray:
    """One tap's complex gains at instants ``offset_s + n * period_s``."""
    f_d = fading.doppler_hz
    if f_d == 0.0:
        gain = math.sqrt(power / 2.0) * complex(rng.standard_normal(), rng.standard_normal())
        return np.full(count, gain, dtype=complex)
    if count <= _DIRECT_COUNT_LIMIT:
        k = 128
        strata = (np.arange(k) + rng.random(k)) / k
        freqs = f_d * _spectrum_inverse_cdf(fading.spectrum, strata)
        coeffs = math.sqrt(power / (2.0 * k)) * (
            rng.standard_normal(k) + 1j * rng.standard_normal(k)
        )
        times = offset_s + np.arange(count) * period_s
        return np.exp(2j * math.pi * times[:, None] * freqs[None, :]) @ coeffs
    if f_d * period_s >= 0.5:
        # Sampling far coarser than the coherence time: draws are independent.
        return math.sqrt(power / 2.0) * (
            rng.standard_normal(count) + 1j * rng.standard_normal(count)
        )
    # Long regular combs: exact band-limited spectral synthesis via one IFFT.
    n_fft = 1 << max(4, (count - 1).bit_length())
    df = 1.0 / (n_fft * period_s)
    kmax = int(math.floor(f_d / df)) + 1
    k = np.arange(-kmax, kmax + 1)
    upper = np.clip((k + 0.5) * df, -f_d, f_d)
    lower = np.clip((k - 0.5) * df, -f_d, f_d)
    masses = power * (_spectrum_cdf(fading.spectrum, upper / f_d)
                      - _spectrum_cdf(fading.spectrum, lower / f_d))
    coeffs = np.sqrt(masses / 2.0) * (
        rng.standard_normal(len(k)) + 1j * rng.standard_normal(len(k))
    )
    coeffs = coeffs * np.exp(2j * math.pi * k * df * offset_s)
    spectrum = np.zeros(n_fft, dtype=complex)
    spectrum[k % n_fft] = coeffs
    return (np.fft.ifft(spectrum) * n_fft)[:count]


def tap_gain_series(
    pdp: PowerDelayProfile,
    fading: FadingConfig,
    period_s: float,
    count: int,
    offset_s: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Complex gains of every tap on a regular comb, shape ``(n_taps, count)``."""
    diffuse, los = _rice_split(pdp, fading)
    out = np.empty((pdp.n_taps, count), dtype=complex)
    for i in range(pdp.n_taps):
        out[i] = _tap_series(diffuse[i], fading, period_s, count, offset_s, rng) + los[i]
    return out


def detected_excess_series(
    pdp: PowerDelayProfile,
    fading: FadingConfig,
    period_s: float,
    count: int,
    offset_s: float,
    rng: np.random.Generator,
    policy: str = "strongest_tap",
    threshold_db: float = 6.0,
) -> np.ndarray:
    """Detector excess delay (ns) at each comb instant.

    Synthesizes taps one at a time so long runs stay within memory.
    """
    if pdp.n_taps == 1:
        return np.zeros(count)
    diffuse, los = _rice_split(pdp, fading)
    delays = pdp.delays_ns
    if policy == "strongest_tap":
        best_power = np.full(count, -1.0)
        best_tap = np.zeros(count, dtype=np.int64)
        for i in range(pdp.n_taps):
            series = _tap_series(diffuse[i], fading, period_s, count, offset_s, rng) + los[i]
            power = np.abs(series) ** 2
            better = power > best_power
            best_power[better] = power[better]
            best_tap[better] = i
        return delays[best_tap] - delays[0]
    if policy == "first_above_threshold":
        powers = np.empty((pdp.n_taps, count), dtype=np.float32)
        for i in range(pdp.n_taps):
            series = _tap_series(diffuse[i], fading, period_s, count, offset_s, rng) + los[i]
            powers[i] = np.abs(series) ** 2
        floor = powers.max(axis=0) * np.float32(10.0 ** (-threshold_db / 10.0))
        idx = np.argmax(powers >= floor[None, :], axis=0)
        return delays[idx] - delays[0]
    raise ChannelSpecError(f"unknown detector policy {policy!r}")


# --- JSON channel descriptions ------------------------------------------------

_CHANNEL_KEYS = {"name", "taps", "fading"}
_TAP_KEYS = {"delay_ns", "power_db"}
_FADING_KEYS = {"distribution", "spectrum", "doppler_hz", "rice_k_db"}


def load_channel_dict(doc: dict) -> tuple[PowerDelayProfile, FadingConfig]:
    """Parse a channel description dict, rejecting unknown keys."""
    unknown = set(doc) - _CHANNEL_KEYS
    if unknown:
        raise ChannelSpecError(f"unknown channel keys: {sorted(unknown)}")
    try:
        taps = doc["taps"]
        fading_doc = doc["fading"]
    except KeyError as exc:
        raise ChannelSpecError(f"missing channel key: {exc}") from None
    parsed = []
    for tap in taps:
        unknown = set(tap) - _TAP_KEYS
        if unknown:
            raise ChannelSpecError(f"unknown tap keys: {sorted(unknown)}")
        parsed.append((tap["delay_ns"], tap["power_db"]))
    unknown = set(fading_doc) - _FADING_KEYS
    if unknown:
        raise ChannelSpecError(f"unknown fading keys: {sorted(unknown)}")
    pdp = PowerDelayProfile.from_taps(parsed, name=doc.get("name", ""))
    fading = FadingConfig(**fading_doc)
    return pdp, fading


def channel_to_dict(pdp: PowerDelayProfile, fading: FadingConfig) -> dict:
    return {
        "name": pdp.name,
        "taps": [{"delay_ns": d, "power_db": p} for d, p in pdp.taps],
        "fading": {
            "distribution": fading.distribution,
            "spectrum": fading.spectrum,
            "doppler_hz": fading.doppler_hz,
            "rice_k_db": fading.rice_k_db,
        },
    }
