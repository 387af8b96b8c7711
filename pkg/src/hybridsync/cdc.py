"""Clock domain crossing (CDC) between two digital clock domains.

A counter kept in a source domain with period ``T_src`` is sampled by a
destination domain with period ``T_dst``.  The destination can only latch the
most recent completed source tick, which makes the raw reading late by up to
one source period.  Adding half a source period recentres the error so the
translated reading deviates from the instantaneous counter by at most
``T_src / 2`` in either direction.  A synchronizer ratio of at least four
destination ticks per source tick keeps the latch metastability-safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CdcConfig",
    "CdcFeasibilityError",
    "CdcStage",
    "phc_translation_bounds",
    "translate_time",
]

MIN_PERIOD_RATIO = 4.0


class CdcFeasibilityError(ValueError):
    """Raised when the source/destination period ratio is too small."""


@dataclass(frozen=True)
class CdcConfig:
    """Static parameters of one domain crossing.

    ``rho_dst_ppm`` is the fractional frequency error of the destination
    domain relative to the source domain; ``dst_phase`` places the
    destination sampling grid within one destination period.
    """

    t_src_ns: float = 32.0
    t_dst_ns: float = 6.25
    rho_dst_ppm: float = 0.0
    dst_phase: float = 0.0

    def __post_init__(self):
        if self.t_src_ns <= 0 or self.t_dst_ns <= 0:
            raise ValueError("periods must be positive")
        if not 0.0 <= self.dst_phase < 1.0:
            raise ValueError("dst_phase must lie in [0, 1)")
        if self.t_src_ns < MIN_PERIOD_RATIO * self.t_dst_ns:
            raise CdcFeasibilityError(
                f"t_src_ns must be at least {MIN_PERIOD_RATIO:g} x t_dst_ns "
                f"(got {self.t_src_ns} vs {self.t_dst_ns})"
            )


def translate_time(cdc: CdcConfig, src_time_ns, dst_sample_index):
    """Translate the source counter into the destination domain.

    ``dst_sample_index`` selects the destination sampling instant; the
    corresponding instant on the source timeline is
    ``src_time_ns + (n + dst_phase) * t_dst * (1 + rho_dst * 1e-6)``.
    Returns ``(dst_read_ns, delta_phc_ns)`` where ``delta_phc_ns`` is the
    translation error, bounded by ``t_src_ns / 2`` in magnitude.  Accepts a
    scalar or numpy array sample index.
    """
    n = np.asarray(dst_sample_index, dtype=float)
    instant = src_time_ns + (n + cdc.dst_phase) * cdc.t_dst_ns * (1.0 + cdc.rho_dst_ppm * 1e-6)
    latched = np.floor(instant / cdc.t_src_ns) * cdc.t_src_ns
    read = latched + 0.5 * cdc.t_src_ns
    delta = read - instant
    if np.isscalar(dst_sample_index):
        return float(read), float(delta)
    return read, delta


def phc_translation_bounds(t_src_ns: float) -> tuple[float, float]:
    """Minimum and maximum of ``|delta_phc|`` over all phase alignments."""
    if t_src_ns <= 0:
        raise ValueError("t_src_ns must be positive")
    return 0.0, t_src_ns / 2.0


@dataclass
class CdcStage:
    """Continuous-time view of a domain crossing used by the simulator.

    The error seen by a reading at true time ``t`` depends only on where the
    destination's sampling train sits within the source period:
    ``t_src/2 - (u mod t_src)`` with ``u`` the reading instant mapped through
    the relative drift and initial phase.  ``rel_drift_ppm`` lets the phase
    relation slide slowly, as it does between asynchronous oscillators.
    """

    t_src_ns: float = 32.0
    rel_drift_ppm: float = 0.0
    phase0: float = 0.0

    def read_error_ns(self, true_time_ns: float) -> float:
        u = true_time_ns * (1.0 + self.rel_drift_ppm * 1e-6) + self.phase0 * self.t_src_ns
        return 0.5 * self.t_src_ns - (u % self.t_src_ns)
