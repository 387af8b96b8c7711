"""Deterministic discrete-event simulation of synchronization chains.

True time is carried as integer picoseconds so periodic schedules never
accumulate rounding drift.  Every node owns a PHC modeled affinely between
servo events (displayed = offset + rate * true_time); exchanges, servo
updates and PPS-edge measurements are merged chronologically, with ties
broken by stream declaration order.  Each replica draws its randomness from
an independently spawned seed stream, so results do not depend on how
replicas are distributed over workers.

The per-sample synchronization error follows PPS semantics: it is the
difference of the true times at which the reference and the measured node's
counters cross the next whole pulse boundary, positive when the measured
clock runs ahead.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .budget import (
    HOP_CDC,
    HOP_ETHERNET,
    HOP_WIRELESS_ONE_WAY,
    HOP_WIRELESS_TWO_WAY,
    HopBudget,
    chain_max_error,
)
from .channel import (
    FadingConfig,
    LinkGeometry,
    build_pdp,
    detected_excess_series,
    doppler_from_speed,
    propagation_delay_ns,
)
from .clocks import PhcState
from .protocol import (
    PROTOCOL_PRESETS,
    SCHEME_FTM_BURST,
    SCHEME_ONE_WAY,
    SCHEME_TWO_WAY,
    ProtocolConfig,
)

__all__ = [
    "ExperimentConfig",
    "HopSpec",
    "NodeSpec",
    "PortSpec",
    "RunStats",
    "SIM_PRESETS",
    "Topology",
    "TopologyError",
    "build_topology",
    "compute_stats",
    "pps_error",
    "run_experiment",
    "topology_budget",
]

ETHERNET_TS_NS = 8.0
WIRELESS_TS_NS = 50.0
CDC_T_SRC_NS = 32.0
CDC_T_DST_NS = 6.25
EMULATOR_BASE_DELAY_NS = 1135.0
PS_PER_NS = 1000
HIST_BINS = 64
DIVERGENCE_FACTOR = 10.0

SIM_PRESETS = (
    "calnex",
    "calnex-eth3",
    "emulator-80211",
    "emulator-wsharp",
    "ota-80211",
    "ota-wsharp",
)


class TopologyError(ValueError):
    """Raised for malformed node/hop graphs."""


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    role: str = "boundary"  # gmc | boundary | translator | sta | reference


@dataclass(frozen=True)
class PortSpec:
    """Timestamping interface of one hop endpoint."""

    medium: str = "ethernet"
    sample_period_ns: float = ETHERNET_TS_NS
    cdc_t_src_ns: float = 0.0  # 0 means the port reads its PHC natively


@dataclass(frozen=True)
class HopSpec:
    """One synchronization hop: master disciplines slave over a medium."""

    master: str
    slave: str
    medium: str
    protocol: ProtocolConfig
    master_port: PortSpec
    slave_port: PortSpec
    geometry: LinkGeometry = field(default_factory=LinkGeometry)
    channel: str | None = None
    doppler_hz: float = 0.0
    spectrum: str = "jakes"
    detector_policy: str = "strongest_tap"
    detector_threshold_db: float = 6.0
    reply_delay_s: float = 1e-3
    intra_burst_spacing_s: float = 1e-3
    stagger_s: float = 0.0


@dataclass(frozen=True)
class Topology:
    name: str
    nodes: tuple[NodeSpec, ...]
    hops: tuple[HopSpec, ...]
    measured_node: str
    reference_node: str

    def validate(self) -> None:
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise TopologyError("duplicate node ids")
        roles = [n.role for n in self.nodes if n.role == "gmc"]
        if len(roles) != 1:
            raise TopologyError("topology needs exactly one gmc node")
        known = set(ids)
        upstream: dict[str, int] = {}
        for i, hop in enumerate(self.hops):
            if hop.master not in known or hop.slave not in known:
                raise TopologyError(f"hop {i} references unknown nodes")
            if hop.slave in upstream:
                raise TopologyError(f"node {hop.slave} has two upstream hops")
            upstream[hop.slave] = i
        for probe in (self.measured_node, self.reference_node):
            if probe not in known:
                raise TopologyError(f"unknown probe node {probe!r}")
        gmc = next(n.node_id for n in self.nodes if n.role == "gmc")
        if gmc in upstream:
            raise TopologyError("gmc cannot be a slave")
        for node in known - {gmc}:
            seen, cur = set(), node
            while cur != gmc:
                if cur in seen or cur not in upstream:
                    raise TopologyError(f"node {node} is not chained to the gmc")
                seen.add(cur)
                cur = self.hops[upstream[cur]].master

    def upstream_path(self, node_id: str) -> list[int]:
        """Hop indices from the node up to the gmc."""
        upstream = {h.slave: i for i, h in enumerate(self.hops)}
        path, cur = [], node_id
        while cur in upstream:
            path.append(upstream[cur])
            cur = self.hops[upstream[cur]].master
        return path


@dataclass(frozen=True)
class RunStats:
    """Summary statistics of the PPS error samples of one experiment."""

    mu_ns: float
    sigma_ns: float
    mu_plus_3sigma_ns: float
    min_ns: float
    max_ns: float
    n_samples: int
    hist_edges: tuple[float, ...]
    hist_counts: tuple[int, ...]
    per_replica: tuple["RunStats", ...] = ()
    converged: bool = True


def compute_stats(samples) -> RunStats:
    """Mean, sample standard deviation and extrema of an error series."""
    samples = np.asarray(samples, dtype=float)
    if samples.size < 2:
        raise ValueError("need at least two samples")
    mu = float(samples.mean())
    sigma = float(samples.std(ddof=1))
    counts, edges = np.histogram(samples, bins=HIST_BINS)
    return RunStats(
        mu_ns=mu,
        sigma_ns=sigma,
        mu_plus_3sigma_ns=abs(mu) + 3.0 * sigma,
        min_ns=float(samples.min()),
        max_ns=float(samples.max()),
        n_samples=int(samples.size),
        hist_edges=tuple(float(e) for e in edges),
        hist_counts=tuple(int(c) for c in counts),
    )


def pps_error(
    slave_phc: PhcState,
    reference_phc: PhcState,
    true_time_ns: float,
    edge_interval_ns: float = 1e9,
) -> float:
    """Error at the next pulse edge, positive when the slave runs ahead.

    Both counters are extrapolated to their next crossing of the same whole
    pulse boundary; the result is the true-time lead of the slave's edge.
    """
    k = math.floor(reference_phc.time_at(true_time_ns) / edge_interval_ns) + 1
    target = k * edge_interval_ns
    t_ref = reference_phc.crossing_true_time(target, true_time_ns)
    t_slave = slave_phc.crossing_true_time(target, true_time_ns)
    return t_ref - t_slave


# --- Experiment configuration -------------------------------------------------


@dataclass
class ExperimentConfig:
    """Knobs of one Monte Carlo experiment.

    ``cdc_stages`` counts PHC translation stages on the wireless path: 1
    places a crossing only in the translator, 2 adds the station's own
    crossing.  ``extra_distance_m`` lengthens the wireless link without
    recalibrating one-way receivers, which injects an uncompensated
    propagation delay.  ``drift_free`` zeroes every oscillator frequency
    error, the regime the analytic budgets are stated for.
    """

    preset: str = "emulator-80211"
    channel: str = "AWGN"
    speed_kmh: float = 0.0
    duration_s: float = 1000.0
    pps_interval_s: float = 1.0
    replicas: int = 1
    seed: int = 1
    warmup_s: float = 100.0
    drift_free: bool = False
    cdc_stages: int = 2
    extra_distance_m: float = 0.0
    scheme: str | None = None
    burst_length: int = 1
    kp: float | None = None
    ki: float | None = None
    sync_period_s: float | None = None
    detector_policy: str = "strongest_tap"
    detector_threshold_db: float = 6.0
    drift_walk_sigma_ppm_per_s: float = 0.0
    topology: Topology | None = None

    def __post_init__(self):
        if self.duration_s <= self.warmup_s:
            raise ValueError("duration_s must exceed warmup_s")
        if self.pps_interval_s <= 0:
            raise ValueError("pps_interval_s must be positive")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.cdc_stages not in (1, 2):
            raise ValueError("cdc_stages must be 1 or 2")
        if self.topology is None and self.preset not in SIM_PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}")

    def as_dict(self) -> dict:
        doc = {}
        for f in fields(self):
            if f.name == "topology":
                continue
            doc[f.name] = getattr(self, f.name)
        doc["inline_topology"] = self.topology.name if self.topology else None
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)} - {"topology"}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)


def _eth_port() -> PortSpec:
    return PortSpec("ethernet", ETHERNET_TS_NS)


def _wireless_port(with_cdc: bool) -> PortSpec:
    return PortSpec("wireless", WIRELESS_TS_NS, CDC_T_SRC_NS if with_cdc else 0.0)


def _eth_hop(master: str, slave: str, stagger_s: float) -> HopSpec:
    return HopSpec(
        master=master, slave=slave, medium="ethernet",
        protocol=PROTOCOL_PRESETS["wired-ptp"],
        master_port=_eth_port(), slave_port=_eth_port(),
        stagger_s=stagger_s,
    )


def _stagger(i: int) -> float:
    return 0.0003 + 0.0017 * i


def build_topology(config: ExperimentConfig) -> Topology:
    """Materialize one of the named test setups."""
    if config.topology is not None:
        return config.topology
    wireless_scheme = {
        "calnex": SCHEME_TWO_WAY,
        "emulator-80211": SCHEME_TWO_WAY,
        "ota-80211": SCHEME_TWO_WAY,
        "emulator-wsharp": SCHEME_ONE_WAY,
        "ota-wsharp": SCHEME_ONE_WAY,
    }
    preset = config.preset
    doppler = doppler_from_speed(config.speed_kmh)

    def wireless_hop(master: str, slave: str, stagger_s: float,
                     geometry: LinkGeometry, calibrated_delay_ns: float) -> HopSpec:
        scheme = config.scheme or wireless_scheme[preset]
        base = PROTOCOL_PRESETS["wsharp-beacon" if scheme == SCHEME_ONE_WAY else "80211-ptp"]
        proto = ProtocolConfig(
            scheme=scheme,
            sync_period_s=config.sync_period_s or base.sync_period_s,
            burst_length=config.burst_length,
            calibrated_delay_ns=calibrated_delay_ns if scheme == SCHEME_ONE_WAY else 0.0,
            kp=config.kp if config.kp is not None else base.kp,
            ki=config.ki if config.ki is not None else base.ki,
        )
        return HopSpec(
            master=master, slave=slave, medium="wireless", protocol=proto,
            master_port=_wireless_port(True),
            slave_port=_wireless_port(config.cdc_stages == 2),
            geometry=geometry, channel=config.channel, doppler_hz=doppler,
            detector_policy=config.detector_policy,
            detector_threshold_db=config.detector_threshold_db,
            stagger_s=stagger_s,
        )

    if preset == "calnex-eth3":
        nodes = (NodeSpec("gmc", "gmc"), NodeSpec("tr1", "translator"),
                 NodeSpec("tr2", "translator"), NodeSpec("analyzer", "reference"))
        hops = (_eth_hop("gmc", "tr1", _stagger(0)),
                _eth_hop("tr1", "tr2", _stagger(1)),
                _eth_hop("tr2", "analyzer", _stagger(2)))
        return Topology("calnex-eth3", nodes, hops, "analyzer", "gmc")
    if preset == "calnex":
        nodes = (NodeSpec("gmc", "gmc"), NodeSpec("tr1", "translator"),
                 NodeSpec("tr2", "translator"), NodeSpec("analyzer", "reference"))
        geom = LinkGeometry(distance_m=config.extra_distance_m, base_delay_ns=0.0)
        hops = (_eth_hop("gmc", "tr1", _stagger(0)),
                wireless_hop("tr1", "tr2", _stagger(1), geom, 0.0),
                _eth_hop("tr2", "analyzer", _stagger(2)))
        return Topology("calnex", nodes, hops, "analyzer", "gmc")
    if preset in ("emulator-80211", "emulator-wsharp"):
        nodes = (NodeSpec("gmc", "gmc"), NodeSpec("switch", "boundary"),
                 NodeSpec("translator", "translator"), NodeSpec("sta", "sta"))
        geom = LinkGeometry(distance_m=config.extra_distance_m,
                            base_delay_ns=EMULATOR_BASE_DELAY_NS)
        hops = (_eth_hop("gmc", "switch", _stagger(0)),
                _eth_hop("switch", "translator", _stagger(1)),
                wireless_hop("translator", "sta", _stagger(2), geom,
                             EMULATOR_BASE_DELAY_NS))
        return Topology(preset, nodes, hops, "sta", "gmc")
    if preset in ("ota-80211", "ota-wsharp"):
        nodes = (NodeSpec("gmc", "gmc"), NodeSpec("switch", "boundary"),
                 NodeSpec("translator", "translator"), NodeSpec("sta", "sta"),
                 NodeSpec("probe", "reference"))
        distance = config.extra_distance_m if config.extra_distance_m else 10.0
        geom = LinkGeometry(distance_m=distance, base_delay_ns=0.0)
        calibrated = propagation_delay_ns(geom)
        hops = (_eth_hop("gmc", "switch", _stagger(0)),
                _eth_hop("switch", "translator", _stagger(1)),
                _eth_hop("switch", "probe", _stagger(2)),
                wireless_hop("translator", "sta", _stagger(3), geom, calibrated))
        return Topology(preset, nodes, hops, "sta", "probe")
    raise ValueError(f"unknown preset {preset!r}")


def topology_budget(topo: Topology) -> list[HopBudget]:
    """Analytic budget entries for the measured/reference clock pair.

    Hops shared by both probes' upstream paths carry common-mode error and
    cancel; every remaining hop contributes its own worst case, with CDC
    stages listed separately per translating port.
    """
    measured = set(topo.upstream_path(topo.measured_node))
    reference = set(topo.upstream_path(topo.reference_node))
    entries: list[HopBudget] = []
    for i in sorted(measured.symmetric_difference(reference)):
        hop = topo.hops[i]
        if hop.medium == "ethernet":
            entries.append(HopBudget(HOP_ETHERNET, ts_ns=hop.master_port.sample_period_ns,
                                     label=f"{hop.master}->{hop.slave}"))
            continue
        for port in (hop.master_port, hop.slave_port):
            if port.cdc_t_src_ns:
                entries.append(HopBudget(HOP_CDC, t_src_ns=port.cdc_t_src_ns, label="cdc"))
        excess = build_pdp(hop.channel).max_excess_delay_ns if hop.channel else 0.0
        if hop.protocol.scheme == SCHEME_ONE_WAY:
            residual = abs(propagation_delay_ns(hop.geometry)
                           - hop.protocol.calibrated_delay_ns)
            entries.append(HopBudget(HOP_WIRELESS_ONE_WAY, ts_ns=WIRELESS_TS_NS,
                                     max_excess_ns=excess, t_ms_ns=residual,
                                     label=f"{hop.master}->{hop.slave}"))
        else:
            entries.append(HopBudget(HOP_WIRELESS_TWO_WAY, ts_ns=WIRELESS_TS_NS,
                                     max_excess_ns=excess,
                                     label=f"{hop.master}->{hop.slave}"))
    return entries


# --- Replica execution ---------------------------------------------------------


class _HopRuntime:
    """Mutable per-replica state of one hop, laid out for the hot loop."""

    __slots__ = (
        "mi", "si", "scheme", "egress_quant", "period_ps", "next_ps", "n",
        "kp", "ki", "k3", "integ", "locked", "windup",
        "ts_m", "ph_m", "ts_s", "ph_s",
        "cdc_m_T", "cdc_m_rate", "cdc_m_phase", "cdc_s_T", "cdc_s_rate", "cdc_s_phase",
        "prop_ns", "reply_ns", "calib_ns", "dmf", "dmr", "burst", "spacing_ns",
    )


def _draw_cdc(init_rng: np.random.Generator, t_src: float, drift_free: bool):
    phase = init_rng.uniform(0.0, 1.0)
    magnitude = init_rng.uniform(1.0, 5.0)
    sign = 1.0 if init_rng.random() < 0.5 else -1.0
    rel = 0.0 if drift_free else sign * magnitude
    return t_src, 1.0 + rel * 1e-6, phase * t_src


def _prepare_hop(hop: HopSpec, node_index: dict, config: ExperimentConfig,
                 init_rng, fading_seeds, duration_ps: int) -> _HopRuntime:
    h = _HopRuntime()
    h.mi = node_index[hop.master]
    h.si = node_index[hop.slave]
    h.scheme = hop.protocol.scheme
    h.egress_quant = hop.medium == "ethernet"
    period_ps = round(hop.protocol.sync_period_s * 1e12)
    h.period_ps = period_ps
    h.next_ps = round(hop.stagger_s * 1e12)
    h.n = 0
    h.kp = hop.protocol.kp
    h.ki = hop.protocol.ki
    h.k3 = 1000.0 * hop.protocol.sync_period_s
    h.integ = 0.0
    h.locked = False
    h.windup = 100.0
    h.ts_m = hop.master_port.sample_period_ns
    h.ph_m = init_rng.uniform(0.0, 1.0)
    h.ts_s = hop.slave_port.sample_period_ns
    h.ph_s = init_rng.uniform(0.0, 1.0)
    h.cdc_m_T, h.cdc_m_rate, h.cdc_m_phase = 0.0, 1.0, 0.0
    h.cdc_s_T, h.cdc_s_rate, h.cdc_s_phase = 0.0, 1.0, 0.0
    if hop.master_port.cdc_t_src_ns:
        h.cdc_m_T, h.cdc_m_rate, h.cdc_m_phase = _draw_cdc(
            init_rng, hop.master_port.cdc_t_src_ns, config.drift_free)
    if hop.slave_port.cdc_t_src_ns:
        h.cdc_s_T, h.cdc_s_rate, h.cdc_s_phase = _draw_cdc(
            init_rng, hop.slave_port.cdc_t_src_ns, config.drift_free)
    h.prop_ns = propagation_delay_ns(hop.geometry)
    h.reply_ns = hop.reply_delay_s * 1e9
    h.calib_ns = hop.protocol.calibrated_delay_ns
    h.burst = hop.protocol.burst_length
    h.spacing_ns = hop.intra_burst_spacing_s * 1e9
    count = int((duration_ps - h.next_ps) // period_ps) + 2
    positions = h.burst if h.scheme == SCHEME_FTM_BURST else 1
    h.dmf = [[0.0] * count for _ in range(positions)]
    h.dmr = [[0.0] * count for _ in range(positions)]
    if hop.medium == "wireless" and hop.channel is not None:
        pdp = build_pdp(hop.channel)
        if pdp.n_taps > 1:
            fading = FadingConfig(spectrum=hop.spectrum, doppler_hz=hop.doppler_hz)
            fwd_rng, rev_rng = fading_seeds
            period_s = hop.protocol.sync_period_s
            for b in range(positions):
                h.dmf[b] = detected_excess_series(
                    pdp, fading, period_s, count,
                    hop.stagger_s + b * hop.intra_burst_spacing_s,
                    fwd_rng, hop.detector_policy, hop.detector_threshold_db).tolist()
            if h.scheme != SCHEME_ONE_WAY:
                rev_offset = hop.stagger_s + h.prop_ns * 1e-9 + hop.reply_delay_s
                for b in range(positions):
                    h.dmr[b] = detected_excess_series(
                        pdp, fading, period_s, count,
                        rev_offset + b * hop.intra_burst_spacing_s,
                        rev_rng, hop.detector_policy, hop.detector_threshold_db).tolist()
    return h


def _run_hop_until(h: _HopRuntime, off: list, rate: list, barrier_ps: int) -> None:
    """Process every exchange of one hop up to the barrier.

    Other streams cannot fire inside the window, so the master clock state is
    constant here and only the slave evolves.  The math mirrors the protocol
    module's exchange functions; a unit test keeps the two in lockstep.
    """
    ceil = math.ceil
    t_ps = h.next_ps
    if t_ps > barrier_ps:
        return
    period_ps = h.period_ps
    mo, mr = off[h.mi], rate[h.mi]
    so, sr = off[h.si], rate[h.si]
    kp, ki, k3, windup = h.kp, h.ki, h.k3, h.windup
    integ, locked = h.integ, h.locked
    ts_m, ph_m, ts_s, ph_s = h.ts_m, h.ph_m, h.ts_s, h.ph_s
    cmT, cmR, cmP = h.cdc_m_T, h.cdc_m_rate, h.cdc_m_phase
    csT, csR, csP = h.cdc_s_T, h.cdc_s_rate, h.cdc_s_phase
    prop, reply, calib = h.prop_ns, h.reply_ns, h.calib_ns
    egress_quant = h.egress_quant
    scheme = h.scheme
    dmf0, dmr0 = h.dmf[0], h.dmr[0]
    n = h.n

    if scheme == SCHEME_ONE_WAY:
        while t_ps <= barrier_ps:
            t0 = t_ps * 1e-3
            t1 = mo + mr * t0
            if cmT:
                t1 += 0.5 * cmT - ((t0 * cmR + cmP) % cmT)
            ta = t0 + prop + dmf0[n]
            v = so + sr * ta
            if csT:
                v += 0.5 * csT - ((ta * csR + csP) % csT)
            t2 = ts_s * (ceil(v / ts_s - ph_s - 0.5) + ph_s)
            est = t2 - t1 - calib
            if locked:
                step = kp * est
                raw = integ + ki * est / k3
                new = windup if raw > windup else (-windup if raw < -windup else raw)
                fstep = new - integ
                integ = new
            else:
                step = est
                fstep = 0.0
                locked = True
            so -= step
            if fstep:
                so += fstep * 1e-6 * ta
                sr -= fstep * 1e-6
            n += 1
            t_ps += period_ps
    elif h.burst == 1 or scheme != SCHEME_FTM_BURST:
        while t_ps <= barrier_ps:
            t0 = t_ps * 1e-3
            v = mo + mr * t0
            if cmT:
                v += 0.5 * cmT - ((t0 * cmR + cmP) % cmT)
            if egress_quant:
                v = ts_m * (ceil(v / ts_m - ph_m - 0.5) + ph_m)
            t1 = v
            ta = t0 + prop + dmf0[n]
            v = so + sr * ta
            if csT:
                v += 0.5 * csT - ((ta * csR + csP) % csT)
            t2 = ts_s * (ceil(v / ts_s - ph_s - 0.5) + ph_s)
            tr = ta + reply
            v = so + sr * tr
            if csT:
                v += 0.5 * csT - ((tr * csR + csP) % csT)
            if egress_quant:
                v = ts_s * (ceil(v / ts_s - ph_s - 0.5) + ph_s)
            t3 = v
            tb = tr + prop + dmr0[n]
            v = mo + mr * tb
            if cmT:
                v += 0.5 * cmT - ((tb * cmR + cmP) % cmT)
            t4 = ts_m * (ceil(v / ts_m - ph_m - 0.5) + ph_m)
            est = ((t2 - t1) - (t4 - t3)) * 0.5
            if locked:
                step = kp * est
                raw = integ + ki * est / k3
                new = windup if raw > windup else (-windup if raw < -windup else raw)
                fstep = new - integ
                integ = new
            else:
                step = est
                fstep = 0.0
                locked = True
            so -= step
            if fstep:
                so += fstep * 1e-6 * tb
                sr -= fstep * 1e-6
            n += 1
            t_ps += period_ps
    else:
        dmf, dmr = h.dmf, h.dmr
        burst, spacing = h.burst, h.spacing_ns
        while t_ps <= barrier_ps:
            t0 = t_ps * 1e-3
            acc = 0.0
            for b in range(burst):
                t = t0 + b * spacing
                v = mo + mr * t
                if cmT:
                    v += 0.5 * cmT - ((t * cmR + cmP) % cmT)
                if egress_quant:
                    v = ts_m * (ceil(v / ts_m - ph_m - 0.5) + ph_m)
                t1 = v
                ta = t + prop + dmf[b][n]
                v = so + sr * ta
                if csT:
                    v += 0.5 * csT - ((ta * csR + csP) % csT)
                t2 = ts_s * (ceil(v / ts_s - ph_s - 0.5) + ph_s)
                tr = ta + reply
                v = so + sr * tr
                if csT:
                    v += 0.5 * csT - ((tr * csR + csP) % csT)
                if egress_quant:
                    v = ts_s * (ceil(v / ts_s - ph_s - 0.5) + ph_s)
                t3 = v
                tb = tr + prop + dmr[b][n]
                v = mo + mr * tb
                if cmT:
                    v += 0.5 * cmT - ((tb * cmR + cmP) % cmT)
                t4 = ts_m * (ceil(v / ts_m - ph_m - 0.5) + ph_m)
                acc += ((t2 - t1) - (t4 - t3)) * 0.5
            est = acc / burst
            if locked:
                step = kp * est
                raw = integ + ki * est / k3
                new = windup if raw > windup else (-windup if raw < -windup else raw)
                fstep = new - integ
                integ = new
            else:
                step = est
                fstep = 0.0
                locked = True
            so -= step
            if fstep:
                so += fstep * 1e-6 * tb
                sr -= fstep * 1e-6
            n += 1
            t_ps += period_ps

    h.next_ps = t_ps
    h.n = n
    h.integ = integ
    h.locked = locked
    off[h.si] = so
    rate[h.si] = sr


def _run_replica(topo: Topology, config: ExperimentConfig,
                 seed_seq: np.random.SeedSequence) -> tuple[np.ndarray, bool]:
    """Simulate one replica; returns (pps error samples, converged flag)."""
    streams = seed_seq.spawn(1 + 2 * len(topo.hops) + 1)
    init_rng = np.random.default_rng(streams[0])
    walk_rng = np.random.default_rng(streams[-1])

    node_index = {n.node_id: i for i, n in enumerate(topo.nodes)}
    off, rate, walk_sigma = [], [], []
    for node in topo.nodes:
        if node.role == "gmc":
            off.append(0.0)
            rate.append(1.0)
            walk_sigma.append(0.0)
            continue
        offset = init_rng.uniform(-1e6, 1e6)
        drift = init_rng.uniform(-2.0, 2.0)
        if config.drift_free:
            drift = 0.0
        off.append(offset)
        rate.append(1.0 + drift * 1e-6)
        walk_sigma.append(0.0 if config.drift_free else config.drift_walk_sigma_ppm_per_s)

    duration_ps = round(config.duration_s * 1e12)
    warmup_ps = round(config.warmup_s * 1e12)
    hops = [
        _prepare_hop(topo.hops[i], node_index, config, init_rng,
                     (np.random.default_rng(streams[1 + 2 * i]),
                      np.random.default_rng(streams[2 + 2 * i])),
                     duration_ps)
        for i in range(len(topo.hops))
    ]

    budget_ns = chain_max_error(topology_budget(topo))
    diverged_limit = DIVERGENCE_FACTOR * budget_ns if budget_ns > 0 else math.inf
    converged = True

    pps_ps = round(config.pps_interval_s * 1e12)
    pps_interval_ns = config.pps_interval_s * 1e9
    next_pps = pps_ps
    pps_k = 1
    walk_period_ps = 10 ** 12
    next_walk = walk_period_ps if any(s > 0 for s in walk_sigma) else duration_ps + 1
    mi_ref = node_index[topo.reference_node]
    mi_slv = node_index[topo.measured_node]
    samples: list[float] = []

    while True:
        best_ps = next_pps
        best = -1  # -1 pps, -2 walk, >=0 hop index
        if next_walk < best_ps:
            best_ps, best = next_walk, -2
        for i, h in enumerate(hops):
            if h.next_ps < best_ps:
                best_ps, best = h.next_ps, i
        if best_ps > duration_ps:
            break
        if best >= 0:
            barrier = next_pps if next_pps < next_walk else next_walk
            for j, other in enumerate(hops):
                if j != best and other.next_ps < barrier:
                    barrier = other.next_ps
            if barrier > duration_ps:
                barrier = duration_ps
            _run_hop_until(hops[best], off, rate, barrier)
        elif best == -1:
            target = pps_k * pps_interval_ns
            err = (target - off[mi_ref]) / rate[mi_ref] - (target - off[mi_slv]) / rate[mi_slv]
            if next_pps > warmup_ps:
                samples.append(err)
                if err > diverged_limit or err < -diverged_limit:
                    converged = False
            pps_k += 1
            next_pps += pps_ps
        else:
            t_ns = next_walk * 1e-3
            for i in range(len(off)):
                sigma = walk_sigma[i]
                if sigma > 0.0:
                    delta_ppm = walk_rng.normal(0.0, sigma)
                    rate[i] += delta_ppm * 1e-6
                    off[i] -= delta_ppm * 1e-6 * t_ns
            next_walk += walk_period_ps

    return np.array(samples), converged


def _replica_job(args):
    topo, config, seed_seq = args
    return _run_replica(topo, config, seed_seq)


def run_experiment(config: ExperimentConfig, workers: int = 1,
                   return_samples: bool = False):
    """Run every replica and pool the PPS error statistics.

    Replica seed streams are pre-split from the experiment seed, so the
    result is identical whatever ``workers`` is.  Sets ``converged=False``
    if any post-warmup sample exceeds ten times the chain budget.
    """
    topo = build_topology(config)
    topo.validate()
    seeds = np.random.SeedSequence(config.seed).spawn(config.replicas)
    jobs = [(topo, config, s) for s in seeds]
    if workers > 1 and config.replicas > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replica_job, jobs))
    else:
        results = [_replica_job(j) for j in jobs]
    sample_arrays = [r[0] for r in results]
    converged = all(r[1] for r in results)
    pooled = np.concatenate(sample_arrays)
    stats = compute_stats(pooled)
    per_replica = tuple(compute_stats(s) for s in sample_arrays)
    stats = replace(stats, per_replica=per_replica, converged=converged)
    if return_samples:
        return stats, sample_arrays
    return stats
