"""Discrete-event engine: topologies, determinism and engine/protocol lockstep."""

import numpy as np
import pytest

from hybridsync.budget import HOP_CDC, HOP_WIRELESS_ONE_WAY, chain_max_error
from hybridsync.cdc import CdcStage
from hybridsync.channel import LinkGeometry
from hybridsync.clocks import ClockModel, PhcState, ServoState, servo_update
from hybridsync.protocol import (
    PROTOCOL_PRESETS,
    SCHEME_ONE_WAY,
    SCHEME_TWO_WAY,
    LinkPath,
    PortModel,
    ProtocolConfig,
    estimate_offset,
    one_way_beacon,
    two_way_exchange,
)
from hybridsync.sim import (
    ExperimentConfig,
    HopSpec,
    NodeSpec,
    PortSpec,
    SIM_PRESETS,
    Topology,
    TopologyError,
    _HopRuntime,
    build_topology,
    compute_stats,
    pps_error,
    run_experiment,
    _run_hop_until,
    topology_budget,
)


def make_runtime(**overrides) -> _HopRuntime:
    h = _HopRuntime()
    h.mi, h.si = 0, 1
    h.scheme = SCHEME_TWO_WAY
    h.egress_quant = True
    h.period_ps = 10**12
    h.next_ps = 5 * 10**11
    h.n = 0
    h.kp, h.ki = 0.7, 0.3
    h.k3 = 1000.0
    h.integ = 0.0
    h.locked = False
    h.windup = 100.0
    h.ts_m, h.ph_m = 8.0, 0.3
    h.ts_s, h.ph_s = 8.0, 0.7
    h.cdc_m_T, h.cdc_m_rate, h.cdc_m_phase = 0.0, 1.0, 0.0
    h.cdc_s_T, h.cdc_s_rate, h.cdc_s_phase = 0.0, 1.0, 0.0
    h.prop_ns, h.reply_ns, h.calib_ns = 250.5, 1e6, 0.0
    h.dmf = [[0.0] * 64]
    h.dmr = [[0.0] * 64]
    h.burst, h.spacing_ns = 1, 1e6
    for key, value in overrides.items():
        setattr(h, key, value)
    return h


class TestEngineProtocolLockstep:
    """The inlined hot-loop math must reproduce the protocol module exactly."""

    def test_two_way_ethernet_hop(self):
        h = make_runtime()
        off, rate = [0.0, 40.0], [1.0, 1.0 + 2e-6]

        master = PhcState(base_clock=ClockModel(0.0, 0.0))
        slave = PhcState(base_clock=ClockModel(40.0, 2.0))
        port_m = PortModel("ethernet", 8.0, 0.3)
        port_s = PortModel("ethernet", 8.0, 0.7)
        geom = LinkGeometry(base_delay_ns=250.5)
        fwd = LinkPath(geometry=geom, egress_port=port_m, ingress_port=port_s)
        rev = LinkPath(geometry=geom, egress_port=port_s, ingress_port=port_m)
        servo = ServoState(kp=0.7, ki=0.3)
        config = ProtocolConfig()

        for event in range(3):
            t0 = (h.next_ps) * 1e-3
            _run_hop_until(h, off, rate, h.next_ps)

            sample = two_way_exchange(master, slave, fwd, rev, t0)
            est = estimate_offset(sample, config)
            reply_arrival = t0 + 250.5 + 1e6 + 250.5
            step, fstep = servo_update(servo, est, 1.0)
            slave.step_phase(-step)
            if fstep:
                slave.slew_frequency(reply_arrival, -fstep)

            probe = 10e9 + event
            engine_view = off[1] + rate[1] * probe
            assert engine_view == pytest.approx(slave.time_at(probe), abs=1e-6)
            assert h.integ == pytest.approx(servo.integrator_ppm, abs=1e-12)

    def test_one_way_wireless_hop_with_cdc(self):
        stage = CdcStage(t_src_ns=32.0, rel_drift_ppm=3.0, phase0=0.4)
        h = make_runtime(
            scheme=SCHEME_ONE_WAY, egress_quant=False,
            ts_m=50.0, ph_m=0.0, ts_s=50.0, ph_s=0.45,
            cdc_m_T=32.0, cdc_m_rate=1.0 + 3e-6, cdc_m_phase=0.4 * 32.0,
            prop_ns=1135.0, calib_ns=1135.0,
            kp=0.1, ki=0.01, k3=0.5, period_ps=5 * 10**8,
        )
        off, rate = [0.0, -300.0], [1.0, 1.0 - 1e-6]

        master = PhcState(base_clock=ClockModel(0.0, 0.0))
        slave = PhcState(base_clock=ClockModel(-300.0, -1.0))
        port_m = PortModel("wireless", 50.0, 0.0, cdc=stage)
        port_s = PortModel("wireless", 50.0, 0.45)
        link = LinkPath(geometry=LinkGeometry(base_delay_ns=1135.0),
                        egress_port=port_m, ingress_port=port_s)
        servo = ServoState(kp=0.1, ki=0.01)
        config = ProtocolConfig(scheme=SCHEME_ONE_WAY, calibrated_delay_ns=1135.0)

        for _ in range(4):
            t0 = h.next_ps * 1e-3
            _run_hop_until(h, off, rate, h.next_ps)

            sample = one_way_beacon(master, slave, link, t0)
            est = estimate_offset(sample, config)
            step, fstep = servo_update(servo, est, 5e-4)
            slave.step_phase(-step)
            if fstep:
                slave.slew_frequency(t0 + 1135.0, -fstep)

            probe = 3e9
            assert off[1] + rate[1] * probe == pytest.approx(
                slave.time_at(probe), abs=1e-6)


class TestPpsError:
    def test_positive_when_slave_ahead(self):
        ref = PhcState(base_clock=ClockModel(0.0, 0.0))
        slave = PhcState(base_clock=ClockModel(40.0, 0.0))
        assert pps_error(slave, ref, 0.3e9) == pytest.approx(40.0)

    def test_negative_when_slave_behind(self):
        ref = PhcState(base_clock=ClockModel(0.0, 0.0))
        slave = PhcState(base_clock=ClockModel(-25.0, 0.0))
        assert pps_error(slave, ref, 0.0) == pytest.approx(-25.0)

    def test_rate_error_scales_crossing(self):
        ref = PhcState(base_clock=ClockModel(0.0, 0.0))
        slave = PhcState(base_clock=ClockModel(0.0, 1.0))  # 1 ppm fast
        # slave reaches the 1 s mark 1 us of true time early
        assert pps_error(slave, ref, 0.1e9) == pytest.approx(1000.0, rel=1e-5)

    def test_matches_engine_formula(self):
        target = 4e9
        off, rate = [12.5, -80.0], [1.0 + 2e-6, 1.0 - 3e-6]
        ref = PhcState(base_clock=ClockModel(12.5, 2.0))
        slave = PhcState(base_clock=ClockModel(-80.0, -3.0))
        manual = (target - off[0]) / rate[0] - (target - off[1]) / rate[1]
        t_query = 3.2e9
        assert pps_error(slave, ref, t_query) == pytest.approx(manual, abs=1e-5)


class TestTopologies:
    def test_presets_build_and_validate(self):
        for preset in SIM_PRESETS:
            topo = build_topology(ExperimentConfig(preset=preset, channel="IWLAN_A"))
            topo.validate()
            assert topo.name == preset

    def test_calnex_chain_shape(self):
        topo = build_topology(ExperimentConfig(preset="calnex", channel="AWGN"))
        assert [h.medium for h in topo.hops] == ["ethernet", "wireless", "ethernet"]
        assert topo.measured_node == "analyzer"
        assert topo.reference_node == "gmc"

    def test_emulator_wsharp_hop_parameters(self):
        topo = build_topology(ExperimentConfig(preset="emulator-wsharp",
                                               channel="IWLAN_B", speed_kmh=30.0))
        wireless = topo.hops[-1]
        assert wireless.protocol.scheme == SCHEME_ONE_WAY
        assert wireless.protocol.calibrated_delay_ns == 1135.0
        assert wireless.protocol.sync_period_s == pytest.approx(500e-6)
        assert wireless.doppler_hz == pytest.approx(66.71, abs=0.05)
        assert wireless.master_port.cdc_t_src_ns == 32.0
        assert wireless.slave_port.cdc_t_src_ns == 32.0

    def test_single_cdc_stage_config(self):
        topo = build_topology(ExperimentConfig(preset="emulator-80211",
                                               channel="AWGN", cdc_stages=1))
        assert topo.hops[-1].master_port.cdc_t_src_ns == 32.0
        assert topo.hops[-1].slave_port.cdc_t_src_ns == 0.0
        assert chain_max_error(topology_budget(topo)) == 57.0

    def test_scheme_override(self):
        topo = build_topology(ExperimentConfig(preset="emulator-80211",
                                               channel="AWGN",
                                               scheme="ftm_burst", burst_length=4))
        assert topo.hops[-1].protocol.scheme == "ftm_burst"
        assert topo.hops[-1].protocol.burst_length == 4

    def test_ota_budget_drops_common_hops(self):
        # gmc->switch serves both probes and must cancel out
        topo = build_topology(ExperimentConfig(preset="ota-80211", channel="IWLAN_A"))
        entries = topology_budget(topo)
        assert chain_max_error(entries) == 143.0
        assert sum(1 for e in entries if e.kind == HOP_CDC) == 2

    def test_one_way_budget_includes_residual(self):
        config = ExperimentConfig(preset="emulator-wsharp", channel="AWGN",
                                  extra_distance_m=30.0)
        entries = topology_budget(build_topology(config))
        one_way = [e for e in entries if e.kind == HOP_WIRELESS_ONE_WAY]
        assert len(one_way) == 1
        assert one_way[0].t_ms_ns == pytest.approx(30.0 / 0.2998, abs=0.01)
        assert chain_max_error(entries) == pytest.approx(173.07, abs=0.01)

    def test_budget_matches_analytic_presets(self):
        pairs = [("calnex-eth3", 24.0), ("calnex", 73.0)]
        for preset, expected in pairs:
            topo = build_topology(ExperimentConfig(preset=preset, channel="AWGN"))
            assert chain_max_error(topology_budget(topo)) == expected

    def test_validation_catches_bad_graphs(self):
        nodes = (NodeSpec("a", "gmc"), NodeSpec("b"), NodeSpec("c"))
        eth = PortSpec()
        proto = PROTOCOL_PRESETS["wired-ptp"]

        def hop(m, s):
            return HopSpec(m, s, "ethernet", proto, eth, eth)

        with pytest.raises(TopologyError):  # orphan c
            Topology("t", nodes, (hop("a", "b"),), "c", "a").validate()
        with pytest.raises(TopologyError):  # two upstream hops
            Topology("t", nodes, (hop("a", "b"), hop("c", "b"), hop("a", "c")),
                     "b", "a").validate()
        with pytest.raises(TopologyError):  # gmc as slave
            Topology("t", nodes, (hop("b", "a"), hop("a", "b"), hop("a", "c")),
                     "b", "a").validate()
        with pytest.raises(TopologyError):  # unknown probe
            Topology("t", nodes, (hop("a", "b"), hop("b", "c")), "d", "a").validate()
        with pytest.raises(TopologyError):  # no gmc
            Topology("t", (NodeSpec("a"), NodeSpec("b")), (hop("a", "b"),),
                     "b", "a").validate()

    def test_unknown_preset_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(preset="testbed-9000")


class TestExperimentConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig(duration_s=10.0, warmup_s=10.0)
        with pytest.raises(ValueError):
            ExperimentConfig(cdc_stages=3)
        with pytest.raises(ValueError):
            ExperimentConfig(replicas=0)
        with pytest.raises(ValueError):
            ExperimentConfig(pps_interval_s=0.0)

    def test_dict_round_trip_rejects_unknown_keys(self):
        config = ExperimentConfig(preset="calnex", channel="WLAN_A", seed=9)
        doc = config.as_dict()
        doc.pop("inline_topology")
        assert ExperimentConfig.from_dict(doc) == config
        doc["jitter_budget"] = 1.0
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict(doc)


class TestRunExperiment:
    def quick_config(self, **overrides):
        base = dict(preset="calnex", channel="AWGN", duration_s=30.0,
                    warmup_s=6.0, pps_interval_s=0.5, replicas=2, seed=42,
                    drift_free=True)
        base.update(overrides)
        return ExperimentConfig(**base)

    def test_deterministic_given_seed(self):
        config = self.quick_config()
        _, a = run_experiment(config, return_samples=True)
        _, b = run_experiment(config, return_samples=True)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_seed_changes_samples(self):
        _, a = run_experiment(self.quick_config(seed=1), return_samples=True)
        _, b = run_experiment(self.quick_config(seed=2), return_samples=True)
        assert not np.array_equal(a[0], b[0])

    def test_workers_do_not_change_samples(self):
        config = self.quick_config(preset="emulator-wsharp", channel="IWLAN_B",
                                   speed_kmh=10.0, replicas=3, drift_free=False)
        _, serial = run_experiment(config, workers=1, return_samples=True)
        _, parallel = run_experiment(config, workers=2, return_samples=True)
        for x, y in zip(serial, parallel):
            assert np.array_equal(x, y)

    def test_sample_count_and_replica_stats(self):
        config = self.quick_config()
        stats, arrays = run_experiment(config, return_samples=True)
        per_replica_edges = int((30.0 - 6.0) / 0.5)
        assert all(len(a) == per_replica_edges for a in arrays)
        assert stats.n_samples == 2 * per_replica_edges
        assert len(stats.per_replica) == 2
        assert stats.converged

    def test_drift_free_chain_respects_budget(self):
        config = self.quick_config(replicas=8)
        budget = chain_max_error(topology_budget(build_topology(config)))
        _, arrays = run_experiment(config, return_samples=True)
        worst = max(max(abs(a.min()), abs(a.max())) for a in arrays)
        assert worst <= budget

    def test_violent_drift_walk_flags_divergence(self):
        config = self.quick_config(preset="calnex-eth3", drift_free=False,
                                   drift_walk_sigma_ppm_per_s=5.0,
                                   duration_s=40.0, warmup_s=6.0, replicas=1)
        stats = run_experiment(config)
        assert not stats.converged

    def test_ftm_scheme_runs(self):
        config = self.quick_config(preset="emulator-80211", channel="IWLAN_A",
                                   scheme="ftm_burst", burst_length=4,
                                   duration_s=20.0, warmup_s=5.0, replicas=1,
                                   drift_free=False)
        stats = run_experiment(config)
        assert stats.converged
        assert stats.n_samples == 30

    def test_one_way_bias_tracks_uncompensated_distance(self):
        # paired runs share every draw, so the mean shift isolates the
        # uncompensated propagation of the extra 30 m
        mus = []
        for extra in (0.0, 30.0):
            config = self.quick_config(preset="emulator-wsharp", channel="AWGN",
                                       extra_distance_m=extra, duration_s=40.0,
                                       warmup_s=10.0, replicas=2)
            mus.append(run_experiment(config).mu_ns)
        assert mus[1] - mus[0] == pytest.approx(-30.0 / 0.2998, abs=15.0)


class TestComputeStats:
    def test_known_values(self):
        stats = compute_stats([1.0, 3.0, 5.0, 7.0])
        assert stats.mu_ns == 4.0
        assert stats.sigma_ns == pytest.approx(np.std([1, 3, 5, 7], ddof=1))
        assert stats.mu_plus_3sigma_ns == pytest.approx(4.0 + 3 * stats.sigma_ns)
        assert (stats.min_ns, stats.max_ns) == (1.0, 7.0)
        assert stats.n_samples == 4
        assert sum(stats.hist_counts) == 4
        assert len(stats.hist_edges) == len(stats.hist_counts) + 1

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            compute_stats([1.0])

    def test_sign_preserved_in_mu(self):
        stats = compute_stats([-10.0, -12.0, -14.0])
        assert stats.mu_ns == -12.0
        assert stats.mu_plus_3sigma_ns == pytest.approx(12.0 + 3 * 2.0)
