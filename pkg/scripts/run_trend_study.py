#!/usr/bin/env python3
"""Monte Carlo trend study over channel severity, mobility, and distance.

Runs three experiments and writes one JSON document (plus a CSV of the
per-point statistics):

  severity   per-channel error spread for both messaging schemes at 10 km/h
  mobility   one-way spread on IWLAN_B at several scatterer speeds
  distance   mean error with extra uncompensated line-of-sight distance

The defaults match the acceptance-level sizing (20 replicas x 1000 samples
per point) and take a few minutes on one core; ``--quick`` shrinks every
run for a fast smoke pass.
"""

import argparse
import csv
import json
import pathlib
import time

from hybridsync.sim import ExperimentConfig, run_experiment

CHANNELS = ["AWGN", "IWLAN_A", "WLAN_A", "IWLAN_B", "WLAN_C"]
SCHEMES = {"two_way": "emulator-80211", "one_way": "emulator-wsharp"}
SPEEDS_KMH = [0.0, 10.0, 30.0]
DISTANCES_M = [0.0, 10.0, 30.0]


def stats_dict(stats):
    return {
        "mu_ns": stats.mu_ns,
        "sigma_ns": stats.sigma_ns,
        "mu_plus_3sigma_ns": stats.mu_plus_3sigma_ns,
        "min_ns": stats.min_ns,
        "max_ns": stats.max_ns,
        "n_samples": stats.n_samples,
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="results/trends",
                        help="output directory")
    parser.add_argument("--seed", type=int, default=1001)
    parser.add_argument("--replicas", type=int, default=20)
    parser.add_argument("--duration-s", type=float, default=520.0)
    parser.add_argument("--warmup-s", type=float, default=20.0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--quick", action="store_true",
                        help="4 replicas x 120 s, for a fast smoke run")
    args = parser.parse_args()
    if args.quick:
        args.replicas, args.duration_s = 4, 120.0

    base = dict(duration_s=args.duration_s, warmup_s=args.warmup_s,
                pps_interval_s=0.5, replicas=args.replicas, seed=args.seed)

    def run(preset, channel, **kw):
        fields = dict(base, speed_kmh=10.0)
        fields.update(kw)
        config = ExperimentConfig(preset=preset, channel=channel, **fields)
        return run_experiment(config, workers=args.workers)

    started = time.monotonic()
    points = []
    for scheme, preset in SCHEMES.items():
        for channel in CHANNELS:
            stats = run(preset, channel)
            points.append({"study": "severity", "scheme": scheme,
                           "channel": channel, "value": channel,
                           **stats_dict(stats)})
            print(f"severity {scheme:8s} {channel:8s} "
                  f"mu={stats.mu_ns:8.2f}  sigma={stats.sigma_ns:7.2f}")
    for speed in SPEEDS_KMH:
        stats = run("emulator-wsharp", "IWLAN_B", speed_kmh=speed)
        points.append({"study": "mobility", "scheme": "one_way",
                       "channel": "IWLAN_B", "value": speed,
                       **stats_dict(stats)})
        print(f"mobility one_way  {speed:4.0f} km/h  "
              f"mu={stats.mu_ns:8.2f}  sigma={stats.sigma_ns:7.2f}")
    for scheme, preset in SCHEMES.items():
        for distance in DISTANCES_M:
            stats = run(preset, "IWLAN_B", extra_distance_m=distance)
            points.append({"study": "distance", "scheme": scheme,
                           "channel": "IWLAN_B", "value": distance,
                           **stats_dict(stats)})
            print(f"distance {scheme:8s} {distance:4.0f} m     "
                  f"mu={stats.mu_ns:8.2f}  sigma={stats.sigma_ns:7.2f}")
    elapsed = time.monotonic() - started

    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "config": {"seed": args.seed, "replicas": args.replicas,
                   "duration_s": args.duration_s, "warmup_s": args.warmup_s},
        "elapsed_s": round(elapsed, 2),
        "points": points,
    }
    (out / "trends.json").write_text(json.dumps(doc, indent=2) + "\n")
    with (out / "trends.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(points[0]))
        writer.writeheader()
        writer.writerows(points)
    print(f"\n{len(points)} points in {elapsed:.1f} s -> {out}/trends.json")


if __name__ == "__main__":
    main()
