#!/usr/bin/env python3
"""Print the analytic worst-case error tables.

Covers the per-channel wireless link budgets for both messaging schemes and
the end-to-end chain totals for every built-in chain preset.  Optionally
writes the same numbers as CSV files.
"""

import argparse
import csv
import pathlib

from hybridsync.budget import (
    CHAIN_PRESETS,
    chain_max_error,
    chain_preset,
    wireless_link_budget,
)
from hybridsync.channel import CHANNEL_CATALOG


def link_rows():
    for name, (label, rms, excess) in CHANNEL_CATALOG.items():
        yield {
            "channel": name,
            "scenario": label,
            "rms_ns": rms,
            "max_excess_ns": excess,
            "two_way_ns": wireless_link_budget(name, "two_way"),
            "one_way_ns": wireless_link_budget(name, "one_way"),
        }


def chain_rows(cdc_stages, t_ms_ns):
    for preset in CHAIN_PRESETS:
        hops = chain_preset(preset, cdc_stages=cdc_stages, t_ms_ns=t_ms_ns)
        yield {"preset": preset, "hops": len(hops),
               "total_ns": chain_max_error(hops)}


def print_table(rows, columns):
    rows = list(rows)
    widths = [max(len(c), *(len(f"{r[c]}") for r in rows)) for c in columns]
    header = "  ".join(c.ljust(w) for c, w in zip(columns, widths))
    print(header)
    print("-" * len(header))
    for r in rows:
        print("  ".join(f"{r[c]}".ljust(w) for c, w in zip(columns, widths)))
    print()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--cdc-stages", type=int, default=2, choices=(1, 2))
    parser.add_argument("--t-ms-ns", type=float, default=0.0,
                        help="uncalibrated one-way propagation term, ns")
    parser.add_argument("--out", help="directory for CSV output")
    args = parser.parse_args()

    links = list(link_rows())
    chains = list(chain_rows(args.cdc_stages, args.t_ms_ns))

    print("Wireless link worst-case error by channel (ns)\n")
    print_table(links, ["channel", "scenario", "rms_ns", "max_excess_ns",
                        "two_way_ns", "one_way_ns"])
    print("End-to-end chain worst-case error by preset (ns)\n")
    print_table(chains, ["preset", "hops", "total_ns"])

    if args.out:
        out = pathlib.Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, rows in (("link_budgets.csv", links),
                           ("chain_budgets.csv", chains)):
            with (out / name).open("w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
                writer.writeheader()
                writer.writerows(rows)
        print(f"wrote {out / 'link_budgets.csv'} and {out / 'chain_budgets.csv'}")


if __name__ == "__main__":
    main()
