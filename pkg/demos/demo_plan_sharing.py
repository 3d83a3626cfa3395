#!/usr/bin/env python3
"""Shared insurance plans: many patients, few stored descriptors.

Runs the dedup benchmark in both modes at a small scale and prints the
storage comparison the full benchmark (`medledger bench flyweight`) reports.
"""

from medledger.bench import format_table, run_flyweight_bench

rows = [
    run_flyweight_bench(patients=200, plans=4, use_flyweight=True),
    run_flyweight_bench(patients=200, plans=4, use_flyweight=False),
]
print(format_table(rows))
ratio = rows[1]["planBytes"] / rows[0]["planBytes"]
print(f"\nduplicating descriptors costs {ratio:.0f}x the plan storage of interning")
print("per-patient member numbers and group codes stay on each account (extrinsic state)")
