"""Schedule a few hours of the GB case with and without regional rows.

Run:  python demos/03_schedule_a_day.py [hours]     (default 6 hours, a few minutes)

The regional pack is trained on first use and cached in ./demo_packs.
Each run is a rolling horizon: every hour a stochastic unit commitment over
a wind scenario tree is solved and only its first-hour decision is kept.
"""

import logging
import sys
from pathlib import Path

from regfreq import casestudy as cs

logging.disable(logging.WARNING)  # grid corners with no boundary are expected

hours = int(sys.argv[1]) if len(sys.argv) > 1 else 6
gb = cs.gb_dataset()
loss = gb.loss("england")
demand, wind = cs.dataset_profiles(gb, seed=0, days=2)

print("training (or loading) the packs ...")
cache = Path("demo_packs")
plans = [("no rows", None), ("COI rows", cs.pack_for(gb, loss, "uniform", cache)),
         ("regional rows", cs.pack_for(gb, loss, "regional", cache))]

runs = []
for label, pack in plans:
    opts = gb.scheduler_options(frequency=pack is not None)
    res = cs.run_schedule(gb, demand, wind, pack, opts, hours, label)
    runs.append(res)
    s = res.summary
    print(f"{label:<14} H = {s['avg_h1']:>9,.0f} + {s['avg_h2']:>7,.0f} MW s   "
          f"R = {s['avg_r_total']:>6,.0f} MW   carbon {s['carbon_intensity']:5.1f} g/kWh")

print("\nre-simulating the regional decisions hour by hour:")
checks = cs.security_audit(runs[-1].records, demand, gb.security_params(loss), gb.damping,
                           gb.config["network"])
for c in checks:
    print(f"  hour {c.hour:2d}: RoCoF {max(c.max_rocof):.3f} Hz/s, nadir {max(c.nadir):.3f} Hz "
          f"{'ok' if c.passed else 'VIOLATION'}")
