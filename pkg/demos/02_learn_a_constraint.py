"""Learn the regional frequency rows for the GB England loss, then audit them.

Run:  python demos/02_learn_a_constraint.py      (about a minute)

The pipeline behind every trained pack:

1. sweep: walk a grid of operating points onto the RoCoF and nadir
   boundaries, plus a few points just inside and outside them;
2. fit: a least-squares fit per region and metric that may only
   overestimate the simulated value;
3. build: clear the fitted expressions into rows that are linear in the
   regional inertia and response, and add guard rows that keep the
   schedule inside the region the fits were trained on;
4. audit: pick fresh points on the boundary of the whole pack and
   simulate them.  A sound pack never lets a simulated point break a limit.
"""

import logging

from regfreq import casestudy as cs

logging.disable(logging.WARNING)  # unreachable grid corners are reported, not fatal

gb = cs.gb_dataset()
trained = cs.train_pack(gb, gb.loss("england"), "regional")
for name, ss in trained.sample_sets.items():
    print(f"{name:>6} sweep: {len(ss.points)} boundary points, {len(ss)} samples, "
          f"{len(ss.failures)} grid points with no boundary")

pack = trained.pack
print("\nrows, folded at 27 GW England / 3 GW Scotland demand:")
for r in pack.rebuild(0.005 * 27_000, 0.005 * 3_000).rows + pack.guard_rows():
    print(f"  {r.name:<22}{r.coeff_h1:+10.4f} H1 {r.coeff_h2:+10.4f} H2 "
          f"{r.coeff_r1:+9.3f} R1 {r.coeff_r2:+9.3f} R2 >= {r.rhs:>12,.1f}")

for m in pack.models:
    print(f"{m.kind:>13} region {m.region}: smallest training residual "
          f"{m.training_stats['min_overestimation']:+.1e}")

checks = cs.pack_audit(pack, (27_000.0, 3_000.0), n_points=30, seed=0)
worst_rocof = max(max(c.max_rocof) for c in checks)
worst_nadir = max(max(c.nadir) for c in checks)
print(f"\naudit: {sum(c.passed for c in checks)}/{len(checks)} boundary points secure; "
      f"worst RoCoF {worst_rocof:.3f} Hz/s (limit 1.0), worst nadir {worst_nadir:.3f} Hz (limit 0.8)")
