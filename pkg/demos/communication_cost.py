"""
Where the messages go
=====================

First the structure comparison: one global sum over q workers with a
binary tree, a star and a ring. Then the traffic of a real training run,
which grows quadratically because iteration t must evaluate up to t
random features on the freshly drawn sample.
"""

import numpy as np

from fedkern.cli import comm_bench_rows
from fedkern.dataio import make_circles, make_vertical, samples_from_arrays
from fedkern.engine import Federation, TrainConfig
from fedkern.rff import KernelSpec

print("structure   q  rounds  messages  latency_ms")
for r in comm_bench_rows([4, 8, 16]):
    print(f"{r['structure']:9s} {r['q']:3d} {r['rounds']:7d} {r['messages']:9d} {r['simulated_latency_ms']:11.1f}")

X, y = make_circles(1000, d=8, seed=1)
data = make_vertical(samples_from_arrays(X, y), q=4, seed=1)
cfg = TrainConfig(gamma=0.1, lam=2e-3, iterations=1000, kernel=KernelSpec("rbf", 0.5))
fed = Federation(data, cfg)
m = fed.train()

cum = np.cumsum(m.scalars_per_iteration)
ts = np.arange(100, 1001, 100)
a, b = np.linalg.lstsq(np.column_stack([ts**2.0, ts * 1.0]), cum[ts - 1], rcond=None)[0]
print(f"\ncumulative scalars ~ {a:.3f} t^2 + {b:.1f} t")
for t in (1, 10, 100, 1000):
    print(f"  iteration {t:4d}: {m.scalars_per_iteration[t - 1]:5d} scalars, {m.messages_per_iteration[t - 1]:3d} messages (3qt = {12 * t})")
