"""The classic baselines, replay memory sizing, and hybrid composition.

Every method here rewrites the raw batch gradient before an optimizer
consumes it: a quadratic penalty (weight consolidation), a projection
against replayed gradients, or plain replay averaging. Because the rewrite
is optimizer-agnostic, each baseline also composes with the task-aware
optimizers ("hybrids").
"""

import numpy as np

from taskgrad import OptimConfig, RunConfig, benchmark_stream, run_stream

stream = benchmark_stream()

CONFIGS = [
    ("naive-sgd", dict(lr=0.1)),
    ("stable-sgd", dict(lr=0.1)),
    ("ewc", dict(lr=0.1)),
    ("agem", dict(lr=0.1)),
    ("er", dict(lr=0.1)),
    ("tag-rmsprop", dict(lr=0.003)),
    ("er+rmsprop", dict(lr=0.005)),
    ("er+tag-rmsprop", dict(lr=0.003)),
]

print(f"{'method':16s} {'A_5':>8s} {'F_5':>8s} {'LA_5':>8s}   (3-seed means)")
for method, opt_kw in CONFIGS:
    cfg = RunConfig(method=method, optim=OptimConfig(b=5.0, **opt_kw),
                    hidden=(32,), batch_size=10, mem_per_class=1,
                    ewc_lambda=10.0, lr_decay=0.8, alpha_trace="off")
    runs = [run_stream(stream, cfg, seed) for seed in range(3)]
    print(f"{method:16s} {np.mean([r.accuracy for r in runs]):8.4f} "
          f"{np.mean([r.forgetting for r in runs]):8.4f} "
          f"{np.mean([r.learning_accuracy for r in runs]):8.4f}")

print("\nreplay benefits from a bigger per-class buffer:")
for mem in (1, 5, 10):
    cfg = RunConfig(method="er", optim=OptimConfig(lr=0.1), hidden=(32,),
                    batch_size=10, mem_per_class=mem, alpha_trace="off")
    accs = [run_stream(stream, cfg, seed).accuracy for seed in range(3)]
    print(f"  {mem:2d} examples/class: A_5 = {np.mean(accs):.4f}")
