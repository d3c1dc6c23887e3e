"""The accuracy matrix and the three numbers every run reports.

After finishing task t the harness evaluates every task seen so far, filling
row t of a lower-triangular matrix. Average accuracy, forgetting, and
learning accuracy are all derived from that matrix, so any reported number
can be recomputed from the raw CSV.
"""

import numpy as np

from taskgrad import (OptimConfig, RunConfig, accuracy_at, benchmark_stream,
                      forgetting_at, learning_accuracy_at, run_stream)

stream = benchmark_stream()
cfg = RunConfig(method="naive-rmsprop", optim=OptimConfig(lr=0.01),
                hidden=(32,), batch_size=10)
res = run_stream(stream, cfg, seed=0)

print("accuracy matrix (rows: after training task t, cols: evaluated task):")
T = res.matrix.shape[0]
for t in range(T):
    cells = " ".join(f"{res.matrix[t, tau]:.3f}" if tau <= t else "  -  "
                     for tau in range(T))
    print(f"  t={t + 1}: {cells}")

print(f"\naverage accuracy  A_5 = {res.accuracy:.4f}")
print(f"forgetting        F_5 = {res.forgetting:.4f}  "
      "(drop from each earlier task's peak)")
print(f"learning accuracy L_5 = {res.learning_accuracy:.4f}  "
      "(mean of the diagonal)")

print("\neverything recomputes from the matrix:")
print(f"  accuracy_at(matrix, 5)          = {accuracy_at(res.matrix, 5):.4f}")
print(f"  forgetting_at(matrix, 5)        = {forgetting_at(res.matrix, 5):.4f}")
print(f"  learning_accuracy_at(matrix, 5) = {learning_accuracy_at(res.matrix, 5):.4f}")

print(f"\nintermediate history: A_t over the stream = "
      + ", ".join(f"{accuracy_at(res.matrix, t):.3f}" for t in range(1, T + 1)))
print(f"steps per task: {res.steps_per_task} "
      f"(400 examples / batch 10 = 40 steps, single epoch)")
