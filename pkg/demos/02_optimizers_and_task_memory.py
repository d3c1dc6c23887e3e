"""How the task-aware optimizers differ from their plain counterparts.

A task-aware optimizer keeps one frozen (first moment, second moment) pair
per finished task. At every step it compares the running gradient direction
with each stored task's direction: the correlation weight exp(-b * cosine)
then rescales that task's second moment inside the denominator. Opposed
history means bigger denominators (careful steps); aligned history means
smaller ones (faster transfer).
"""

import numpy as np

from taskgrad import (KnowledgeBase, OptimConfig, RMSProp, TagRMSProp,
                      tag_alpha, tag_alphas, tag_weighted_second_moment)

cfg = OptimConfig(lr=0.1, beta1=0.9, beta2=0.99, b=3.0)

print("correlation weights at b=3:")
for name, m_prev in (("aligned", np.array([1.0, 0.0])),
                     ("orthogonal", np.array([0.0, 1.0])),
                     ("opposed", np.array([-1.0, 0.0]))):
    a = tag_alpha(np.array([1.0, 0.0]), m_prev, cfg.b)
    print(f"  {name:10s}: alpha = {a:7.4f}")

print("\na two-task scalar walk:")
opt = TagRMSProp(cfg, dim=1)
theta = np.array([0.0])
for g in (1.0, 0.8, 1.2):                       # task 1 pushes one way
    theta = opt.step(theta, np.array([g]))
opt.end_task()
print(f"  after task 1: theta = {theta[0]:+.4f}, "
      f"stored tasks = {len(opt.kb.frozen)}")

for g in (-1.0, -0.9):                          # task 2 pushes back
    theta = opt.step(theta, np.array([g]))
alphas = tag_alphas(opt.kb, cfg.b)
print(f"  during task 2 the weight on task 1's moment is {alphas[0]:.3f} "
      "(> 1, opposed direction, so updates shrink)")
print(f"  weighted denominator moment: "
      f"{tag_weighted_second_moment(opt.kb, cfg.b)[0]:.4f} "
      f"vs the running moment alone {opt.kb.current_V[0]:.4f}")

print("\non a single task the task-aware update IS the plain update:")
rng = np.random.default_rng(7)
plain, tagged = RMSProp(cfg, 4), TagRMSProp(cfg, 4)
ta = tb = np.zeros(4)
for _ in range(200):
    g = rng.normal(size=4)
    ta, tb = plain.step(ta, g), tagged.step(tb, g)
print(f"  max coordinate gap after 200 shared gradients: "
      f"{np.max(np.abs(ta - tb)):.1e}")

print("\nknowledge bases snapshot to CSV and restore exactly:")
kb = KnowledgeBase(3)
kb.update(rng.normal(size=3))
kb.commit_task()
kb.update(rng.normal(size=3))
from taskgrad import load_knowledge_base, save_knowledge_base
save_knowledge_base(kb, "/tmp/kb_demo.csv")
back = load_knowledge_base("/tmp/kb_demo.csv")
print(f"  restored task counter {back.task_t}, step counter {back.step_n}, "
      f"moments equal: {np.array_equal(back.current_M, kb.current_M)}")
