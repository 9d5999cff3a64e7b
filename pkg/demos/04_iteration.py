"""
The iteration at desk scale
===========================

Runs a short iteration, prints the stress decay table and the per-step
consistency checks, then sweeps lambda0 for the first half-step.
"""

# %%
import dataclasses

from sqgci.engine import ParamSchedule, RunAborted, half_step, init_state, run, validate_params
from sqgci.verification import decay_report

p = ParamSchedule(lambda0=8, b=1.2, beta=0.3, alpha=0.6, gamma=1.0, nu=0.0, c0=2.0, n_max=1)
print(validate_params(p).format())

# %%
try:
    res = run(p)
except RunAborted as exc:
    res = exc.result
    print("stopped early:", res.error)
print(decay_report(res.reports).format())
for rep in res.reports[1:]:
    print(f"half-step {rep.stage} ({rep.parity}): two-way {rep.extra['two_way_rel']:.1e}, "
          f"pm4 {max(rep.extra['pm4']):.1e}, skip {rep.extra['skip_defect']}")

# %%
# Larger lambda0 pulls the first-step ratio toward delta_1 / delta_0.
for l0 in (8, 12, 16):
    q = dataclasses.replace(p, lambda0=l0)
    s0, r0 = init_state(q)
    _, r1 = half_step(s0, q)
    print(f"lambda0 = {l0:>2}: ratio {r1.norms['Gt_X'] / r0.norms['Gt_X']:.3f}, "
          f"delta ratio {q.delta(1) / q.delta(0):.3f}")
