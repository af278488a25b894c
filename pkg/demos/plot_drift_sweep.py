"""
Simulated subgroup drift
========================

Batches are bootstrapped from a prediction table with subgroup proportions
jittered around the table's marginal.  Halfway through a stream, one
subgroup's share grows by ``delta_p``.  Subgroup ``u`` has sensitivity 0.3
and the others 0.9, so growing ``u`` drags the batch sensitivity down
and the lower CUSUM signal follows.
"""

from biasmon.simulate import DriftScenario, calibrate_scenario, sweep_delta, sweep_to_csv
from biasmon.synthetic import GroupSpec, make_table

table = make_table([GroupSpec("u", 300, 2700, 0.3)] +
                   [GroupSpec(f"g{i}", 300, 2700, 0.9) for i in range(4)], seed=2)

# %%
# Calibrate on in-control batches with k = 0, as in the sweep tables.
template = DriftScenario("group", n_batches=200, batch_size=1000, seed=0)
cal = calibrate_scenario(template, table, 0.5, k=0.0)
print(cal.to_dict())

# %%
# Sweep the shift for the low-sensitivity group and one high group.
rows = sweep_delta(table, template, 0.5, cal, [-0.2, -0.1, 0.0, 0.1, 0.2, 0.3], ["u", "g0"])
print(sweep_to_csv(rows))
