"""
Hitting a wall with and without proximity data
==============================================

Run the circle scenario whose path cuts through a wall, once using the
proximity sensors and once ignoring them, and compare the contact forces.
"""

import numpy as np

from proxcontact.simworld import load_scenario, run_scenario, summarize

scenario = load_scenario("static_wall_circle")
print(scenario.description)

runs = {label: run_scenario(scenario, proximity=prox, seed=0)
        for label, prox in (("informed", True), ("uninformed", False))}

for label, trace in runs.items():
    s = summarize(trace)
    first = int(np.argmax(trace["in_contact"] > 0))
    speed = np.linalg.norm(np.diff(trace.vector("ee"), axis=0), axis=1) / 0.01
    print(f"{label:>10}: peak |F| {s['peak_force']:6.2f} N, {s['contact_count']} detection(s), "
          f"EE speed at impact {speed[max(first - 1, 0)]:.3f} m/s, lowest scale {trace['scale_factor'].min():.2f}")

peaks = {k: summarize(v)["peak_force"] for k, v in runs.items()}
print(f"uninformed / informed peak force: {peaks['uninformed'] / peaks['informed']:.2f}")
