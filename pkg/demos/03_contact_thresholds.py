"""
Dynamic contact thresholds
==========================

Stream a noisy force signal through the contact monitor, drop one large
spike into it, then press on the end effector with an obstacle nearby.
"""

import numpy as np

from proxcontact.contact import ContactMonitor, ThresholdParams, thresholds

np.set_printoptions(precision=3, suppress=True)
rng = np.random.default_rng(0)
params = ThresholdParams()

# the band around a quiet signal, a noisy one, and one with a +y obstacle
zero = np.zeros(3)
for label, std, obstacles in (("quiet", zero, []), ("noisy", np.full(3, 3.0), []),
                              ("+y obstacle at 5 cm", zero, [np.array([0.0, 0.05, 0.0])])):
    upper, lower = thresholds(zero, std, params, obstacles, zero)
    print(f"{label:>20}: lower {lower}, upper {upper}")

# 1 s of sensor noise fills the window; detection starts once it is full
mon = ContactMonitor(params)
t = 0.0
for _ in range(100):
    mon.update(rng.normal(0.0, 0.3, 3), t)
    t += 0.01
print("window mean", mon.window.mean, "std", mon.window.std)

# a single 50 N spike is detected once and barely moves the window
mean_before = mon.window.mean.copy()
out = mon.update(np.array([50.0, 0.0, 0.0]), t)
print("spike detected:", out["event"] is not None, "reaction", out["reaction"])
print("mean shift", mon.window.mean - mean_before)

# let the reaction decay, then lean on the tool with 8 N along +y
for _ in range(250):
    t += 0.01
    mon.update(rng.normal(0.0, 0.3, 3), t)
press = np.array([0.0, 8.0, 0.0])
for label, obstacles in (("no obstacle", []), ("obstacle on -y", [np.array([0.0, -0.1, 0.0])])):
    upper, lower = thresholds(mon.window.mean, mon.window.std, params, obstacles, zero)
    verdict = "contact" if np.any(press > upper) or np.any(press < lower) else "no contact"
    print(f"8 N press, {label}: y-band ({lower[1]:.2f}, {upper[1]:.2f}) -> {verdict}")
