# %% [markdown]
# # Synthetic maneuvers and templates
#
# A small longitudinal vehicle model produces three normalized signals
# (vehicle speed, engine speed, selected gear) at 1 Hz.  Each signal is then
# summarized as a piecewise-linear template: flat stretches are found from
# the smoothed slope, and the pieces between them become straight ramps.

# %%
import numpy as np
import matplotlib.pyplot as plt

from maneuvergen import SimConfig, simulate_maneuver, takeoff_config
from maneuvergen.templates import extract_template

cfg = SimConfig(duration_s=512)
m = simulate_maneuver(cfg, seed=3)
print(m.values.shape, m.signal_names)

# %% One template per channel
templates = [extract_template(m.values[i], i) for i in range(3)]
for t in templates:
    err = np.max(np.abs(t.values - m.values[t.signal_index]))
    print(f"{m.signal_names[t.signal_index]:>14}: {len(t.breakpoints):2d} breakpoints, max error {err:.3f}")

# %% Take-off maneuvers start from standstill
m0 = simulate_maneuver(takeoff_config(duration_s=512), seed=3)
fig, axes = plt.subplots(3, 1, figsize=(8, 6), sharex=True)
for ax, x, name in zip(axes, m0.values, m0.signal_names):
    ax.plot(x, lw=0.8)
    ax.plot(extract_template(x).values, "k--", lw=1)
    ax.set_ylabel(name)
axes[-1].set_xlabel("time [s]")
fig.savefig("01_templates.svg")
