# %% [markdown]
# # Translating, mixing and extending
#
# Uses the checkpoint written by `02_train_desk_model.py`.
#
# * `translate` turns one template into many maneuvers by varying the style code.
# * `generate_from_scenario` mixes the content codes of several templates with
#   Dirichlet weights, i.e. samples the triangle they span in latent space.
# * `expand_maneuver` doubles the length, keeping the translated block intact.

# %%
import numpy as np
import matplotlib.pyplot as plt

from maneuvergen import Scenario, Template, load_checkpoint
from maneuvergen.generation import envelope_compliance, expand_maneuver, generate_from_scenario, translate
from maneuvergen.metrics import ssim_1d

model = load_checkpoint("desk_checkpoint")
N = model.cfg.n

# %% A trapezoid speed profile
trap = Template(((0, 0.0), (31, 0.0), (47, 0.8), (80, 0.8), (96, 0.0), (127, 0.0)), 0)
outs = translate(model, trap, 16, seed=0)
print("adherence SSIM:", np.mean([ssim_1d(trap.values, m.values[0]) for m in outs]).round(3))

# %% Standstill, take-off and stop-and-go, mixed
null = Template(((0, 0.0), (N - 1, 0.0)), 0)
takeoff = Template(((0, 0.0), (N // 4, 0.0), (N // 2, 0.6), (N - 1, 0.6)), 0)
stop_go = Template(((0, 0.5), (N // 4, 0.0), (N // 2, 0.0), (3 * N // 4, 0.5), (N - 1, 0.5)), 0)
scenario = Scenario([null, takeoff, stop_go])
mixed = generate_from_scenario(model, scenario, 50, seed=1)
print("envelope compliance (min over samples):", envelope_compliance(mixed, scenario.templates).min().round(3))

fig, ax = plt.subplots(figsize=(8, 3))
for m in mixed[:12]:
    ax.plot(m.values[0], lw=0.7, alpha=0.7)
for t in scenario.templates:
    ax.plot(t.values, "k--", lw=1.2)
fig.savefig("03_scenario.svg")

# %% Extending one maneuver with different flank codes
a = expand_maneuver(model, mixed[0], "center", c3_seed=0)
b = expand_maneuver(model, mixed[0], "center", c3_seed=1)
off = (model.cfg.m - N) // 2
print("block identical:", np.array_equal(a.values[:, off:off + N], b.values[:, off:off + N]))
print("flank difference:", np.abs(a.values - b.values).max().round(3))
