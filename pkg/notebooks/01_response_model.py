"""
Coupled-resonator response model
================================

A layout is a handful of square open-loop resonators. Their side lengths set
the resonant frequencies, their spacing sets the inter-resonator coupling and
the gap width of the two end resonators sets the port coupling. The analytic
model turns that into |s21| on a 200-400 GHz grid.
"""

# %%
# A random four-resonator chain
# -----------------------------

from pathlib import Path

import numpy as np

from dfcopt.circuit import DEFAULT_BOUNDS, TemplateSpec, sample_random_layout, state_matrix
from dfcopt.metrics import PassbandSpec, extract_passbands, response_metrics
from dfcopt.plots import layout_svg, s21_svg
from dfcopt.surrogate import SurrogateConfig, build_coupling_graph, simulate

out = Path(__file__).with_name("output")
out.mkdir(exist_ok=True)

layout = sample_random_layout(TemplateSpec(N=4), DEFAULT_BOUNDS, 12)
for r in layout.resonators:
    print(f"x={r.x:.2f} y={r.y:.2f} l={r.l:.3f} w={r.w:.3f} u={r.u:.2f} gap_w={r.gap_w:.3f}")

# the agent observes this normalized 4 x 9 matrix
print(np.round(state_matrix(layout), 2))

# %%
# Coupling graph
# --------------
# Pairs closer than the threshold are coupled; the coefficient decays
# exponentially with the edge-to-edge gap.

graph = build_coupling_graph(layout)
print("resonant frequencies (GHz):", np.round(graph.f0, 1))
for i, j in graph.edges:
    print(f"k[{i},{j}] = {graph.k[i, j]:.4f} at gap {graph.gaps[i, j]:.3f}")

# %%
# Frequency response
# ------------------

s = simulate(layout)
bands = extract_passbands(s).bands
print("passbands above -6 dB:", [(round(lo, 1), round(hi, 1)) for lo, hi in bands])

target = PassbandSpec(((312.0, 327.0),))
m = response_metrics(s, target)
print(f"IOU {m.iou_percent:.1f}%  insertion loss {m.insertion_loss_db:.2f} dB  "
      f"peak {m.dc_ghz:.1f} GHz  deviation {m.dev_ghz:.1f} GHz")

(out / "01_layout.svg").write_text(layout_svg(layout, title="random chain"))
(out / "01_s21.svg").write_text(s21_svg([("random chain", s)], target.bands))
(out / "01_s21.csv").write_text(s.to_csv())

# %%
# Scaling every side length by 5% tunes the filter down
# ------------------------------------------------------

from dfcopt.circuit import with_free_params

bigger = with_free_params(layout, [(i, {"l": r.l * 1.05}) for i, r in enumerate(layout.resonators)])
s_big = simulate(bigger)
print("peak moves from", s.freqs[np.argmax(np.abs(s.s21))], "to", s.freqs[np.argmax(np.abs(s_big.s21))], "GHz")

# stronger coupling widens the passband
wide = simulate(layout, SurrogateConfig(k_max=0.07))
print("passbands with k_max=0.07:", extract_passbands(wide).bands)
