"""Solve every deterministic coefficient table and inspect the key numbers.

The trader's speed-filter variance relaxes to a closed-form steady state, his
inventory coefficient is a negative backward Riccati solution, and the
broker's 4x4 value-function matrix agrees with its reduced 2x2 corner block.
Writes the full tables as CSV next to this script.
"""

import os

import numpy as np

import brokergame as bg

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

grid = bg.TimeGrid(horizon=1.0, steps=1000)
params = bg.DEFAULT_PARAMS
print("solving trader system ...")
trader = bg.solve_trader(params, grid)
print(f"  speed-filter variance at T : {trader.var_nu.at_index(grid.steps):10.5f}"
      f"   (steady state ~ 179.998)")
print(f"  inventory coefficient at T : {trader.g2.at_index(grid.steps):10.5f}")
print(f"  signal loading f1(0)       : {trader.f1.at_index(0):10.5f}")
print(f"  speed loading  f2(0)       : {trader.f2.at_index(0):10.5f}")
print(f"  inventory loading f3(0)    : {trader.f3.at_index(0):10.5f}")

print("solving broker system ...")
broker = bg.solve_broker(params, trader, grid)
print(f"  price-filter variance at T : {broker.var_alpha.at_index(grid.steps):10.6f}"
      f"   (steady state ~ 0.099020)")
print(f"  reduced-vs-full block gap  : {broker.block_dev:.3e}")
print(f"  feedback gains at t=0      : {np.round(broker.gains.at_index(0), 5)}")
ev = broker.eigvals.values
print(f"  existence diagnostic       : max(l1..l3) = {ev[:, :3].max():.3e}, "
      f"max|l4| = {np.abs(ev[:, 3]).max():.3e}")

bg.export_trader_csv(trader, os.path.join(OUT, "trader_coefficients.csv"))
bg.export_broker_csv(broker, os.path.join(OUT, "broker_coefficients.csv"))
print(f"tables written to {OUT}")

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    t = grid.times
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    axes[0].plot(t, trader.var_nu.values)
    axes[0].set_title("speed-filter variance")
    axes[1].plot(t, trader.g2.values)
    axes[1].set_title("inventory coefficient")
    for j, name in enumerate(("q_broker", "alpha_hat", "flow", "q_trader")):
        axes[2].plot(t, broker.gains.values[:, j], label=name)
    axes[2].set_title("broker feedback gains")
    axes[2].legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(os.path.join(OUT, "coefficients.png"), dpi=130)
    print("plot saved: coefficients.png")
