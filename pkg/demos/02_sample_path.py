"""One coupled path of the full market under the broker's optimal strategy.

Prints a terminal summary, verifies the inventory/cash bookkeeping, and dumps
the full time series (plus the four additive pieces of the broker's rate).
"""

import os

import numpy as np

import brokergame as bg

OUT = os.path.join(os.path.dirname(__file__), "output")
os.makedirs(OUT, exist_ok=True)

grid = bg.TimeGrid(1.0, 1000)
params = bg.DEFAULT_PARAMS
bundle = bg.build_coefficients(params, grid)

res = bg.simulate_path(params, bundle.trader, bundle.broker, bundle.flow,
                       bg.StrategyConfig(signal_source="price"), seed=7)

print(f"terminal price               : {res.price[-1]:9.4f}")
print(f"broker inventory / cash at T : {res.q_broker[-1]:9.4f} / {res.cash_broker[-1]:9.4f}")
print(f"trader inventory / cash at T : {res.q_trader[-1]:9.4f} / {res.cash_trader[-1]:9.4f}")
print(f"broker terminal wealth       : {res.wealth_broker:9.4f}")
print(f"traded notional              : {res.notional:9.1f}")
print(f"bookkeeping gaps (inv, cash) : {res.max_inventory_gap:.2e}, {res.max_cash_gap:.2e}")

share = res.components.std(axis=0)
share = share / share.sum()
for j, name in enumerate(("inventory unwind", "signal estimate", "noise flow",
                          "client inventory")):
    print(f"rate component '{name:17s}': {share[j]:6.1%} of rate variation")

bg.export_path_csv(res, os.path.join(OUT, "sample_path.csv"))
print(f"series written to {OUT}/sample_path.csv")

try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    fig, axes = plt.subplots(2, 2, figsize=(10, 6), sharex=True)
    axes[0, 0].plot(res.t, res.price)
    axes[0, 0].set_title("midprice")
    axes[0, 1].plot(res.t, res.signal, label="signal")
    axes[0, 1].plot(res.t, res.alpha_hat_price, label="price-based estimate")
    axes[0, 1].legend(fontsize=7)
    axes[0, 1].set_title("signal and broker estimate")
    axes[1, 0].plot(res.t, res.rate_broker, label="broker")
    axes[1, 0].plot(res.t, res.rate_trader, label="client")
    axes[1, 0].plot(res.t, res.flow, label="noise flow", alpha=0.5)
    axes[1, 0].legend(fontsize=7)
    axes[1, 0].set_title("trading rates")
    axes[1, 1].plot(res.t, res.q_broker, label="broker")
    axes[1, 1].plot(res.t, res.q_trader, label="client")
    axes[1, 1].legend(fontsize=7)
    axes[1, 1].set_title("inventories")
    fig.tight_layout()
    fig.savefig(os.path.join(OUT, "sample_path.png"), dpi=130)
    print("plot saved: sample_path.png")
