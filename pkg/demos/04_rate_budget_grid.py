"""
Rate and budget grid
====================

Sweep the personalization rate p and budget gamma on the reference
configuration and print the grid as a text heatmap. The CLI's ``sweep``
command writes the same numbers to heatmap.csv.
"""

from pathlib import Path

import numpy as np

from copfl import load_config, run_experiment

base = load_config(Path(__file__).resolve().parent.parent / "configs" / "reference.json")
p_grid = [0.01, 0.05, 0.15, 0.25, 0.40, 0.50]
gamma_grid = [0.05, 0.30, 0.50, 0.80]
seeds = [0, 1]

table = np.zeros((len(p_grid), len(gamma_grid)))
for i, p in enumerate(p_grid):
    for j, gamma in enumerate(gamma_grid):
        table[i, j] = np.mean([
            run_experiment(base.replace(p=p, gamma=gamma, seed=s)).records[-1].mean_acc
            for s in seeds
        ])

print("p \\ gamma " + "".join(f"{g:>8.2f}" for g in gamma_grid))
for p, row in zip(p_grid, table):
    print(f"{p:>9.2f} " + "".join(f"{v:>8.4f}" for v in row))

best = np.unravel_index(table.argmax(), table.shape)
print(f"best cell: p={p_grid[best[0]]}, gamma={gamma_grid[best[1]]}")
