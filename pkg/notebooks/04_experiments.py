# %% [markdown]
# # Sampling-variability designs
#
# A design is a grid of (p, m) cells with independent seeds per replicate.
# The results are summarized per cell, effect and quantity (par, se, z).

# %%
from remsample import DesignSpec, SimConfig, design_cells, run_design, simulate

for kind in ("vary_p", "vary_m", "fixed_budget"):
    cells = design_cells(DesignSpec(kind))
    print(kind, [(c.index, c.m, f"{c.p:.3E}") for c in cells[:4]], "...")

# %%
sim = simulate(SimConfig(n_users=15, n_articles=15, n_events=3000, seed=2))
spec = DesignSpec("vary_m", p_fixed=0.3, replicates=5, seed=1, indices=(0, 2, 4))
res = run_design(sim.events, spec, population=sim.universe, workers=1)
for summary in res.summaries:
    for row in summary.rows:
        if row.quantity == "par" and row.effect in ("popularity", "activity"):
            print(summary.cell.m, row.effect, f"mean {row.mean:.3f} sd {row.sd:.3f}")
