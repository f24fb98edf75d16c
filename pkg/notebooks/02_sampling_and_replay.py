# %% [markdown]
# # Sampling events and controls while replaying a stream
#
# Each event is kept with probability p. Every kept event gets m controls
# drawn uniformly from the current users x articles, and all rows are
# written to one observation table. Several (p, m, seed) settings share
# one pass over the stream.

# %%
import numpy as np

from remsample import SampleConfig, SimConfig, density_diagnostic, replay, simulate

sim = simulate(SimConfig(n_users=20, n_articles=20, n_events=3000, seed=1))
configs = [SampleConfig(p=0.2, m=5, seed=s) for s in range(3)] + [SampleConfig(p=0.4, m=5, seed=0)]
tables = replay(sim.events, configs, population=sim.universe)
for cfg, tab in zip(configs, tables):
    print(cfg, "strata:", tab.n_strata, "rows:", len(tab))

# %%
# event inclusion is nested: with the same seed, p=0.2 picks a subset of p=0.4
small = set(tables[0].stratum)
large = set(tables[3].stratum)
print("nested:", small <= large)

# %%
tab = tables[0]
print(tab.stats[tab.is_case].mean(axis=0))
print(tab.stats[~tab.is_case].mean(axis=0))

# %%
rep = density_diagnostic(tab, warn=False)
for name, e, c in zip(rep.names, rep.events, rep.controls):
    print(f"{name:14s} events {e:.3f} controls {c:.3f}")
