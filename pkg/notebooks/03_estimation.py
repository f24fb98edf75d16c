# %% [markdown]
# # Fitting the sampled partial likelihood
#
# Newton-Raphson on the stratified conditional likelihood. On a simulated
# stream the exhaustive fit (every dyad as a control) is the reference.

# %%
import numpy as np

from remsample import SampleConfig, SimConfig, fit, replay, simulate

cfg = SimConfig(n_users=20, n_articles=20, n_events=6000, seed=3)
sim = simulate(cfg, record=True)
full = fit(sim.exhaustive_design())
print(full.report())

# %%
# sampled fits move around the exhaustive estimate
tables = replay(sim.events, [SampleConfig(p=0.5, m=5, seed=s) for s in range(10)],
                population=sim.universe)
fits = [fit(t) for t in tables]
theta = np.array([f.theta for f in fits])
se = np.array([f.se for f in fits])
print("truth     ", np.round(cfg.theta, 3))
print("exhaustive", np.round(full.theta, 3))
print("mean      ", np.round(theta.mean(axis=0), 3))
print("sd        ", np.round(theta.std(axis=0, ddof=1), 3))
print("mean SE   ", np.round(se.mean(axis=0), 3))

# %% [markdown]
# When every case has the largest value of some statistic the likelihood
# has no maximum and the fit refuses to return a number.

# %%
from remsample import SeparationError, StrataDesign

d = StrataDesign.from_rows([0, 0, 1, 1], [1, 0, 1, 0], [[1.0], [0.0], [2.0], [0.5]], ("x",))
try:
    fit(d)
except SeparationError as exc:
    print(exc)
