# %% [markdown]
# # Past-event network and the five statistics
#
# Edge weights decay with a 30 day halflife and disappear once they fall
# below 0.01. Queries can be issued at any time after the last event.

# %%
import numpy as np

from remsample import DecayConfig, PastEventNetwork, stat_vector
from remsample.network import THIRTY_DAYS

H = THIRTY_DAYS
net = PastEventNetwork()
net.apply_event("alice", "Graph", 0)
net.apply_event("alice", "Graph", H)
net.apply_event("bob", "Graph", H)
net.apply_event("bob", "Tree", 2 * H)

# %%
# one halflife after the second edit the weight is 1/2 + 1/4
print(net.weight("alice", "Graph", 2 * H))
print(stat_vector(net, "alice", "Tree", 2 * H))

# %% [markdown]
# The edge disappears at the first moment its weight is below epsilon,
# about 6.6 halflives after a single edit.

# %%
for k in (6, 7, 8):
    net.advance((k + 2) * H)
    print(k, "halflives later:", list(net.edges()))

# %%
# a busier stream: how many edges stay alive
rng = np.random.default_rng(0)
net = PastEventNetwork(DecayConfig(halflife=100.0))
sizes = []
t = 0.0
for i in range(5000):
    t += rng.exponential(1.0)
    net.apply_event(int(rng.integers(200)), int(rng.integers(200)), t)
    if i % 500 == 0:
        sizes.append(net.n_edges)
print("live edges:", sizes, "pruned so far:", net.n_pruned)
