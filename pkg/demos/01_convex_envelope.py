"""
Convex envelopes on a simplex lattice
=====================================

The belief variable of an informed player lives on the probability simplex.
Every backward step of the solver replaces a column of nodal values by its
lower convex envelope on the lattice. This script shows what that operation
does for two and three configurations and checks it against the
basis-enumeration oracle.
"""

#%%
import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from vexgame import SimplexPartition, envelope_lp_oracle, lower_convex_envelope

rng = np.random.default_rng(3)

#%%
# Two configurations
# ------------------
# With I = 2 the simplex is a segment, parametrized by p_1. The envelope is
# the lower hull of the points (p_1, y); nodes strictly above the hull are
# "inactive" and get written as mixtures of their hull neighbours.
part = SimplexPartition.uniform(2, 20)
p = part.nodes[:, 0]
y = np.sin(6 * p) + 0.3 * rng.standard_normal(part.M)
env = lower_convex_envelope(part, y)
print(f"I=2: {env.active.sum()} of {part.M} nodes lie on the hull")

oracle = envelope_lp_oracle(part.nodes, y, part.nodes)
print(f"max |hull - oracle| = {np.abs(env.values - oracle).max():.2e}")

#%%
# The support of an inactive node is the pair of hull nodes around it; the
# weights are its barycentric coordinates on that chord.
m = int(np.flatnonzero(~env.active)[0])
print(f"node {m} (p_1 = {p[m]:.2f}) is supported by nodes {env.support[m]} "
      f"with weights {np.round(env.weights[m], 3)}")

fig, ax = plt.subplots(figsize=(6, 3.5))
ax.plot(p, y, "o", ms=4, label="values")
ax.plot(p, env.values, "-", label="lower convex envelope")
ax.set_xlabel("$p_1$")
ax.legend()
fig.tight_layout()
fig.savefig("envelope_1d.png", dpi=120)

#%%
# Three configurations
# --------------------
# For I = 3 the lifted points (p_1, p_2, y) go through a 3-d hull and the
# lower facets define the envelope. The oracle solves the underlying linear
# program by enumerating bases, so it is slow but independent of the hull.
part3 = SimplexPartition.uniform(3, 6)
y3 = rng.uniform(-1, 1, part3.M)
env3 = lower_convex_envelope(part3, y3)
gap = np.abs(env3.values - envelope_lp_oracle(part3.nodes, y3, part3.nodes)).max()
print(f"I=3: {part3.M} nodes, {env3.active.sum()} active, max gap to oracle {gap:.2e}")

#%%
# Envelope evaluation between nodes interpolates along the hull facets, so it
# agrees with the oracle at arbitrary beliefs as well.
q = rng.dirichlet(np.ones(3), size=5)
for qi in q:
    print(np.round(qi, 3), f"{env3.evaluate(qi):+.6f}", f"{envelope_lp_oracle(part3.nodes, y3, qi):+.6f}")
