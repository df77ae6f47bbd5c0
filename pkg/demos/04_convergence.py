"""
Experimental order of convergence
=================================

Vary one of the three meshes (state, belief, time) with the others fixed and
measure the error against a finer reference solution. The reduced plan below
finishes in seconds; pass ``--full`` to run the large one.
"""

#%%
import sys
import time

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from vexgame.config import ExperimentConfig
from vexgame.convergence import FULL_PLAN, REDUCED_PLAN, run_studies

plan = FULL_PLAN if "--full" in sys.argv else REDUCED_PLAN
factory = ExperimentConfig.from_dict({}).factory()

#%%
# Running the studies
# -------------------
# References are cached under ./refs by a hash of every parameter, so a
# second run only solves the coarse problems.
t0 = time.perf_counter()
tables = run_studies(factory, plan, cache_dir="refs")
print(f"finished in {time.perf_counter() - t0:.1f}s\n")
for tab in tables.values():
    print(tab, "\n")

#%%
# Log-log view
# ------------
fig, ax = plt.subplots(figsize=(5, 4))
for name, tab in tables.items():
    ax.loglog(tab.mesh, tab.error, "o-", label=f"{name} (EOC {tab.mean_eoc:.2f})")
ax.set_xlabel("mesh size")
ax.set_ylabel("max error")
ax.legend()
fig.tight_layout()
fig.savefig("convergence.png", dpi=120)
