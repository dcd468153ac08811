# %% [markdown]
# # Capacities of truncated chains
#
# Discretise a half-line kernel on log-spaced cells of [0, B]. The capacity of
# D = [0, 10] is the least Dirichlet form over test functions equal to 1 on D.
# Divided by the mass of D this is the average chance of escaping past B
# before coming back. It shrinks with B for recurrent chains and levels off for transient ones.

# %%
from eaton_lab import dirichlet, kernels
from eaton_lab.model import PriorParams

B_list = (30.0, 100.0, 300.0, 1000.0)
chains = {
    "Lebesgue image p=1": kernels.lebesgue_image_kernel(1, 1.0),
    "Lebesgue image p=3": kernels.lebesgue_image_kernel(3, 1.0),
    "weighted Eaton p=3": kernels.weighted_eaton_kernel(PriorParams(3, 1.0, 1.5)),
}
for name, k in chains.items():
    res = dirichlet.capacity_sequence(k, (0.0, 10.0), B_list, n_cells=128)
    print(f"{name:20s}", "  ".join(f"{r.normalized:.4f}" for r in res))

# %% [markdown]
# On a toy path graph the capacity is the series conductance.

# %%
import numpy as np

A = np.diag([2.0, 0.5, 3.0], 1)
A = A + A.T
ch = dirichlet.DiscretizedChain.from_flux(A, np.array([0, 0, 0, 1.5]))
print(dirichlet.capacity(ch, [0]).value, 1 / (1 / 2 + 1 / 0.5 + 1 / 3 + 1 / 1.5))
