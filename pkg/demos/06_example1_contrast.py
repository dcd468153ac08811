# %% [markdown]
# # Lebesgue prior: recurrence in low dimension only
#
# Under the flat prior the weighted chain on R^p is a random walk whose step
# normaliser is 2p + d. Paths from the origin come back to the ball of radius
# sqrt(10) almost always for p = 1, and noticeably less often for p = 3.
# Finite horizons make this a diagnostic, not a proof.

# %%
import numpy as np

from eaton_lab import kernels, recurrence

for p, d in ((1, 1.0), (2, 1.0), (3, 2.0)):
    mean, se = kernels.fullspace_normalizer_mc(p, d, 1_000_000, seed=1)
    print(f"p={p} d={d}: normaliser {mean:.4f} +- {se:.4f} (exact {2 * p + d})")

for p in (1, 2, 3):
    conf = recurrence.ChainConfig(7, 1000, 100_000, np.zeros(p), recurrence.TargetSet.ball(np.sqrt(10)))
    st = recurrence.simulate_chain(kernels.fullspace_T_kernel(p, 1.0), conf)
    print(f"p={p}: returned {st.return_fraction:.3f}, censored {st.censored}")
