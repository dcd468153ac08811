# %% [markdown]
# # Formal posterior and risk
#
# With the improper prior (1 + ||theta||^2)^(-3/2) on R^3 the formal posterior
# of beta given w = ||x||^2 is proper. Its mean tracks w - p up to a bounded
# error, and the resulting estimator of theta shrinks towards the origin.

# %%
import numpy as np

from eaton_lab import model
from eaton_lab.model import PriorParams

params = PriorParams(3, 1.0, 1.5)
for w in (0.0, 10.0, 100.0, 1e3, 1e4):
    m = model.posterior_moment(w, 1, params)
    print(f"w={w:>8g}  E[beta|w]={m:.8f}  minus (w - p): {m - (w - 3):+.6f}")

# %% [markdown]
# Sampling from the posterior goes through a cached inverse-CDF table.

# %%
rng = np.random.default_rng(0)
draws = model.posterior_sample(10.0, params, rng, size=50_000)
print("MC mean", draws.mean(), "exact", model.posterior_moment(10.0, 1, params))

# %% [markdown]
# Quadratic risk by Monte Carlo for each estimator.

# %%
fb = model.FormalBayesEstimator(params)
for norm in (0.0, 2.0, 5.0):
    theta = np.array([norm, 0.0, 0.0])
    row = []
    for name, est in (("mle", model.mle), ("js", model.james_stein), ("fb", fb)):
        r, se = model.mc_risk(est, theta, 20_000, np.random.default_rng(1))
        row.append(f"{name} {r:.3f}+-{se:.3f}")
    print(f"|theta|={norm}: " + ", ".join(row))
