# %% [markdown]
# # Drift criterion for the weighted chain
#
# The recurrence argument needs the centred one-step moments m_k(alpha) of the
# weighted kernel. Two things are checked on a log grid up to 1e6: the ratio
# m_3/m_2 stays bounded, and the first moment stays below
# m_2/(2 alpha) (1 + 1/sqrt(alpha)) from some n0 on.

# %%
from eaton_lab import kernels, recurrence
from eaton_lab.model import PriorParams

params = PriorParams(3, 1.0, 1.5)
rep = recurrence.drift_check(kernels.weighted_eaton_kernel(params), sup_ns=(1, 10, 20))
for row in list(rep.rows())[::6]:
    print({k: round(float(v), 6) for k, v in row.items()})
print("n0 alpha:", rep.n0_alpha)
print("m3/m2 bounded:", rep.ratio_bounded(), " cond1 decreasing:", rep.cond1_decreasing())
print("sup check:", rep.sup_check)

# %% [markdown]
# The same check on the image of the transient p = 3 Lebesgue walk finds no n0.

# %%
import numpy as np

img = recurrence.drift_check(kernels.lebesgue_image_kernel(3, 1.0), np.geomspace(1, 1e5, 25))
print("Lebesgue p=3 n0:", img.n0)
