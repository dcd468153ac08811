# %% [markdown]
# # Noncentral chi-squared building blocks
#
# The squared norm of a normal vector with mean theta follows a noncentral
# chi-squared law with noncentrality beta = ||theta||^2. Everything else in
# the package sits on top of its density, written either with a Bessel
# function or as a Poisson mixture.

# %%
import numpy as np
from scipy import stats

from eaton_lab import NcChiSq, bessel_ratio, ncchisq_pdf, tk_value
from eaton_lab.dist import ncchisq_pdf_series
from eaton_lab.model import PriorParams

d = NcChiSq(p=3, lam=7.0)
w = np.array([0.5, 5.0, 40.0, 160.0])
print("bessel form :", ncchisq_pdf(w, d))
print("series form :", ncchisq_pdf_series(w, d))
print("scipy       :", stats.ncx2.pdf(w, 3, 7.0))

# %% [markdown]
# The Bessel ratio I_{nu}/I_{nu-1} is evaluated without overflow even when
# both functions would overflow separately.

# %%
for kappa in (1e-3, 1.0, 50.0, 1e5):
    print(f"A_1.5({kappa:g}) = {bessel_ratio(1.5, kappa):.15f}")

# %% [markdown]
# t_k(y) is the k-th moment of a noncentral chi-squared variable tilted by
# the prior factor (1 + u)^(-3/2). The Poisson-mixture series and plain
# quadrature agree to round-off.

# %%
params = PriorParams(3, 1.0, 1.5)
for y in (1.0, 10.0, 100.0):
    print(y, [f"{tk_value(k, y, params):.10g}" for k in range(5)])
