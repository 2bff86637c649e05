"""
Connection independence, products and pullbacks
===============================================

Perturb the connection, take a product, pull back along a degree-2 map.
"""

import numpy as np

from gbverify import curvature, euler_form, gauss_bonnet, get_model
from gbverify.bundles import perturb_connection
from gbverify.euler import random_global_one_form
from gbverify.forms import add, evaluate_form, grid_points, integrate_top_form, scale

rng = np.random.default_rng(0)
sphere = get_model("sphere_round")
e0 = euler_form(curvature(sphere.connection))
pts = grid_points(sphere.base, 8)

# %%
# A random global 1-form tau changes the curvature pointwise...
for eps in (0.1, 0.3, 1.0):
    tau = random_global_one_form(sphere.base, rng)
    e1 = euler_form(curvature(perturb_connection(sphere.connection, tau, eps)))
    moved = np.abs(evaluate_form(add(e1, scale(e0, -1.0)), pts)).max()
    # ...but not the integral
    print(f"eps={eps}: pointwise change {moved:.3f}, integral {integrate_top_form(e1, 256):.8f}")

# %%
# Whitney product: TS^2 + TS^2 over S^2 x S^2 has chi = 4.
print(gauss_bonnet(get_model("product_s2xs2")).to_json())

# %%
# Pulling back along (theta, phi) -> (theta, 2 phi) doubles the integral.
print(gauss_bonnet(get_model("sphere_degree2_pullback")).to_json())

# %%
# The monopole family: chi = -n for omega_12 = (n/2)(1 - cos theta) dphi.
for n in range(-3, 4):
    rep = gauss_bonnet(get_model(f"monopole({n})"), 128)
    print(f"n={n:+d}: {rep.computed:+.5f}")
