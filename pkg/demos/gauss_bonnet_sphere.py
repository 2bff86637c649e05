"""
Gauss-Bonnet on the round sphere
================================

Integrate the Euler form of the tangent bundle of the unit sphere and watch
the midpoint rule converge to the Euler characteristic.
"""

import math

import numpy as np

from gbverify import curvature, euler_form, gauss_bonnet, get_model
from gbverify.forms import evaluate_form, integrate_top_form

# %%
# The frame is (d/dtheta, d/dphi / sin theta), so omega_12 = cos(theta) dphi.
model = get_model("sphere_round")
print(model.description)
print("omega_12 =", model.connection.entry(1, 2))

# %%
# Omega_12 = d omega_12 = -sin(theta) dtheta^dphi, and the Euler form is
# (-1/2pi) times that.
e = euler_form(curvature(model.connection))
thetas = np.linspace(0.1, 3.0, 5)
pts = np.stack([thetas, np.zeros_like(thetas)], axis=-1)
print("e / (sin(theta)/2pi) at a few points:", evaluate_form(e, pts)[:, 0] / (np.sin(thetas) / (2 * math.pi)))

# %%
# Midpoint quadrature is second order: each doubling cuts the error by four.
prev = None
for n in (16, 32, 64, 128, 256):
    err = abs(integrate_top_form(e, n) - 2.0)
    ratio = "" if prev is None else f"  ratio {prev / err:.2f}"
    print(f"n={n:4d}  error {err:.3e}{ratio}")
    prev = err

# %%
# The same numbers as a report.
print(gauss_bonnet(model).to_json())
