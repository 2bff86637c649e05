"""
Curved but Euler characteristic zero
====================================

The torus of revolution has positive curvature on the outside and negative
curvature on the inside. The integral cancels.
"""

import numpy as np

from gbverify import curvature, euler_form, get_model
from gbverify.forms import evaluate_form, grid_points, integrate_top_form

model = get_model("torus_revolution")
e = euler_form(curvature(model.connection))

# %%
# Pointwise the Euler form is cos(u)/(2 pi) du^dv.
pts = grid_points(model.base, 8)
vals = evaluate_form(e, pts)[..., 0]
print("min / max coefficient:", vals.min(), vals.max())

# %%
# Outer half (|u| < pi/2) against inner half.
u = pts[..., 0]
outer = (u < np.pi / 2) | (u > 3 * np.pi / 2)
print("outer sample mass:", vals[outer].sum(), " inner sample mass:", vals[~outer].sum())

print("integral at 256^2:", integrate_top_form(e, 256))
