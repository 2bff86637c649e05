"""
The Thom form of a plane bundle
===============================

Build the explicit Thom form of the tangent bundle of the sphere, check that
it integrates to one on every fiber, and restrict it to the zero section.
"""

import numpy as np

from gbverify import curvature, euler_form, get_model, make_profile, thom_form
from gbverify.forms import add, evaluate_form, grid_points, integrate_top_form, scale
from gbverify.thom import closedness_residual, fiber_integral, frame_invariance_check, zero_section_restrict

# %%
# The radial profile: rho is a negative bump on (0, 1), gamma falls from 1 to 0.
profile = make_profile()
r = np.linspace(0, 1.2, 7)
print("r     :", r)
print("gamma :", np.round(profile.gamma(r), 6))
print("rho   :", np.round(profile.rho(r * r), 6))

# %%
conn = get_model("sphere_round").connection
u = thom_form(conn, profile)
print("total space chart:", u.chart.coords, u.chart.box)

for x in ([0.3, 1.0], [1.5, 4.0], [2.9, 0.1]):
    print("fiber integral over", x, "=", fiber_integral(u, x))

# %%
# du vanishes because gamma' = rho(r^2) r; finite differences confirm it.
print("sup |du| on a 12^4 grid:", closedness_residual(u, 12))

# %%
# Rotating the frame by any angle function gives the same form.
for th in ("0.7", "phi", "3*phi + sin(theta)"):
    print(f"frame rotation {th!r}: residual {frame_invariance_check(conn, profile, th):.2e}")

# %%
# On the zero section only c * d(omega) survives: the Euler form.
res = zero_section_restrict(u)
e = euler_form(curvature(conn))
pts = grid_points(res.chart, 10)
print("max |i*u - e|:", np.abs(evaluate_form(add(res, scale(e, -1.0)), pts)).max())
print("integral of i*u:", integrate_top_form(res, 256))
