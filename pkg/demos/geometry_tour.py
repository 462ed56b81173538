"""A tour of the geometric layer: group algebra, geodesics, surfaces, charts.

Run as: python demos/geometry_tour.py
"""

import numpy as np

from hheat.catalog import cylinder, koranyi_ball
from hheat.chart import (
    boundary_graph_h,
    chart_from_boundary,
    h_expansion,
    phi,
    phi_inverse,
    phi_jacobian_det,
    tube_jacobian,
)
from hheat.group import (
    GeodesicParams,
    cc_distance,
    cc_geodesic,
    group_inv,
    group_mul,
    koranyi_norm,
)
from hheat.surface import (
    build_quadrature,
    characteristic_scan,
    g1_normal,
    horizontal_mean_curvature,
    horizontal_perimeter,
    total_mean_curvature,
    volume,
)

rng = np.random.default_rng(0)

# ---------------------------------------------------------------------------
# The group: a noncommutative product on R^3 whose vertical coordinate picks
# up the signed area swept by the planar components.

p = np.array([1.0, 0.0, 0.0])
q = np.array([0.0, 1.0, 0.0])
print("p * q =", group_mul(p, q))
print("q * p =", group_mul(q, p))
print("p * p^-1 =", group_mul(p, group_inv(p)))
print("Koranyi norm of (1, 0, 0):", koranyi_norm(p))
print("Koranyi norm of (0, 0, 1):", koranyi_norm(np.array([0.0, 0.0, 1.0])))

# ---------------------------------------------------------------------------
# Geodesics: planar projections are circular arcs of curvature lam (straight
# lines for lam = 0); the distance solver inverts the arc geometry.

g = GeodesicParams(base=np.zeros(3), theta=0.3, lam=1.0)
for t in (0.5, 1.0, 2.0):
    x = cc_geodesic(g, t)
    print(f"geodesic t={t}: point {np.round(x, 4)}, "
          f"distance back {cc_distance(g.base, x):.6f}")

# purely vertical displacement: the distance scales like sqrt of the height
for hgt in (0.5, 2.0):
    d = cc_distance([0, 0, 0], [0, 0, hgt])
    print(f"vertical height {hgt}: d = {d:.6f}, sqrt(2 pi h) = {np.sqrt(2 * np.pi * hgt):.6f}")

# ---------------------------------------------------------------------------
# Implicit surfaces: the cylinder is the model noncharacteristic boundary;
# its horizontal perimeter and total curvature are both 2 pi per period.

dom = cylinder(1.0)
quad = build_quadrature(dom, level=1)
print("\ncylinder R=1 (one z-period):")
print("  volume           ", volume(dom))
print("  sigma0           ", horizontal_perimeter(dom, quad))
print("  int H dsigma0    ", total_mean_curvature(dom, quad))
sp = g1_normal(dom, np.array([1.0, 0.0, 0.3]))
print("  H at a point     ", horizontal_mean_curvature(dom, sp))

# the Koranyi ball has two characteristic poles; the scan flags them
kb = koranyi_ball(1.0)
flagged, min_nh = characteristic_scan(kb, build_quadrature(kb, level=1))
print(f"Koranyi ball: {len(flagged)} flagged nodes, min |n_h| = {min_nh:.4f}")

# ---------------------------------------------------------------------------
# Boundary charts: the exponential chart maps (xi, y, z) to the group, with a
# closed-form Jacobian, and the boundary becomes a graph xi = r - h(y, z).

r = 0.25
ch = chart_from_boundary(dom, sp, r)
print(f"\nchart at {np.round(sp.p, 3)}, depth r = {r}:")
print("  base point       ", np.round(ch.base, 4))
print("  phi(r,0,0) back on the boundary:", np.round(phi(ch, np.array([r, 0, 0])), 4))
c = np.array([0.1, -0.05, 0.02])
print("  round trip error ", np.max(np.abs(phi_inverse(ch, phi(ch, c)) - c)))
print("  Jacobian at lam*y=2:", phi_jacobian_det(1.0, 1.0),
      "(closed form e^2 (e^2 - 1)/2 =", np.exp(2) * (np.exp(2) - 1) / 2, ")")

for y in (0.05, 0.1, 0.2):
    print(f"  h({y}, 0) = {boundary_graph_h(dom, ch, y, 0.0):.6f}"
          f"   exact 1 - sqrt(1 - y^2) = {1 - np.sqrt(1 - y * y):.6f}")

half_H, k1, bound = h_expansion(dom, ch)
print(f"  quadratic data: half_H = {half_H:.6f} (H/2 = 0.5), k1 = {k1:.2e}")

# the tube Jacobian of the cylinder is the annulus ratio 1 - r
for rr in (0.1, 0.3, 0.5):
    print(f"  tube Jacobian at r={rr}: {tube_jacobian(dom, sp, rr):.8f} (exact {1 - rr})")
