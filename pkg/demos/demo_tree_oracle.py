#!/usr/bin/env python3
"""Walk through the exact lattice solver.

The binary lattice with +-sqrt(dt) increments makes the one-step martingale
decomposition exact, so the discrete equation holds pathwise to round-off:
the solver is an oracle, not an approximation of itself.  This script solves
a few problems with known closed forms and prints the residuals.
"""

import numpy as np

import bdsde_lab as bl

grid = bl.make_grid(1.0, 8)
print(f"grid: T={grid.horizon}, N={grid.steps}, dt={grid.dt}")

print("\n--- martingale case: zero driver, terminal W_T ---")
driver = bl.builtin_driver("zero")
terminal = bl.builtin_terminal("w_terminal")
sol = bl.solve_tree(driver, terminal, grid)
print(f"Y_0 = {sol.ys[0][0, 0]}        (the mean of W_T: 0)")
print(f"Z_0 = {sol.zs[0][0, 0]}        (the representation integrand: 1)")
print(f"residual = {bl.tree_residual(sol, driver, terminal):.3e}")

print("\n--- backward-noise integral: f = 0, g = 1, xi = 0 ---")
driver = bl.driver_pair("zero", [], "g_constant", [1.0])
terminal = bl.builtin_terminal("constant", [0.0])
sol = bl.solve_tree(driver, terminal, grid)
stats = bl.expectation_at(sol, 0)
print(f"Y_0 is the full backward-noise sum; its mean square is the horizon:")
print(f"  mean = {stats['mean']:.3e}, mean square = {stats['mean_square']}")

print("\n--- compounding drift: f(y) = y, xi = 1, N = 4 ---")
grid4 = bl.make_grid(1.0, 4)
sol = bl.solve_tree(bl.driver_pair("f_linear", [1.0, 0.0]),
                    bl.builtin_terminal("constant", [1.0]), grid4)
print(f"Y_0 = {sol.ys[0][0, 0]}  (= 1.25^4 exactly; e in the limit)")

print("\n--- a nonsmooth problem, residual still at round-off ---")
driver = bl.driver_pair("f_sqrt_pos", [2.0], "g_sine", [0.5, 0.3])
terminal = bl.builtin_terminal("call", [0.2])
sol = bl.solve_tree(driver, terminal, grid)
res = bl.tree_residual(sol, driver, terminal)
print(f"driver: {driver.descriptor}")
print(f"residual = {res:.3e}  (bound 1e-10 (1 + max|Y|) = "
      f"{1e-10 * (1 + sol.max_abs_y()):.3e})")

print("\n--- forward segment with swapped noise roles ---")
driver = bl.driver_pair("zero", [], "g_constant", [0.8])
eta = np.zeros((4, 4))
segment = bl.solve_forward_swapped(driver, lambda t, y, zt: 0.0 * zt,
                                   eta, grid4, i0=2)
print("starting from zero at step 2, the field develops -g dB per step;")
print(f"identity-replay residual = {segment.residual:.3e}")
dep = segment.dependence
print(f"max sensitivity to forward-noise coords: {dep[:, 0, :].max():.3e}")
print(f"max sensitivity to backward-noise coords: {dep[:, 1, :].max():.3e}")
print("(the second is genuine: the segment sees backward increments inside")
print(" its own window, which the per-coordinate diagnostic makes visible)")
