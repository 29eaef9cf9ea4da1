"""Minimizing movement for a gradient flow in two dimensions.

Each step minimizes U(y) + |y - y_k|_A^2 / (2 tau) for a tilted double-well
potential U and a non-diagonal metric A.  The value of U never increases along
the iterates, whatever the step size.  For a quadratic U the step reduces to
the linear solve (A / tau + H) y = A y_k / tau, checked at the end.
"""

from __future__ import annotations

import numpy as np

from onsagerflow import ode_minimizing_movement

A = np.array([[2.0, 0.5], [0.5, 1.0]])


def U(y):
    return 0.25 * (y[0] ** 2 - 1) ** 2 + 0.5 * y[1] ** 2 + 0.3 * y[0] * y[1]


def grad_U(y):
    return np.array([y[0] ** 3 - y[0] + 0.3 * y[1], y[1] + 0.3 * y[0]])


for tau in (0.05, 0.5, 5.0):
    y = np.array([0.05, 1.0])
    values = [U(y)]
    for _ in range(40):
        y = ode_minimizing_movement(A, U, grad_U, y, tau)
        values.append(U(y))
    monotone = all(b <= a + 1e-14 for a, b in zip(values, values[1:]))
    print(f"tau={tau:<5} y_40 = ({y[0]: .6f}, {y[1]: .6f})  U: {values[0]:.4f} -> {values[-1]:.6f}  monotone={monotone}")

H = np.array([[3.0, 1.0], [1.0, 2.0]])
yk, tau = np.array([1.0, -1.0]), 0.3
y = ode_minimizing_movement(A, lambda y: 0.5 * y @ H @ y, lambda y: H @ y, yk, tau, hessian=lambda y: H)
print("quadratic check:", np.max(np.abs(y - np.linalg.solve(A / tau + H, A @ yk / tau))))
