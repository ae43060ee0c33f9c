"""Independent reference implementations used only by the tests.

Everything here is written with plain loops or textbook algorithms and shares
no code with the package, so agreement is evidence of correctness.
"""

from __future__ import annotations

import math

import numpy as np


def mi_xz_loops(q, p_x) -> float:
    nx, nz = len(q), len(q[0])
    p_z = [sum(p_x[x] * q[x][z] for x in range(nx)) for z in range(nz)]
    total = 0.0
    for x in range(nx):
        for z in range(nz):
            if q[x][z] > 0:
                total += p_x[x] * q[x][z] * math.log(q[x][z] / p_z[z])
    return total


def mi_zy_loops(q, p_xy) -> float:
    nx, nz, ny = len(q), len(q[0]), len(p_xy[0])
    p_zy = [[sum(p_xy[x][y] * q[x][z] for x in range(nx)) for y in range(ny)] for z in range(nz)]
    p_z = [sum(row) for row in p_zy]
    p_y = [sum(p_xy[x][y] for x in range(nx)) for y in range(ny)]
    total = 0.0
    for z in range(nz):
        for y in range(ny):
            if p_zy[z][y] > 0:
                total += p_zy[z][y] * math.log(p_zy[z][y] / (p_z[z] * p_y[y]))
    return total


def mi_xy_loops(p_xy) -> float:
    nx, ny = len(p_xy), len(p_xy[0])
    p_x = [sum(p_xy[x]) for x in range(nx)]
    p_y = [sum(p_xy[x][y] for x in range(nx)) for y in range(ny)]
    return sum(p_xy[x][y] * math.log(p_xy[x][y] / (p_x[x] * p_y[y]))
               for x in range(nx) for y in range(ny) if p_xy[x][y] > 0)


def cond_entropy_loops(q, p_x) -> float:
    return -sum(p_x[x] * q[x][z] * math.log(q[x][z])
                for x in range(len(q)) for z in range(len(q[0])) if q[x][z] > 0)


def fd_gradient(f, point: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function of an array, entry by entry."""
    point = np.asarray(point, dtype=float)
    grad = np.zeros_like(point)
    for idx in np.ndindex(point.shape):
        up, dn = point.copy(), point.copy()
        up[idx] += h
        dn[idx] -= h
        grad[idx] = (f(up) - f(dn)) / (2 * h)
    return grad


def second_difference_hessian(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Hessian from second differences of a scalar function only."""
    x = np.asarray(x, dtype=float)
    n = x.size
    hess = np.zeros((n, n))
    f0 = f(x)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h
        hess[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h**2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h
            val = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h**2)
            hess[i, j] = hess[j, i] = val
    return hess


def jacobi_eigenvalues(a, tol: float = 1e-14, max_sweeps: int = 100) -> np.ndarray:
    """Cyclic Jacobi rotations on a symmetric matrix; returns sorted eigenvalues."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol * max(1.0, math.sqrt(sum(a[i, i] ** 2 for i in range(n)))):
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                if abs(a[p, r]) < 1e-300:
                    continue
                theta = (a[r, r] - a[p, p]) / (2 * a[p, r])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                for k in range(n):
                    akp, akr = a[k, p], a[k, r]
                    a[k, p] = c * akp - s * akr
                    a[k, r] = s * akp + c * akr
                for k in range(n):
                    apk, ark = a[p, k], a[r, k]
                    a[p, k] = c * apk - s * ark
                    a[r, k] = s * apk + c * ark
    return np.sort(np.diag(a))


def step_kl_loops(snapshots, p_x) -> list[float]:
    out = []
    for t in range(1, len(snapshots)):
        cur, prev = snapshots[t], snapshots[t - 1]
        total = 0.0
        for x in range(len(cur)):
            row = 0.0
            for z in range(len(cur[0])):
                if cur[x][z] > 0:
                    row += cur[x][z] * math.log(cur[x][z] / prev[x][z])
            total += p_x[x] * row
        out.append(total)
    return out


def random_encoder(rng: np.random.Generator, x_size: int, z_size: int, floor: float = 1e-3) -> np.ndarray:
    q = rng.dirichlet(np.ones(z_size), size=x_size) + floor
    return q / q.sum(axis=1, keepdims=True)
