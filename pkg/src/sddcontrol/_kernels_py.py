"""Pure numpy versions of the compiled sweeps in ``_kernels.pyx``.

Vectorised over paths, sequential in time; same operation order as the
compiled code.
"""


def affine_sdde_sweep(X, u, dW, dt, m, a0, a1, a2, a3, b0, b1, b2, b3, p0, p1):
    X = X[p0:p1]
    u = u[p0:p1]
    dW = dW[p0:p1]
    for i in range(dW.shape[1]):
        j = i + m
        x = X[:, j]
        xd = X[:, j - m]
        uu = u[:, i]
        drift = a0 + a1 * x + a2 * xd + a3 * uu
        diff = b0 + b1 * x + b2 * xd + b3 * uu
        X[:, j + 1] = x + drift * dt + diff * dW[:, i]


def linear_sweep(y, a, adv, c, e, g, dW, dt, p0, p1):
    y = y[p0:p1]
    a, adv, c, e, g, dW = (arr[p0:p1] for arr in (a, adv, c, e, g, dW))
    for i in range(dW.shape[1]):
        yi = y[:, i]
        y[:, i + 1] = (yi + (a[:, i] * yi + adv[:, i] + c[:, i]) * dt
                       + (e[:, i] * yi + g[:, i]) * dW[:, i])
