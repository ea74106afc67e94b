"""Pure-numpy version of the relaxation kernel.

Nodes of one color only see nodes of the other color (or fixed boundary
nodes), so a whole color class can be updated at once; the result matches the
sequential sweep up to the summation order of the per-sweep decrease.
"""

import numpy as np


def relax(u, nbr, w, order, n_first, energy, tol, max_sweeps, history):
    blocks = []
    for idx in (order[:n_first], order[n_first:]):
        blocks.append((idx, nbr[idx], w[idx]))
    done = 0
    for s in range(max_sweeps):
        dec = 0.0
        for idx, nb, wk in blocks:
            acc = wk[:, 0, None] * u[nb[:, 0]]
            for k in range(1, 6):
                acc += wk[:, k, None] * u[nb[:, k]]
            norm = np.sqrt(acc[:, 0] * acc[:, 0] + acc[:, 1] * acc[:, 1] + acc[:, 2] * acc[:, 2])
            ok = norm > 0.0
            d = 2.0 * (norm - np.einsum("ij,ij->i", u[idx], acc))
            dec += float(np.sum(np.where(ok & (d > 0.0), d, 0.0)))
            u[idx[ok]] = acc[ok] / norm[ok, None]
        energy = max(energy - dec, 0.0)
        history[s] = energy
        done = s + 1
        if dec <= tol * energy:
            break
    return done
