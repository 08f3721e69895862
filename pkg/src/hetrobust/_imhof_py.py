"""Pure numpy version of the Imhof inner loop, used when the extension is absent."""

from __future__ import annotations

import numpy as np

_CHUNK_ELEMS = 2_000_000


def integrate_rows(lam, ncp, counts, t_lo, nsteps, h):
    lam = np.asarray(lam, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), (lam.shape[0],))
    ncp = np.asarray(ncp, dtype=float)
    m, p = lam.shape
    out = np.zeros(m)
    if m == 0:
        return out
    order = np.argsort(nsteps, kind="stable")
    start = 0
    while start < m:
        # group rows of similar grid length so padding stays small
        smax = int(nsteps[order[start]])
        stop = start + 1
        while stop < m:
            nxt = int(nsteps[order[stop]])
            if (stop - start + 1) * (nxt + 1) * p > _CHUNK_ELEMS:
                break
            smax = nxt
            stop += 1
        rows = order[start:stop]
        steps = np.arange(smax + 1)
        t = t_lo[rows, None] + h[rows, None] * steps[None, :]
        valid = steps[None, :] <= nsteps[rows, None]
        u = np.exp(t)
        lu = lam[rows, None, :] * u[:, :, None]
        lu2 = lu * lu
        c = ncp[rows, None, :]
        theta = np.sum(np.arctan(lu) + c * lu / (1.0 + lu2), axis=2)
        logrho = np.sum(0.5 * np.log1p(lu2) + c * lu2 / (1.0 + lu2), axis=2)
        f = np.sin(0.5 * theta) * np.exp(-0.5 * logrho)
        w = np.where(valid, 1.0, 0.0)
        w[:, 0] = 0.5
        last = nsteps[rows]
        w[np.arange(rows.size), last] = 0.5
        res = np.sum(w * f, axis=1)
        res[(last < 0) | (counts[rows] == 0)] = 0.0
        out[rows] = res
        start = stop
    return out
