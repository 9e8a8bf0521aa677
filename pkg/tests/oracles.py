"""Independent reference implementations shared by the test modules."""

import numpy as np


def textbook_kf_update(x, p, z, h, r):
    """Plain gain-form Kalman update."""
    s = h @ p @ h.T + r
    k = p @ h.T @ np.linalg.inv(s)
    x_new = x + k @ (z - h @ x)
    p_new = (np.eye(len(x)) - k @ h) @ p
    return x_new, p_new


def dbscan_reachability_oracle(x, eps, min_pts):
    """O(n^3) density-reachability closure over the core-point graph."""
    n = len(x)
    d2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    neighbor = d2 <= eps**2
    core = neighbor.sum(axis=1) >= min_pts
    adj = neighbor & core[:, None] & core[None, :]
    reach = adj | np.eye(n, dtype=bool)
    while True:
        new = reach | ((reach.astype(np.uint8) @ reach.astype(np.uint8)) > 0)
        if np.array_equal(new, reach):
            break
        reach = new
    core_label = np.full(n, -1)
    cluster = 0
    for i in range(n):
        if core[i] and core_label[i] == -1:
            core_label[reach[i] & core] = cluster
            cluster += 1
    return core, core_label, neighbor


def assert_dbscan_matches_oracle(dbscan_fn, x, eps, min_pts):
    labels = dbscan_fn(x, eps, min_pts)
    core, core_label, neighbor = dbscan_reachability_oracle(x, eps, min_pts)
    mapping = {}
    for i in np.flatnonzero(core):
        key = labels[i]
        assert key >= 0, "core point labeled noise"
        if key in mapping:
            assert mapping[key] == core_label[i], "core partition differs"
        else:
            mapping[key] = core_label[i]
    assert len(set(mapping.values())) == len(mapping), "clusters merged"
    for i in range(len(x)):
        if core[i]:
            continue
        core_neighbors = np.flatnonzero(neighbor[i] & core)
        if len(core_neighbors) == 0:
            assert labels[i] == -1, "noise point got a label"
        else:
            allowed = {int(core_label[j]) for j in core_neighbors}
            assert labels[i] in allowed, "border point joined a far cluster"


def finite_horizon_lqr_gain(a, b, q, r, horizon):
    """Backward Riccati recursion; first-step feedback gain."""
    p = q.copy()
    for _ in range(horizon):
        k = np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)
        p = q + a.T @ p @ (a - b @ k)
    return k


def dp_speed_oracle(line, v_cap, a_lat, a_acc, a_brk, grid=0.1):
    """All-pairs bound composition over grid-quantized source speeds.

    Independent of the implementation's sweep structure: the braking bound at
    i is the min over every sample j ahead of the exact closed-form chained
    limit, and the acceleration bound composes from the braking-tight profile.
    """
    kappa = np.abs(line.curvature)
    v_lim = np.minimum(v_cap, np.where(kappa > 1e-9,
                                       np.sqrt(a_lat / np.maximum(kappa, 1e-9)),
                                       np.inf))
    v_lim = np.floor(v_lim / grid) * grid
    s = line.s
    if line.closed:
        d_fwd = (s[None, :] - s[:, None]) % line.length  # distance i -> j
    else:
        d_fwd = s[None, :] - s[:, None]
        d_fwd[d_fwd < 0] = np.inf
    u = np.min(np.sqrt(v_lim[None, :] ** 2 + 2 * a_brk * d_fwd), axis=1)
    d_bwd = d_fwd.T  # distance j -> i
    return np.min(np.sqrt(u[None, :] ** 2 + 2 * a_acc * d_bwd), axis=1)
