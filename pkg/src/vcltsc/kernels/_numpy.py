"""Pure-numpy kernels.

``follow_step`` is sequential inside a lane (each follower reacts to its
leader's *updated* state), so instead of looping over vehicles it loops over
queue rank and vectorises across lanes.
"""

import numpy as np


def follow_step(lane, pos, speed, length, lane_len, lane_mode,
                vmax, accel, decel, min_gap, tau, dt):
    """Advance one car-following step for vehicles sorted by (lane, -pos).

    Returns ``(new_speed, new_pos)`` in the same order as the inputs.
    """
    n = lane.shape[0]
    new_v = np.empty(n)
    new_x = np.empty(n)
    if n == 0:
        return new_v, new_x
    first = np.ones(n, dtype=bool)
    first[1:] = lane[1:] != lane[:-1]
    start = np.maximum.accumulate(np.where(first, np.arange(n), 0))
    rank = np.arange(n) - start
    v_cap = np.minimum(speed + accel * dt, vmax)

    for r in range(int(rank.max()) + 1):
        idx = np.flatnonzero(rank == r)
        x = pos[idx]
        v = speed[idx]
        if r == 0:
            ln = lane[idx]
            mode = lane_mode[ln]
            dist = lane_len[ln] - x
            has_leader = (mode == 2) | ((mode == 1) & (v * v / (2.0 * decel) <= dist + 1e-9))
            g = dist
            vl = np.zeros_like(x)
        else:
            lead = idx - 1
            has_leader = np.ones(idx.shape[0], dtype=bool)
            g = new_x[lead] - length[lead] - min_gap - x
            vl = new_v[lead]
        g = np.maximum(g, 0.0)
        vs = vl + (g - vl * tau) / ((v + vl) / (2.0 * decel) + tau)
        vn = np.minimum(v_cap[idx], vs)
        creep = (vl < 0.1) & (v <= decel * dt) & (g <= decel * dt * dt) & (vn < g / dt)
        vn = np.where(creep, np.minimum(g / dt, v_cap[idx]), vn)
        vn = np.maximum(np.minimum(vn, g / dt), 0.0)
        vn = np.where(has_leader, vn, v_cap[idx])
        new_v[idx] = vn
        new_x[idx] = x + vn * dt
    return new_v, new_x


def encode_cells(lane, dist_front, speed, length, boundaries, n_lanes):
    """Per (lane, cell) vehicle count, speed sum and overlapped vehicle length.

    Count and speed use the front bumper's cell; the overlap sum apportions
    each vehicle's body ``[front, front + length)`` across the cells it spans.
    """
    n_cells = boundaries.shape[0] - 1
    count = np.zeros((n_lanes, n_cells))
    speed_sum = np.zeros((n_lanes, n_cells))
    occ_len = np.zeros((n_lanes, n_cells))
    keep = (dist_front >= 0.0) & (dist_front < boundaries[-1])
    if not keep.any():
        return count, speed_sum, occ_len
    ln = lane[keep]
    f = dist_front[keep]
    rear = f + length[keep]
    c = np.searchsorted(boundaries, f, side="right") - 1
    np.add.at(count, (ln, c), 1.0)
    np.add.at(speed_sum, (ln, c), speed[keep])
    lo = np.maximum(boundaries[None, :-1], f[:, None])
    hi = np.minimum(boundaries[None, 1:], rear[:, None])
    np.add.at(occ_len, ln, np.maximum(hi - lo, 0.0))
    return count, speed_sum, occ_len
