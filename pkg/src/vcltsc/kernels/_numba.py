"""numba-compiled kernels.  Signatures mirror :mod:`vcltsc.kernels._numpy`."""

import numpy as np
from numba import njit


@njit(cache=True)
def follow_step(lane, pos, speed, length, lane_len, lane_mode,
                vmax, accel, decel, min_gap, tau, dt):
    n = lane.shape[0]
    new_v = np.empty(n)
    new_x = np.empty(n)
    for i in range(n):
        ln = lane[i]
        x = pos[i]
        v = speed[i]
        v_cap = min(v + accel * dt, vmax)
        has_leader = False
        g = 0.0
        vl = 0.0
        if i == 0 or lane[i - 1] != ln:
            mode = lane_mode[ln]
            dist = lane_len[ln] - x
            if mode == 2 or (mode == 1 and v * v / (2.0 * decel) <= dist + 1e-9):
                has_leader = True
                g = dist
        else:
            has_leader = True
            g = new_x[i - 1] - length[i - 1] - min_gap - x
            vl = new_v[i - 1]
        if has_leader:
            if g < 0.0:
                g = 0.0
            vs = vl + (g - vl * tau) / ((v + vl) / (2.0 * decel) + tau)
            vn = min(v_cap, vs)
            if vl < 0.1 and v <= decel * dt and g <= decel * dt * dt and vn < g / dt:
                vn = min(g / dt, v_cap)
            vn = min(vn, g / dt)
            if vn < 0.0:
                vn = 0.0
        else:
            vn = v_cap
        new_v[i] = vn
        new_x[i] = x + vn * dt
    return new_v, new_x


@njit(cache=True)
def encode_cells(lane, dist_front, speed, length, boundaries, n_lanes):
    n_cells = boundaries.shape[0] - 1
    count = np.zeros((n_lanes, n_cells))
    speed_sum = np.zeros((n_lanes, n_cells))
    occ_len = np.zeros((n_lanes, n_cells))
    d = boundaries[n_cells]
    for i in range(lane.shape[0]):
        f = dist_front[i]
        if f >= d or f < 0.0:
            continue
        ln = lane[i]
        c = np.searchsorted(boundaries, f, side="right") - 1
        count[ln, c] += 1.0
        speed_sum[ln, c] += speed[i]
        rear = f + length[i]
        while c < n_cells and boundaries[c] < rear:
            lo = max(boundaries[c], f)
            hi = min(boundaries[c + 1], rear)
            if hi > lo:
                occ_len[ln, c] += hi - lo
            c += 1
    return count, speed_sum, occ_len
