"""Numba kernels for the hot loops: world stepping, visibility, rollouts.

Everything here operates on flat numpy arrays so the planner can run
hundreds of thousands of world steps per second. The friendly dataclass
API lives in physics.py / perception.py; those modules are the only
intended callers.

Array conventions (N entities, world units):
    pos (N,2) f8, vel (N,2) f8, ang (N,) f8, avel (N,) f8
    grab (N,) i8      -- index of the object held by agent i, -1 if none
    grab_off (N,2) f8 -- world-frame offset object_pos - agent_pos at grab time
    radius/mass/maxf (N,) f8, kind (N,) u1 (0=agent, 1=object)
    walls (W,4) f8    -- segments x1,y1,x2,y2; outer box included
    P (,) f8          -- physics parameter vector, indices below
"""

from __future__ import annotations

import numpy as np
from numba import njit

# action codes
A_NOFORCE = 0
A_STOP = 1
A_FORCE0 = 2  # codes 2..9 are the 8 compass directions, E counterclockwise
A_TURN_LEFT = 10
A_TURN_RIGHT = 11
A_GRAB = 12
A_RELEASE = 13
N_ACTIONS = 14

# P vector indices
P_DT = 0
P_SUBSTEPS = 1
P_LIN_DAMP = 2
P_ANG_DAMP = 3
P_MU_S = 4
P_MU_K = 5
P_TURN_RATE = 6
P_GRAB_RADIUS = 7
P_GRAB_ARC = 8
P_SPEED_CAP = 9
P_PEN_TOL = 10
P_SOLVER_ITERS = 11
P_TOUCH_EPS = 12
P_FOV_HALF = 13
P_ARENA_W = 14
P_ARENA_H = 15
P_CORR_SLOP = 16
P_CORR_FRAC = 17
P_STATIC_EPS = 18
P_AUTO_FACE = 19
P_LEN = 20

DIR8 = np.zeros((8, 2), dtype=np.float64)
for _k in range(8):
    DIR8[_k, 0] = np.cos(_k * np.pi / 4.0)
    DIR8[_k, 1] = np.sin(_k * np.pi / 4.0)

# subgoal encodings for rollout rewards
SG_CLOSE = 0
SG_ON = 1
SG_ATTACH = 2
SG_TOUCH = 3
# sg vector: [type, negated, subj, targ_is_landmark, targ, bx0, by0, bx1, by1,
#             thr, dock_x, dock_y, dock_valid]
# dock: the eventual carry destination; approach/grab happens on the object's
# far side from it so the welded group can advance toward the destination.
SG_LEN = 13
SG_DOCK_X = 10
SG_DOCK_Y = 11
SG_DOCK_VALID = 12

TWO_PI = 2.0 * np.pi


@njit(cache=True)
def wrap_angle(a):
    """Wrap to [0, 2pi)."""
    a = a % TWO_PI
    if a < 0.0:
        a += TWO_PI
    return a


@njit(cache=True)
def ang_diff(a, b):
    """Signed smallest difference a-b in (-pi, pi]."""
    d = (a - b) % TWO_PI
    if d > np.pi:
        d -= TWO_PI
    return d


@njit(cache=True)
def xs_next(state):
    """xorshift128+ step; state is uint64[2]. Returns a uint64."""
    s1 = state[0]
    s0 = state[1]
    state[0] = s0
    s1 ^= s1 << np.uint64(23)
    s1 &= np.uint64(0xFFFFFFFFFFFFFFFF)
    state[1] = s1 ^ s0 ^ (s1 >> np.uint64(17)) ^ (s0 >> np.uint64(26))
    return (state[1] + s0) & np.uint64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True)
def xs_uniform(state):
    return float(xs_next(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def seg_point_dist2(x1, y1, x2, y2, px, py):
    wx = x2 - x1
    wy = y2 - y1
    l2 = wx * wx + wy * wy
    if l2 < 1e-18:
        dx = px - x1
        dy = py - y1
        return dx * dx + dy * dy, x1, y1
    t = ((px - x1) * wx + (py - y1) * wy) / l2
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    cx = x1 + t * wx
    cy = y1 + t * wy
    dx = px - cx
    dy = py - cy
    return dx * dx + dy * dy, cx, cy


@njit(cache=True)
def segments_cross(ax, ay, bx, by, cx, cy, dx, dy):
    """Proper/improper intersection test between segments AB and CD."""
    d1x = bx - ax
    d1y = by - ay
    d2x = dx - cx
    d2y = dy - cy
    denom = d1x * d2y - d1y * d2x
    if abs(denom) < 1e-15:
        return False
    t = ((cx - ax) * d2y - (cy - ay) * d2x) / denom
    u = ((cx - ax) * d1y - (cy - ay) * d1x) / denom
    return 0.0 <= t <= 1.0 and 0.0 <= u <= 1.0


@njit(cache=True)
def ray_seg_hit(ox, oy, ux, uy, x1, y1, x2, y2):
    """Distance along ray (origin o, unit dir u) to segment, or -1."""
    sx = x2 - x1
    sy = y2 - y1
    denom = ux * sy - uy * sx
    if abs(denom) < 1e-15:
        return -1.0
    t = ((x1 - ox) * sy - (y1 - oy) * sx) / denom
    u = ((x1 - ox) * uy - (y1 - oy) * ux) / denom
    if t >= 0.0 and 0.0 <= u <= 1.0:
        return t
    return -1.0


@njit(cache=True)
def ray_disc_hit(ox, oy, ux, uy, cx, cy, r):
    """Distance along ray to a disc, or -1 when missed (origin outside)."""
    fx = cx - ox
    fy = cy - oy
    b = fx * ux + fy * uy
    det = b * b - (fx * fx + fy * fy - r * r)
    if det < 0.0:
        return -1.0
    s = np.sqrt(det)
    t = b - s
    if t >= 0.0:
        return t
    t = b + s
    if t >= 0.0:
        return 0.0  # origin inside the disc
    return -1.0


@njit(cache=True)
def _find_grab_target(pos, ang, radius, kind, idx, grab_radius, grab_arc):
    """Nearest grabbable object in range and front arc; -1 if none.

    Ties on surface distance break toward the lower entity index.
    """
    n = pos.shape[0]
    best = -1
    best_d = 1e18
    for j in range(n):
        if j == idx or kind[j] != 1:
            continue
        dx = pos[j, 0] - pos[idx, 0]
        dy = pos[j, 1] - pos[idx, 1]
        d = np.sqrt(dx * dx + dy * dy)
        surf = d - radius[idx] - radius[j]
        if surf > grab_radius:
            continue
        if d > 1e-9:
            bearing = np.arctan2(dy, dx)
            if abs(ang_diff(bearing, ang[idx])) > grab_arc + 1e-9:
                continue
        if surf < best_d - 1e-12:
            best_d = surf
            best = j
    return best


@njit(cache=True)
def _labels_from_grabs(grab, n, labels):
    for i in range(n):
        labels[i] = i
    for i in range(n):
        j = grab[i]
        if j >= 0:
            # union by min label, then flatten
            a = labels[i]
            b = labels[j]
            m = a if a < b else b
            for k in range(n):
                if labels[k] == a or labels[k] == b:
                    labels[k] = m


@njit(cache=True)
def step_kernel(pos, vel, ang, avel, grab, grab_off, radius, mass, kind,
                maxf, actions, walls, P, applied_force, diag):
    """Advance one action step (P_SUBSTEPS sub-steps) in place.

    applied_force (N,) out: max propulsion magnitude used per entity.
    diag (2,) out: [max penetration depth, wall crossing count].
    """
    n = pos.shape[0]
    dt = P[P_DT]
    substeps = int(P[P_SUBSTEPS])
    lin_damp = P[P_LIN_DAMP]
    ang_damp = P[P_ANG_DAMP]
    mu_s = P[P_MU_S]
    mu_k = P[P_MU_K]
    speed_cap = P[P_SPEED_CAP]
    iters = int(P[P_SOLVER_ITERS])
    slop = P[P_CORR_SLOP]
    corr = P[P_CORR_FRAC]

    for i in range(n):
        applied_force[i] = 0.0
    diag[0] = 0.0
    diag[1] = 0.0

    # instantaneous phase: stop / turn / grab / release
    for i in range(n):
        if kind[i] != 0:
            continue
        a = actions[i]
        if a == A_STOP:
            vel[i, 0] = 0.0
            vel[i, 1] = 0.0
            avel[i] = 0.0
        elif a == A_TURN_LEFT:
            ang[i] = wrap_angle(ang[i] + P[P_TURN_RATE])
        elif a == A_TURN_RIGHT:
            ang[i] = wrap_angle(ang[i] - P[P_TURN_RATE])
        elif a == A_GRAB:
            if grab[i] < 0:
                j = _find_grab_target(pos, ang, radius, kind, i,
                                      P[P_GRAB_RADIUS], P[P_GRAB_ARC])
                if j >= 0:
                    grab[i] = j
                    grab_off[i, 0] = pos[j, 0] - pos[i, 0]
                    grab_off[i, 1] = pos[j, 1] - pos[i, 1]
        elif a == A_RELEASE:
            grab[i] = -1
        elif A_FORCE0 <= a < A_FORCE0 + 8 and P[P_AUTO_FACE] > 0.5:
            # propulsion swings the gaze toward the travel direction
            target = (a - A_FORCE0) * np.pi / 4.0
            diff = ang_diff(target, ang[i])
            turn = P[P_TURN_RATE]
            if diff > turn:
                diff = turn
            elif diff < -turn:
                diff = -turn
            ang[i] = wrap_angle(ang[i] + diff)

    labels = np.empty(n, dtype=np.int64)
    _labels_from_grabs(grab, n, labels)

    # group aggregates; members of a group share one velocity (momentum merge)
    gmass = np.zeros(n, dtype=np.float64)
    gmomx = np.zeros(n, dtype=np.float64)
    gmomy = np.zeros(n, dtype=np.float64)
    gfric_s = np.zeros(n, dtype=np.float64)
    gfric_k = np.zeros(n, dtype=np.float64)
    for i in range(n):
        l = labels[i]
        gmass[l] += mass[i]
        gmomx[l] += mass[i] * vel[i, 0]
        gmomy[l] += mass[i] * vel[i, 1]
        if kind[i] == 1:
            gfric_s[l] += mu_s * mass[i]
            gfric_k[l] += mu_k * mass[i]
    for i in range(n):
        l = labels[i]
        vel[i, 0] = gmomx[l] / gmass[l]
        vel[i, 1] = gmomy[l] / gmass[l]

    # propulsion per group, constant over the action step
    gfx = np.zeros(n, dtype=np.float64)
    gfy = np.zeros(n, dtype=np.float64)
    for i in range(n):
        if kind[i] != 0:
            continue
        a = actions[i]
        if A_FORCE0 <= a < A_FORCE0 + 8:
            d = a - A_FORCE0
            f = maxf[i]
            applied_force[i] = f
            l = labels[i]
            gfx[l] += f * DIR8[d, 0]
            gfy[l] += f * DIR8[d, 1]

    prev = np.empty((n, 2), dtype=np.float64)

    for _ss in range(substeps):
        for i in range(n):
            prev[i, 0] = pos[i, 0]
            prev[i, 1] = pos[i, 1]

        # integrate each group once (via its label representative)
        for l in range(n):
            if gmass[l] == 0.0:
                continue
            # find one member to read the shared velocity
            rep = -1
            for i in range(n):
                if labels[i] == l:
                    rep = i
                    break
            if rep < 0:
                continue
            vx = vel[rep, 0]
            vy = vel[rep, 1]
            fx = gfx[l]
            fy = gfy[l]
            speed = np.sqrt(vx * vx + vy * vy)
            fmag = np.sqrt(fx * fx + fy * fy)
            if speed < P[P_STATIC_EPS] and fmag <= gfric_s[l]:
                # static friction holds the group
                vx = 0.0
                vy = 0.0
            else:
                vx += fx / gmass[l] * dt
                vy += fy / gmass[l] * dt
                # kinetic friction decelerates toward rest without reversing
                sp = np.sqrt(vx * vx + vy * vy)
                if sp > 1e-12 and gfric_k[l] > 0.0:
                    drop = gfric_k[l] / gmass[l] * dt
                    if drop >= sp:
                        vx = 0.0
                        vy = 0.0
                    else:
                        scale = (sp - drop) / sp
                        vx *= scale
                        vy *= scale
            damp = 1.0 - lin_damp * dt
            if damp < 0.0:
                damp = 0.0
            vx *= damp
            vy *= damp
            sp = np.sqrt(vx * vx + vy * vy)
            if sp > speed_cap:
                vx *= speed_cap / sp
                vy *= speed_cap / sp
            for i in range(n):
                if labels[i] == l:
                    vel[i, 0] = vx
                    vel[i, 1] = vy
                    pos[i, 0] += vx * dt
                    pos[i, 1] += vy * dt
                    avel[i] *= max(0.0, 1.0 - ang_damp * dt)
                    ang[i] = wrap_angle(ang[i] + avel[i] * dt)

        # collision resolution
        for _it in range(iters):
            # entity-entity
            for i in range(n):
                for j in range(i + 1, n):
                    if labels[i] == labels[j]:
                        continue
                    dx = pos[j, 0] - pos[i, 0]
                    dy = pos[j, 1] - pos[i, 1]
                    rsum = radius[i] + radius[j]
                    d2 = dx * dx + dy * dy
                    if d2 >= rsum * rsum or d2 < 1e-18:
                        continue
                    d = np.sqrt(d2)
                    nx = dx / d
                    ny = dy / d
                    overlap = rsum - d
                    mi = gmass[labels[i]]
                    mj = gmass[labels[j]]
                    inv = 1.0 / mi + 1.0 / mj
                    # impulse (restitution 0): cancel closing normal velocity
                    rvx = vel[j, 0] - vel[i, 0]
                    rvy = vel[j, 1] - vel[i, 1]
                    vn = rvx * nx + rvy * ny
                    if vn < 0.0:
                        jimp = -vn / inv
                        for k in range(n):
                            if labels[k] == labels[i]:
                                vel[k, 0] -= jimp * nx / mi
                                vel[k, 1] -= jimp * ny / mi
                            elif labels[k] == labels[j]:
                                vel[k, 0] += jimp * nx / mj
                                vel[k, 1] += jimp * ny / mj
                    push = corr * max(overlap - slop, 0.0) / inv
                    for k in range(n):
                        if labels[k] == labels[i]:
                            pos[k, 0] -= push * nx / mi
                            pos[k, 1] -= push * ny / mi
                        elif labels[k] == labels[j]:
                            pos[k, 0] += push * nx / mj
                            pos[k, 1] += push * ny / mj
            # entity-wall
            for i in range(n):
                for w in range(walls.shape[0]):
                    d2, cx, cy = seg_point_dist2(walls[w, 0], walls[w, 1],
                                                 walls[w, 2], walls[w, 3],
                                                 pos[i, 0], pos[i, 1])
                    r = radius[i]
                    if d2 >= r * r or d2 < 1e-18:
                        continue
                    d = np.sqrt(d2)
                    nx = (pos[i, 0] - cx) / d
                    ny = (pos[i, 1] - cy) / d
                    pen = r - d
                    li = labels[i]
                    vn = vel[i, 0] * nx + vel[i, 1] * ny
                    if vn < 0.0:
                        for k in range(n):
                            if labels[k] == li:
                                vel[k, 0] -= vn * nx
                                vel[k, 1] -= vn * ny
                    push = corr * max(pen - slop, 0.0)
                    for k in range(n):
                        if labels[k] == li:
                            pos[k, 0] += push * nx
                            pos[k, 1] += push * ny

        # wall-crossing diagnostic on net sub-step displacement
        for i in range(n):
            for w in range(walls.shape[0]):
                if segments_cross(prev[i, 0], prev[i, 1], pos[i, 0], pos[i, 1],
                                  walls[w, 0], walls[w, 1],
                                  walls[w, 2], walls[w, 3]):
                    diag[1] += 1.0

    # final penetration diagnostic
    for i in range(n):
        for j in range(i + 1, n):
            if labels[i] == labels[j]:
                continue
            dx = pos[j, 0] - pos[i, 0]
            dy = pos[j, 1] - pos[i, 1]
            d = np.sqrt(dx * dx + dy * dy)
            pen = radius[i] + radius[j] - d
            if pen > diag[0]:
                diag[0] = pen
        for w in range(walls.shape[0]):
            d2, cx, cy = seg_point_dist2(walls[w, 0], walls[w, 1],
                                         walls[w, 2], walls[w, 3],
                                         pos[i, 0], pos[i, 1])
            pen = radius[i] - np.sqrt(d2)
            if pen > diag[0]:
                diag[0] = pen


@njit(cache=True)
def visibility_kernel(pos, radius, ang, walls, obs, P, grid_w, grid_h,
                      cell_vis, seen):
    """Conical occluded field of view.

    cell_vis (grid_h*grid_w,) u1 out: 1 where the cell center is inside the
    cone with clear line of sight (walls and other bodies occlude).
    seen (N,) u1 out: 1 for entities directly visible (cone + occlusion).
    The cone is closed: boundary bearings count as inside.
    """
    n = pos.shape[0]
    ox = pos[obs, 0]
    oy = pos[obs, 1]
    theta = ang[obs]
    fov = P[P_FOV_HALF]

    for i in range(n):
        seen[i] = 0
    seen[obs] = 1

    for e in range(n):
        if e == obs:
            continue
        dx = pos[e, 0] - ox
        dy = pos[e, 1] - oy
        d = np.sqrt(dx * dx + dy * dy)
        if d <= radius[e] + 1e-12:
            seen[e] = 1
            continue
        beta = np.arctan2(dy, dx)
        half = np.arcsin(min(1.0, radius[e] / d))
        for s in range(5):
            off = (-0.999 + 0.4995 * s) * half
            phi = beta + off
            if abs(ang_diff(phi, theta)) > fov + 1e-9:
                continue
            ux = np.cos(phi)
            uy = np.sin(phi)
            # distance to target disc along this ray
            t_hit = ray_disc_hit(ox, oy, ux, uy, pos[e, 0], pos[e, 1],
                                 radius[e])
            if t_hit < 0.0:
                continue
            blocked = False
            for w in range(walls.shape[0]):
                t = ray_seg_hit(ox, oy, ux, uy, walls[w, 0], walls[w, 1],
                                walls[w, 2], walls[w, 3])
                if 0.0 <= t < t_hit - 1e-9:
                    blocked = True
                    break
            if not blocked:
                for k in range(n):
                    if k == obs or k == e:
                        continue
                    t = ray_disc_hit(ox, oy, ux, uy, pos[k, 0], pos[k, 1],
                                     radius[k])
                    if 0.0 <= t < t_hit - 1e-9:
                        blocked = True
                        break
            if not blocked:
                seen[e] = 1
                break

    for cy in range(grid_h):
        for cx in range(grid_w):
            idx = cy * grid_w + cx
            px = cx + 0.5
            py = cy + 0.5
            dx = px - ox
            dy = py - oy
            d = np.sqrt(dx * dx + dy * dy)
            if d < 1e-9:
                cell_vis[idx] = 1
                continue
            beta = np.arctan2(dy, dx)
            if abs(ang_diff(beta, theta)) > fov + 1e-9:
                cell_vis[idx] = 0
                continue
            ux = dx / d
            uy = dy / d
            vis = 1
            for w in range(walls.shape[0]):
                t = ray_seg_hit(ox, oy, ux, uy, walls[w, 0], walls[w, 1],
                                walls[w, 2], walls[w, 3])
                if 0.0 <= t < d - 1e-9:
                    vis = 0
                    break
            if vis == 1:
                for k in range(n):
                    if k == obs:
                        continue
                    t = ray_disc_hit(ox, oy, ux, uy, pos[k, 0], pos[k, 1],
                                     radius[k])
                    if 0.0 <= t < d - 1e-9:
                        vis = 0
                        break
            cell_vis[idx] = vis
    # the observer always knows its own cell
    mx = int(ox)
    my = int(oy)
    if 0 <= mx < grid_w and 0 <= my < grid_h:
        cell_vis[my * grid_w + mx] = 1


@njit(cache=True)
def field_lookup(field, grid_w, x, y):
    """BFS cell-distance lookup with clamped coordinates."""
    cx = int(x)
    cy = int(y)
    if cx < 0:
        cx = 0
    if cx >= grid_w:
        cx = grid_w - 1
    grid_h = field.shape[0] // grid_w
    if cy < 0:
        cy = 0
    if cy >= grid_h:
        cy = grid_h - 1
    return field[cy * grid_w + cx]


@njit(cache=True)
def subgoal_eval(pos, ang, grab, radius, sg, touch_eps):
    """Return (satisfied, shaped_distance >= 0) for an encoded subgoal."""
    t = int(sg[0])
    neg = sg[1] > 0.5
    subj = int(sg[2])
    targ_is_lm = sg[3] > 0.5
    targ = int(sg[4])
    thr = sg[9]

    d = 0.0
    pos_sat = False
    if t == SG_ON:
        # distance from the ON-entity center to the landmark box
        ex = pos[subj, 0]
        ey = pos[subj, 1]
        dx = max(sg[5] - ex, 0.0, ex - sg[7])
        dy = max(sg[6] - ey, 0.0, ey - sg[8])
        d = np.sqrt(dx * dx + dy * dy)
        pos_sat = d <= 1e-12
    elif t == SG_ATTACH:
        pos_sat = grab[subj] == targ
        dx = pos[targ, 0] - pos[subj, 0]
        dy = pos[targ, 1] - pos[subj, 1]
        cd = np.sqrt(dx * dx + dy * dy)
        d = max(0.0, cd - radius[subj] - radius[targ])
        if not pos_sat and cd > 1e-9:
            bearing = np.arctan2(dy, dx)
            d += 0.3 * abs(ang_diff(bearing, ang[subj]))
    else:
        # CLOSE / TOUCH between subj and target (entity or landmark box)
        if targ_is_lm:
            ex = pos[subj, 0]
            ey = pos[subj, 1]
            dx = max(sg[5] - ex, 0.0, ex - sg[7])
            dy = max(sg[6] - ey, 0.0, ey - sg[8])
            d = np.sqrt(dx * dx + dy * dy) - radius[subj]
            if d < 0.0:
                d = 0.0
        else:
            dx = pos[targ, 0] - pos[subj, 0]
            dy = pos[targ, 1] - pos[subj, 1]
            d = np.sqrt(dx * dx + dy * dy) - radius[subj] - radius[targ]
            if d < 0.0:
                d = 0.0
        lim = thr if t == SG_CLOSE else touch_eps
        pos_sat = d <= lim
        d = max(0.0, d - lim)

    if not neg:
        return pos_sat, d

    # negated forms
    if t == SG_ATTACH:
        return not pos_sat, (1.0 if pos_sat else 0.0)
    if t == SG_ON:
        # push away from the box; guide via distance to the box center
        bcx = 0.5 * (sg[5] + sg[7])
        bcy = 0.5 * (sg[6] + sg[8])
        hx = 0.5 * (sg[7] - sg[5])
        hy = 0.5 * (sg[8] - sg[6])
        rbox = np.sqrt(hx * hx + hy * hy)
        dx = pos[subj, 0] - bcx
        dy = pos[subj, 1] - bcy
        dc = np.sqrt(dx * dx + dy * dy)
        margin = rbox + 1.0
        return (not pos_sat) and dc > margin, max(0.0, margin - dc)
    # CLOSE / TOUCH: d currently holds distance beyond the limit
    lim = thr if t == SG_CLOSE else touch_eps
    raw = d + lim if not pos_sat else 0.0
    margin = 2.0 * lim
    return (not pos_sat) and raw > lim, max(0.0, margin - raw)


@njit(cache=True)
def subgoal_reward_terms(pos, ang, grab, radius, sg, touch_eps, field,
                         grid_w):
    """(satisfied, wall-aware shaped distance) for the search reward.

    Satisfaction is always geometric; when a navigation field is supplied
    (length > 1), the shaped distance follows BFS cell distances from the
    subject entity's cell so rollouts can see around walls.
    """
    sat, geo = subgoal_eval(pos, ang, grab, radius, sg, touch_eps)
    if sat or sg[1] > 0.5 or field.shape[0] <= 1:
        return sat, geo
    subj = int(sg[2])
    d = field_lookup(field, grid_w, pos[subj, 0], pos[subj, 1])
    if d >= 9999.0:
        # no route at this body size; steer geometrically toward the target
        # (gets close enough to at least see through gaps)
        return sat, geo
    # small euclidean term: breaks the 4-neighbor metric's diagonal ties
    return sat, d + 0.1 * geo


@njit(cache=True)
def greedy_action(pos, vel, ang, grab, radius, kind, sg, self_idx, touch_eps,
                  grab_radius, grab_arc, field, grid_w):
    """Greedy rollout action for a subgoal; NOFORCE when satisfied."""
    sat, _d = subgoal_eval(pos, ang, grab, radius, sg, touch_eps)
    if sat:
        return A_NOFORCE
    t = int(sg[0])
    neg = sg[1] > 0.5
    targ_is_lm = sg[3] > 0.5
    targ = int(sg[4])

    if targ_is_lm or t == SG_ON:
        tx = 0.5 * (sg[5] + sg[7])
        ty = 0.5 * (sg[6] + sg[8])
    else:
        tx = pos[targ, 0]
        ty = pos[targ, 1]
        if (
            sg[SG_DOCK_VALID] > 0.5
            and not neg
            and (t == SG_CLOSE or t == SG_ATTACH)
            and grab[self_idx] != targ
        ):
            # aim for the docking point on the far side from the destination
            ddx = pos[targ, 0] - sg[SG_DOCK_X]
            ddy = pos[targ, 1] - sg[SG_DOCK_Y]
            dn = np.sqrt(ddx * ddx + ddy * ddy)
            if dn > 1e-9:
                off = radius[self_idx] + radius[targ] + 0.15
                px = pos[targ, 0] + ddx / dn * off
                py = pos[targ, 1] + ddy / dn * off
                gap = np.sqrt((px - pos[self_idx, 0]) ** 2
                              + (py - pos[self_idx, 1]) ** 2)
                if gap > 0.4:
                    tx = px
                    ty = py

    # when carrying toward a landmark, steer the carried body
    refx = pos[self_idx, 0]
    refy = pos[self_idx, 1]
    if t == SG_ON and int(sg[2]) != self_idx:
        held = grab[self_idx]
        if held != int(sg[2]):
            # need the object first
            tx = pos[int(sg[2]), 0]
            ty = pos[int(sg[2]), 1]

    dx = tx - refx
    dy = ty - refy
    dist = np.sqrt(dx * dx + dy * dy)
    if dist < 1e-9:
        return A_NOFORCE
    bearing = np.arctan2(dy, dx)

    if t == SG_ATTACH and not neg:
        odx = pos[targ, 0] - refx
        ody = pos[targ, 1] - refy
        odist = np.sqrt(odx * odx + ody * ody)
        surf = odist - radius[self_idx] - radius[targ]
        berr = ang_diff(np.arctan2(ody, odx), ang[self_idx])
        if surf <= grab_radius:
            if abs(berr) <= grab_arc:
                return A_GRAB
            return A_TURN_LEFT if berr > 0.0 else A_TURN_RIGHT
    if t == SG_ON and int(sg[2]) != self_idx:
        subj = int(sg[2])
        bx = 0.5 * (sg[5] + sg[7])
        by = 0.5 * (sg[6] + sg[8])
        tdx = bx - pos[subj, 0]
        tdy = by - pos[subj, 1]
        tn = np.sqrt(tdx * tdx + tdy * tdy)
        if grab[self_idx] != subj:
            odx = pos[subj, 0] - refx
            ody = pos[subj, 1] - refy
            odist = np.sqrt(odx * odx + ody * ody)
            surf = odist - radius[self_idx] - radius[subj]
            if surf <= grab_radius:
                berr = ang_diff(np.arctan2(ody, odx), ang[self_idx])
                if abs(berr) <= grab_arc:
                    return A_GRAB
                return A_TURN_LEFT if berr > 0.0 else A_TURN_RIGHT
        else:
            # holding from the destination side wedges at walls; let go and
            # re-dock from the far side
            sdx = pos[self_idx, 0] - pos[subj, 0]
            sdy = pos[self_idx, 1] - pos[subj, 1]
            sn = np.sqrt(sdx * sdx + sdy * sdy)
            if tn > 1e-9 and sn > 1e-9:
                if (tdx * sdx + tdy * sdy) / (tn * sn) > 0.5:
                    return A_RELEASE

    if neg:
        bearing = wrap_angle(bearing + np.pi)
        k = int(
            np.floor((wrap_angle(bearing) + np.pi / 8.0) / (np.pi / 4.0))
        ) % 8
        return A_FORCE0 + k

    here = field_lookup(field, grid_w, refx, refy) if field.shape[0] > 1 else 1e9
    if field.shape[0] > 1 and here < 9999.0:
        # wall-aware: probe the 8 directions against the BFS field
        best_k = 0
        best_d = 1e18
        for k in range(8):
            px = refx + DIR8[k, 0] * 1.0
            py = refy + DIR8[k, 1] * 1.0
            d = field_lookup(field, grid_w, px, py)
            d += 0.2 * np.sqrt((tx - px) ** 2 + (ty - py) ** 2)
            if d < best_d - 1e-12:
                best_d = d
                best_k = k
        return A_FORCE0 + best_k

    # quantize to the 8 compass directions
    k = int(np.floor((wrap_angle(bearing) + np.pi / 8.0) / (np.pi / 4.0))) % 8
    return A_FORCE0 + k


SHAPING_GAIN = 1.0
TIME_PENALTY = 0.05


@njit(cache=True)
def rollout_kernel(pos, vel, ang, avel, grab, grab_off, radius, mass, kind,
                   maxf, walls, P, self_idx, sg, depth, discount, eps,
                   rng_state, field, grid_w, scratch_actions, scratch_force,
                   scratch_diag):
    """Epsilon-greedy rollout; returns the discounted return.

    Rewards are potential-shaped: each step pays for the decrease in the
    shaped subgoal distance, plus a terminal bonus on satisfaction.
    Mutates the state arrays (callers pass scratch copies).
    """
    total = 0.0
    g = 1.0
    touch_eps = P[P_TOUCH_EPS]
    _sat0, d_prev = subgoal_reward_terms(pos, ang, grab, radius, sg,
                                         touch_eps, field, grid_w)
    for _d in range(depth):
        if xs_uniform(rng_state) < eps:
            a = int(xs_uniform(rng_state) * N_ACTIONS)
            if a >= N_ACTIONS:
                a = N_ACTIONS - 1
        else:
            a = greedy_action(pos, vel, ang, grab, radius, kind, sg, self_idx,
                              touch_eps, P[P_GRAB_RADIUS], P[P_GRAB_ARC],
                              field, grid_w)
        for i in range(pos.shape[0]):
            scratch_actions[i] = A_NOFORCE
        scratch_actions[self_idx] = a
        step_kernel(pos, vel, ang, avel, grab, grab_off, radius, mass, kind,
                    maxf, scratch_actions, walls, P, scratch_force,
                    scratch_diag)
        sat, d = subgoal_reward_terms(pos, ang, grab, radius, sg, touch_eps,
                                      field, grid_w)
        if sat:
            total += g * 1.0
            break
        total += g * (SHAPING_GAIN * (d_prev - d) - TIME_PENALTY)
        d_prev = d
        g *= discount
    return total


@njit(cache=True)
def bfs_grid(blocked_h, blocked_v, grid_w, grid_h, src_mask, dist):
    """Multi-source BFS over grid cells.

    blocked_h (grid_h, grid_w-1): edge between (x,y) and (x+1,y) blocked.
    blocked_v (grid_h-1, grid_w): edge between (x,y) and (x,y+1) blocked.
    src_mask flat (grid_h*grid_w,) u1; dist flat out, -1 unreachable.
    """
    total = grid_w * grid_h
    queue = np.empty(total, dtype=np.int64)
    head = 0
    tail = 0
    for i in range(total):
        if src_mask[i] == 1:
            dist[i] = 0
            queue[tail] = i
            tail += 1
        else:
            dist[i] = -1
    while head < tail:
        cur = queue[head]
        head += 1
        cy = cur // grid_w
        cx = cur % grid_w
        d = dist[cur]
        if cx + 1 < grid_w and blocked_h[cy, cx] == 0:
            nxt = cur + 1
            if dist[nxt] < 0:
                dist[nxt] = d + 1
                queue[tail] = nxt
                tail += 1
        if cx - 1 >= 0 and blocked_h[cy, cx - 1] == 0:
            nxt = cur - 1
            if dist[nxt] < 0:
                dist[nxt] = d + 1
                queue[tail] = nxt
                tail += 1
        if cy + 1 < grid_h and blocked_v[cy, cx] == 0:
            nxt = cur + grid_w
            if dist[nxt] < 0:
                dist[nxt] = d + 1
                queue[tail] = nxt
                tail += 1
        if cy - 1 >= 0 and blocked_v[cy - 1, cx] == 0:
            nxt = cur - grid_w
            if dist[nxt] < 0:
                dist[nxt] = d + 1
                queue[tail] = nxt
                tail += 1
