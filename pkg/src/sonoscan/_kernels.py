"""Numba kernels for the per-tick hot paths.

Everything here is a scalar-loop transcription of the reference formulas in
kinematics.py, dynamics.py and mesh.py; the public modules own the
semantics and the tests pin both paths together.  Keep these free of any
object-mode fallbacks: they run tens of thousands of times per simulated
second.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _axis_angle(axis, angle, out):
    x, y, z = axis[0], axis[1], axis[2]
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    out[0, 0] = t * x * x + c
    out[0, 1] = t * x * y - s * z
    out[0, 2] = t * x * z + s * y
    out[1, 0] = t * x * y + s * z
    out[1, 1] = t * y * y + c
    out[1, 2] = t * y * z - s * x
    out[2, 0] = t * x * z - s * y
    out[2, 1] = t * y * z + s * x
    out[2, 2] = t * z * z + c


@njit(cache=True)
def joint_frames_kernel(origin_rots, origin_trans, axes_local, q):
    n = q.shape[0]
    rotations = np.empty((n, 3, 3))
    origins = np.empty((n, 3))
    axes_world = np.empty((n, 3))
    r = np.eye(3)
    p = np.zeros(3)
    spin = np.empty((3, 3))
    for k in range(n):
        p = r @ origin_trans[k] + p
        r = r @ origin_rots[k]
        axes_world[k] = r @ axes_local[k]
        _axis_angle(axes_local[k], q[k], spin)
        r = r @ spin
        rotations[k] = r
        origins[k] = p
    return rotations, origins, axes_world


@njit(cache=True)
def world_links_kernel(rotations, origins, com_local, inertia_local):
    n = rotations.shape[0]
    coms = np.empty((n, 3))
    inertias = np.empty((n, 3, 3))
    for k in range(n):
        coms[k] = rotations[k] @ com_local[k] + origins[k]
        inertias[k] = rotations[k] @ inertia_local[k] @ rotations[k].T
    return coms, inertias


@njit(cache=True, inline="always")
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True)
def mass_matrix_kernel(axes, origins, coms, inertias, masses):
    n = axes.shape[0]
    m = np.zeros((n, n))
    jv = np.zeros((3, n))
    jw = np.zeros((3, n))
    tmp = np.empty(3)
    arm = np.empty(3)
    for i in range(n):
        for k in range(i + 1):
            arm[0] = coms[i, 0] - origins[k, 0]
            arm[1] = coms[i, 1] - origins[k, 1]
            arm[2] = coms[i, 2] - origins[k, 2]
            _cross(axes[k], arm, tmp)
            jv[0, k] = tmp[0]
            jv[1, k] = tmp[1]
            jv[2, k] = tmp[2]
            jw[0, k] = axes[k, 0]
            jw[1, k] = axes[k, 1]
            jw[2, k] = axes[k, 2]
        for k in range(i + 1, n):
            jv[0, k] = jv[1, k] = jv[2, k] = 0.0
            jw[0, k] = jw[1, k] = jw[2, k] = 0.0
        iw = inertias[i] @ jw[:, : i + 1]
        for a in range(i + 1):
            for b in range(a + 1):
                acc = masses[i] * (jv[0, a] * jv[0, b] + jv[1, a] * jv[1, b]
                                   + jv[2, a] * jv[2, b])
                acc += jw[0, a] * iw[0, b] + jw[1, a] * iw[1, b] + jw[2, a] * iw[2, b]
                m[a, b] += acc
    for a in range(n):
        for b in range(a + 1, n):
            m[a, b] = m[b, a]
    return m


@njit(cache=True)
def rnea_kernel(axes, origins, coms, inertias, masses, dq, ddq, gravity):
    n = axes.shape[0]
    omega = np.zeros((n + 1, 3))
    alpha = np.zeros((n + 1, 3))
    a_origin = np.zeros((n + 1, 3))
    a_origin[0] = -gravity
    step = np.empty(3)
    tmp = np.empty(3)
    tmp2 = np.empty(3)
    prev = np.zeros(3)
    for i in range(n):
        for c in range(3):
            step[c] = origins[i, c] - prev[c]
        _cross(alpha[i], step, tmp)
        _cross(omega[i], step, tmp2)
        _cross(omega[i], tmp2, step)  # step now holds w x (w x r)
        for c in range(3):
            a_origin[i + 1, c] = a_origin[i, c] + tmp[c] + step[c]
        _cross(omega[i], axes[i], tmp)
        for c in range(3):
            omega[i + 1, c] = omega[i, c] + axes[i, c] * dq[i]
            alpha[i + 1, c] = alpha[i, c] + axes[i, c] * ddq[i] + tmp[c] * dq[i]
        prev = origins[i]

    force = np.empty((n, 3))
    moment = np.empty((n, 3))
    arm = np.empty(3)
    for i in range(n):
        for c in range(3):
            arm[c] = coms[i, c] - origins[i, c]
        _cross(alpha[i + 1], arm, tmp)
        _cross(omega[i + 1], arm, tmp2)
        _cross(omega[i + 1], tmp2, step)
        for c in range(3):
            force[i, c] = masses[i] * (a_origin[i + 1, c] + tmp[c] + step[c])
        iw = inertias[i] @ omega[i + 1]
        ia = inertias[i] @ alpha[i + 1]
        _cross(omega[i + 1], iw, tmp)
        for c in range(3):
            moment[i, c] = ia[c] + tmp[c]

    tau = np.zeros(n)
    f_child = np.zeros(3)
    n_child = np.zeros(3)
    child_origin = origins[n - 1].copy()
    total_n = np.empty(3)
    for i in range(n - 1, -1, -1):
        for c in range(3):
            arm[c] = coms[i, c] - origins[i, c]
            step[c] = child_origin[c] - origins[i, c]
        _cross(arm, force[i], tmp)
        _cross(step, f_child, tmp2)
        for c in range(3):
            total_n[c] = moment[i, c] + n_child[c] + tmp[c] + tmp2[c]
        tau[i] = axes[i, 0] * total_n[0] + axes[i, 1] * total_n[1] + axes[i, 2] * total_n[2]
        for c in range(3):
            f_child[c] = force[i, c] + f_child[c]
            n_child[c] = total_n[c]
        child_origin = origins[i]
    return tau


@njit(cache=True)
def closest_on_triangle(tri, p, foot, bary):
    """Scalar point-triangle closest point; returns squared distance."""
    ax, ay, az = tri[0, 0], tri[0, 1], tri[0, 2]
    abx, aby, abz = tri[1, 0] - ax, tri[1, 1] - ay, tri[1, 2] - az
    acx, acy, acz = tri[2, 0] - ax, tri[2, 1] - ay, tri[2, 2] - az
    apx, apy, apz = p[0] - ax, p[1] - ay, p[2] - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    u = v = w = 0.0
    done = False
    if d1 <= 0.0 and d2 <= 0.0:
        u, v, w = 1.0, 0.0, 0.0
        done = True
    if not done:
        bpx, bpy, bpz = p[0] - tri[1, 0], p[1] - tri[1, 1], p[2] - tri[1, 2]
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            u, v, w = 0.0, 1.0, 0.0
            done = True
        if not done:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                t = d1 / (d1 - d3) if d1 != d3 else 0.0
                u, v, w = 1.0 - t, t, 0.0
                done = True
        if not done:
            cpx, cpy, cpz = p[0] - tri[2, 0], p[1] - tri[2, 1], p[2] - tri[2, 2]
            d5 = abx * cpx + aby * cpy + abz * cpz
            d6 = acx * cpx + acy * cpy + acz * cpz
            if d6 >= 0.0 and d5 <= d6:
                u, v, w = 0.0, 0.0, 1.0
                done = True
            if not done:
                vb = d5 * d2 - d1 * d6
                if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                    t = d2 / (d2 - d6) if d2 != d6 else 0.0
                    u, v, w = 1.0 - t, 0.0, t
                    done = True
                if not done:
                    va = d3 * d6 - d5 * d4
                    e1 = d4 - d3
                    e2 = d5 - d6
                    if va <= 0.0 and e1 >= 0.0 and e2 >= 0.0:
                        t = e1 / (e1 + e2) if e1 + e2 != 0.0 else 0.0
                        u, v, w = 0.0, 1.0 - t, t
                        done = True
                    if not done:
                        denom = va + vb + vc
                        inv = 1.0 / denom if denom != 0.0 else 0.0
                        v = vb * inv
                        w = vc * inv
                        u = 1.0 - v - w
    foot[0] = u * tri[0, 0] + v * tri[1, 0] + w * tri[2, 0]
    foot[1] = u * tri[0, 1] + v * tri[1, 1] + w * tri[2, 1]
    foot[2] = u * tri[0, 2] + v * tri[1, 2] + w * tri[2, 2]
    bary[0] = u
    bary[1] = v
    bary[2] = w
    dx, dy, dz = p[0] - foot[0], p[1] - foot[1], p[2] - foot[2]
    return dx * dx + dy * dy + dz * dz


@njit(cache=True)
def best_over_faces(triangles, face_ids, p):
    best_d2 = np.inf
    best_face = -1
    foot = np.empty(3)
    bary = np.empty(3)
    best_foot = np.empty(3)
    best_bary = np.empty(3)
    for idx in range(face_ids.shape[0]):
        f = face_ids[idx]
        d2 = closest_on_triangle(triangles[f], p, foot, bary)
        if d2 < best_d2:
            best_d2 = d2
            best_face = f
            best_foot[:] = foot
            best_bary[:] = bary
    return best_d2, best_face, best_foot, best_bary


@njit(cache=True)
def bvh_query_kernel(lo, hi, children, leaf_start, leaf_count, leaf_faces,
                     triangles, p, upper):
    """Branch-and-bound nearest-triangle search with an initial upper bound.

    Returns (d2, face, foot, bary); face = -1 when nothing beats `upper`.
    """
    best_d2 = upper
    best_face = -1
    best_foot = np.zeros(3)
    best_bary = np.zeros(3)
    foot = np.empty(3)
    bary = np.empty(3)
    stack = np.empty(128, dtype=np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        d2 = 0.0
        for c in range(3):
            lo_gap = lo[node, c] - p[c]
            hi_gap = p[c] - hi[node, c]
            gap = lo_gap if lo_gap > hi_gap else hi_gap
            if gap > 0.0:
                d2 += gap * gap
        if d2 >= best_d2:
            continue
        left = children[node, 0]
        if left < 0:
            start = leaf_start[node]
            for k in range(leaf_count[node]):
                f = leaf_faces[start + k]
                tri_d2 = closest_on_triangle(triangles[f], p, foot, bary)
                if tri_d2 < best_d2:
                    best_d2 = tri_d2
                    best_face = f
                    best_foot[:] = foot
                    best_bary[:] = bary
        else:
            stack[top] = left
            stack[top + 1] = children[node, 1]
            top += 2
    return best_d2, best_face, best_foot, best_bary
