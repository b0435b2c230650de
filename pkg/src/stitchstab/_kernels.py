"""Compiled numeric kernels shared by the geometry, filtering and planner layers.

Everything here is nopython-compiled and deliberately allocation-light: the
hyperlapse planner expands thousands of candidate stabilizer states per search
step and routes them all through ``expand_candidates`` in a single call.  The
scalar entry points are the same device functions the batch kernel uses, so the
per-frame stabilizer and the planner share one set of numerics.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# StitchChoice wire values (kept in sync with filtering.StitchChoice).
CHOICE_NO_STITCH = 0
CHOICE_STITCH_PREV = 1
CHOICE_STITCH_NEXT = 2
CHOICE_FAIL = 3


# ---------------------------------------------------------------------------
# 3x3 matrix primitives
# ---------------------------------------------------------------------------


@njit(cache=True)
def mat3_mul(a, b):
    out = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            out[i, j] = a[i, 0] * b[0, j] + a[i, 1] * b[1, j] + a[i, 2] * b[2, j]
    return out


@njit(cache=True)
def mat3_det(a):
    return (
        a[0, 0] * (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1])
        - a[0, 1] * (a[1, 0] * a[2, 2] - a[1, 2] * a[2, 0])
        + a[0, 2] * (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0])
    )


@njit(cache=True)
def mat3_inv(a):
    det = mat3_det(a)
    out = np.empty((3, 3))
    out[0, 0] = (a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]) / det
    out[0, 1] = (a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2]) / det
    out[0, 2] = (a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1]) / det
    out[1, 0] = (a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]) / det
    out[1, 1] = (a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]) / det
    out[1, 2] = (a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]) / det
    out[2, 0] = (a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]) / det
    out[2, 1] = (a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1]) / det
    out[2, 2] = (a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]) / det
    return out


@njit(cache=True)
def mat3_normalize(a):
    out = np.empty((3, 3))
    w = a[2, 2]
    if w != 0.0:
        for i in range(3):
            for j in range(3):
                out[i, j] = a[i, j] / w
    else:
        for i in range(3):
            for j in range(3):
                out[i, j] = a[i, j]
    return out


@njit(cache=True)
def mat3_identity():
    out = np.zeros((3, 3))
    out[0, 0] = 1.0
    out[1, 1] = 1.0
    out[2, 2] = 1.0
    return out


# ---------------------------------------------------------------------------
# Rotation homographies and the rough angle estimator
# ---------------------------------------------------------------------------


@njit(cache=True)
def rotation_homography_k(yaw, pitch, roll, fl, px, py):
    """Pixel-space homography K * R_yaw * R_pitch * R_roll * K^-1 (h33 = 1)."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)

    ry = np.empty((3, 3))
    ry[0, 0], ry[0, 1], ry[0, 2] = cy, 0.0, sy
    ry[1, 0], ry[1, 1], ry[1, 2] = 0.0, 1.0, 0.0
    ry[2, 0], ry[2, 1], ry[2, 2] = -sy, 0.0, cy

    rp = np.empty((3, 3))
    rp[0, 0], rp[0, 1], rp[0, 2] = 1.0, 0.0, 0.0
    rp[1, 0], rp[1, 1], rp[1, 2] = 0.0, cp, -sp
    rp[2, 0], rp[2, 1], rp[2, 2] = 0.0, sp, cp

    rr = np.empty((3, 3))
    rr[0, 0], rr[0, 1], rr[0, 2] = cr, -sr, 0.0
    rr[1, 0], rr[1, 1], rr[1, 2] = sr, cr, 0.0
    rr[2, 0], rr[2, 1], rr[2, 2] = 0.0, 0.0, 1.0

    k = np.empty((3, 3))
    k[0, 0], k[0, 1], k[0, 2] = fl, 0.0, px
    k[1, 0], k[1, 1], k[1, 2] = 0.0, fl, py
    k[2, 0], k[2, 1], k[2, 2] = 0.0, 0.0, 1.0

    kinv = np.empty((3, 3))
    kinv[0, 0], kinv[0, 1], kinv[0, 2] = 1.0 / fl, 0.0, -px / fl
    kinv[1, 0], kinv[1, 1], kinv[1, 2] = 0.0, 1.0 / fl, -py / fl
    kinv[2, 0], kinv[2, 1], kinv[2, 2] = 0.0, 0.0, 1.0

    r = mat3_mul(ry, mat3_mul(rp, rr))
    return mat3_normalize(mat3_mul(k, mat3_mul(r, kinv)))


@njit(cache=True)
def estimate_angles_k(h, fl, px, py):
    """Rough yaw/pitch/roll read off a normalized homography's coefficients.

    The coefficient formulas hold in principal-point-centered coordinates, so
    the matrix is translation-conjugated there before reading entries.
    """
    t_neg = np.empty((3, 3))
    t_neg[0, 0], t_neg[0, 1], t_neg[0, 2] = 1.0, 0.0, -px
    t_neg[1, 0], t_neg[1, 1], t_neg[1, 2] = 0.0, 1.0, -py
    t_neg[2, 0], t_neg[2, 1], t_neg[2, 2] = 0.0, 0.0, 1.0
    t_pos = np.empty((3, 3))
    t_pos[0, 0], t_pos[0, 1], t_pos[0, 2] = 1.0, 0.0, px
    t_pos[1, 0], t_pos[1, 1], t_pos[1, 2] = 0.0, 1.0, py
    t_pos[2, 0], t_pos[2, 1], t_pos[2, 2] = 0.0, 0.0, 1.0
    hn = mat3_normalize(mat3_mul(t_neg, mat3_mul(h, t_pos)))
    c = hn[0, 2]
    f = hn[1, 2]
    d = hn[1, 0]
    e = hn[1, 1]

    sa = c / fl
    if sa > 1.0:
        sa = 1.0
    elif sa < -1.0:
        sa = -1.0
    yaw = math.asin(sa)

    sb = f / fl
    if sb > 1.0:
        sb = 1.0
    elif sb < -1.0:
        sb = -1.0
    pitch = -math.asin(sb)

    if e == 0.0:
        if d == 0.0:
            roll = 0.0
        elif d > 0.0:
            roll = math.pi / 2.0
        else:
            roll = -math.pi / 2.0
    else:
        roll = math.atan(d / e)
    return yaw, pitch, roll


@njit(cache=True)
def decompose_k(q, fl, px, py):
    """Split q into estimated rotations and the residual: q ~ R(y,p,r) * lam."""
    qn = mat3_normalize(q)
    yaw, pitch, roll = estimate_angles_k(qn, fl, px, py)
    r = rotation_homography_k(yaw, pitch, roll, fl, px, py)
    lam = mat3_normalize(mat3_mul(mat3_inv(r), qn))
    return yaw, pitch, roll, lam


@njit(cache=True)
def update_q_k(q_prev, n, g_yaw, g_pitch, g_roll, eta, fl, px, py):
    """One low-pass update of the distortion-free cropping matrix.

    Applies q <- R(g) * n * q_prev, then decomposes q, pulls the residual
    toward identity by eta and recomposes.  Returns the new q together with
    the decomposition angles that produced the residual.
    """
    f = rotation_homography_k(g_yaw, g_pitch, g_roll, fl, px, py)
    q = mat3_normalize(mat3_mul(f, mat3_mul(n, q_prev)))
    yaw, pitch, roll, lam = decompose_k(q, fl, px, py)
    for i in range(3):
        for j in range(3):
            lam[i, j] = (1.0 - eta) * lam[i, j]
    lam[0, 0] += eta
    lam[1, 1] += eta
    lam[2, 2] += eta
    r = rotation_homography_k(yaw, pitch, roll, fl, px, py)
    q = mat3_normalize(mat3_mul(r, lam))
    return q, yaw, pitch, roll


# ---------------------------------------------------------------------------
# Quads, containment and the inside predicates
# ---------------------------------------------------------------------------


@njit(cache=True)
def crop_quad_k(p, ox, oy, ow, oh):
    """Corners of the crop rectangle [ox,ox+ow]x[oy,oy+oh] mapped through p.

    Returns (quad(4,2), ok); ok is False when any corner has non-positive
    homogeneous depth.
    """
    quad = np.empty((4, 2))
    xs = (ox, ox + ow, ox + ow, ox)
    ys = (oy, oy, oy + oh, oy + oh)
    ok = True
    for i in range(4):
        x = xs[i]
        y = ys[i]
        w = p[2, 0] * x + p[2, 1] * y + p[2, 2]
        if w <= 1e-12:
            ok = False
            quad[i, 0] = 0.0
            quad[i, 1] = 0.0
        else:
            quad[i, 0] = (p[0, 0] * x + p[0, 1] * y + p[0, 2]) / w
            quad[i, 1] = (p[1, 0] * x + p[1, 1] * y + p[1, 2]) / w
    return quad, ok


@njit(cache=True)
def point_in_quad_k(quad, x, y):
    """Point-in-convex-quad via edge cross products; boundary counts inside."""
    pos = False
    neg = False
    for i in range(4):
        j = (i + 1) % 4
        cx = quad[j, 0] - quad[i, 0]
        cy = quad[j, 1] - quad[i, 1]
        s = cx * (y - quad[i, 1]) - cy * (x - quad[i, 0])
        if s > 0.0:
            pos = True
        elif s < 0.0:
            neg = True
    return not (pos and neg)


@njit(cache=True)
def quad_inside_union_k(crop, qa, qb, samples):
    """True iff every boundary sample of crop lies in qa or qb."""
    for i in range(4):
        j = (i + 1) % 4
        x0 = crop[i, 0]
        y0 = crop[i, 1]
        dx = (crop[j, 0] - x0) / samples
        dy = (crop[j, 1] - y0) / samples
        for s in range(samples):
            x = x0 + dx * s
            y = y0 + dy * s
            if not point_in_quad_k(qa, x, y) and not point_in_quad_k(qb, x, y):
                return False
    return True


@njit(cache=True)
def conv_inside_k(p, ox, oy, ow, oh, fw, fh):
    """Conventional inside test: crop quad within [0,fw]x[0,fh] (convexity)."""
    quad, ok = crop_quad_k(p, ox, oy, ow, oh)
    if not ok:
        return False
    for i in range(4):
        x = quad[i, 0]
        y = quad[i, 1]
        if x < 0.0 or x > fw or y < 0.0 or y > fh:
            return False
    return True


@njit(cache=True)
def _edge_exits_main(quad, edge, fw, fh, samples):
    i = edge
    j = (edge + 1) % 4
    x0 = quad[i, 0]
    y0 = quad[i, 1]
    dx = (quad[j, 0] - x0) / samples
    dy = (quad[j, 1] - y0) / samples
    for s in range(samples + 1):
        x = x0 + dx * s
        y = y0 + dy * s
        if x < 0.0 or x > fw or y < 0.0 or y > fh:
            return True
    return False


@njit(cache=True)
def stitching_choice_k(
    p,
    ox,
    oy,
    ow,
    oh,
    fw,
    fh,
    has_prev,
    sub_prev,
    has_next,
    sub_next,
    samples,
):
    """Inside decision for the stitching stabilizer.

    Order: plain crop inside the main frame, then the deficit edge pattern
    (two opposite edges or all four cannot be sealed by one open seam and
    fail), then the previous-frame union, then the next-frame union.
    """
    if conv_inside_k(p, ox, oy, ow, oh, fw, fh):
        return CHOICE_NO_STITCH

    quad, ok = crop_quad_k(p, ox, oy, ow, oh)
    if not ok:
        return CHOICE_FAIL

    # Crop quad edge i is the image of output rect edge i (top,right,bottom,left).
    t0 = _edge_exits_main(quad, 0, fw, fh, samples)
    t1 = _edge_exits_main(quad, 1, fw, fh, samples)
    t2 = _edge_exits_main(quad, 2, fw, fh, samples)
    t3 = _edge_exits_main(quad, 3, fw, fh, samples)
    n_touch = int(t0) + int(t1) + int(t2) + int(t3)
    if n_touch == 4 or (n_touch == 2 and ((t0 and t2) or (t1 and t3))):
        return CHOICE_FAIL

    main = np.empty((4, 2))
    main[0, 0], main[0, 1] = 0.0, 0.0
    main[1, 0], main[1, 1] = fw, 0.0
    main[2, 0], main[2, 1] = fw, fh
    main[3, 0], main[3, 1] = 0.0, fh

    if has_prev and quad_inside_union_k(quad, main, sub_prev, samples):
        return CHOICE_STITCH_PREV
    if has_next and quad_inside_union_k(quad, main, sub_next, samples):
        return CHOICE_STITCH_NEXT
    return CHOICE_FAIL


@njit(cache=True)
def ensure_inside_k(
    p,
    kind,
    ox,
    oy,
    ow,
    oh,
    fw,
    fh,
    has_prev,
    sub_prev,
    has_next,
    sub_next,
    samples,
    eps,
    max_iter,
):
    """Blend p toward identity until the inside predicate holds.

    kind 0 is the conventional predicate, kind 1 the stitching one.  Returns
    (p, iterations, choice, ok); ok is False when max_iter was exhausted.
    """
    out = mat3_normalize(p)
    it = 0
    while True:
        if kind == 0:
            if conv_inside_k(out, ox, oy, ow, oh, fw, fh):
                choice = CHOICE_NO_STITCH
            else:
                choice = CHOICE_FAIL
        else:
            choice = stitching_choice_k(
                out, ox, oy, ow, oh, fw, fh, has_prev, sub_prev, has_next, sub_next, samples
            )
        if choice != CHOICE_FAIL:
            return out, it, choice, True
        if it >= max_iter:
            return out, it, choice, False
        for i in range(3):
            for j in range(3):
                out[i, j] = (1.0 - eps) * out[i, j]
        out[0, 0] += eps
        out[1, 1] += eps
        out[2, 2] += eps
        it += 1


# ---------------------------------------------------------------------------
# Batched candidate expansion for the hyperlapse planner
# ---------------------------------------------------------------------------


@njit(cache=True)
def expand_candidates(
    parent_q,
    cand_parent,
    cand_veloc,
    cand_turn_cost,
    n_mat,
    d_mat,
    eta,
    fl,
    px,
    py,
    ox,
    oy,
    ow,
    oh,
    fw,
    fh,
    kind,
    has_prev,
    sub_prev,
    has_next,
    sub_next,
    samples,
    eps,
    max_iter,
    eps_yaw,
    eps_pitch,
    eps_roll,
    eps_outside,
):
    """Run the virtual stabilizer for every candidate of one search step.

    parent_q is (P,3,3); cand_* describe the candidates (parent index, forced
    camera velocities, turn cost).  Returns per-candidate new q, added cost,
    ensure-inside flag and stitch choice.
    """
    n_cand = cand_parent.shape[0]
    q_out = np.empty((n_cand, 3, 3))
    add_cost = np.empty(n_cand)
    ei_flag = np.zeros(n_cand, dtype=np.uint8)
    choice_out = np.zeros(n_cand, dtype=np.uint8)

    d_inv = mat3_inv(d_mat)
    for c in range(n_cand):
        qp = parent_q[cand_parent[c]]
        q, yaw, pitch, roll = update_q_k(
            qp, n_mat, cand_veloc[c, 0], cand_veloc[c, 1], cand_veloc[c, 2], eta, fl, px, py
        )
        p = mat3_normalize(mat3_mul(d_mat, q))
        p, iters, choice, ok = ensure_inside_k(
            p,
            kind,
            ox,
            oy,
            ow,
            oh,
            fw,
            fh,
            has_prev,
            sub_prev,
            has_next,
            sub_next,
            samples,
            eps,
            max_iter,
        )
        if iters > 0:
            q = mat3_normalize(mat3_mul(d_inv, p))
            yaw, pitch, roll = estimate_angles_k(q, fl, px, py)
            ei_flag[c] = 1
        choice_out[c] = choice
        for i in range(3):
            for j in range(3):
                q_out[c, i, j] = q[i, j]
        cost = cand_turn_cost[c]
        cost += eps_yaw * abs(yaw) + eps_pitch * abs(pitch) + eps_roll * abs(roll)
        if iters > 0:
            cost += eps_outside
        if not ok:
            cost += 1e18  # correction failed to converge; never pick this node
        add_cost[c] = cost
    return q_out, add_cost, ei_flag, choice_out


# ---------------------------------------------------------------------------
# Image kernels: bilinear warp and SAD block search
# ---------------------------------------------------------------------------


@njit(cache=True)
def warp_bilinear_k(src, h, out_h, out_w):
    """Inverse-map src through h (output -> source) with bilinear sampling.

    Validity is the half-open source domain [0, W) x [0, H); coordinates in
    the trailing sub-pixel skirt clamp to the last sample row/column so that
    every crop the inside predicates accept is renderable without holes.
    """
    sh, sw = src.shape
    out = np.zeros((out_h, out_w), dtype=np.uint8)
    valid = np.zeros((out_h, out_w), dtype=np.bool_)
    for y in range(out_h):
        for x in range(out_w):
            w = h[2, 0] * x + h[2, 1] * y + h[2, 2]
            if w <= 1e-12:
                continue
            sx = (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / w
            sy = (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / w
            if sx < 0.0 or sx >= sw or sy < 0.0 or sy >= sh:
                continue
            cx = sx
            cy = sy
            if cx > sw - 1.0:
                cx = sw - 1.0
            if cy > sh - 1.0:
                cy = sh - 1.0
            x0 = int(cx)
            y0 = int(cy)
            if x0 > sw - 2:
                x0 = sw - 2
            if y0 > sh - 2:
                y0 = sh - 2
            if sw == 1:
                x0 = 0
            if sh == 1:
                y0 = 0
            fx = cx - x0
            fy = cy - y0
            x1 = x0 + 1 if x0 + 1 < sw else x0
            y1 = y0 + 1 if y0 + 1 < sh else y0
            v00 = float(src[y0, x0])
            v01 = float(src[y0, x1])
            v10 = float(src[y1, x0])
            v11 = float(src[y1, x1])
            v = (
                v00 * (1.0 - fx) * (1.0 - fy)
                + v01 * fx * (1.0 - fy)
                + v10 * (1.0 - fx) * fy
                + v11 * fx * fy
            )
            out[y, x] = np.uint8(int(v + 0.5))
            valid[y, x] = True
    return out, valid


@njit(cache=True)
def sad_search_k(prev, curr, px, py, init_x, init_y, radius, block):
    """Exhaustive SAD search around px,py + init over a (2r+1)^2 window.

    Ties resolve to the smallest total displacement, then first in row-major
    scan order.  Returns (dst_x, dst_y, sad, found).
    """
    ph, pw = prev.shape
    ch, cw = curr.shape
    lo = -(block // 2)
    hi = block - block // 2
    if px + lo < 0 or py + lo < 0 or px + hi > pw or py + hi > ph:
        return 0, 0, 0, False

    best = np.int64(1) << 60
    best_d2 = np.int64(1) << 60
    best_x = 0
    best_y = 0
    found = False
    for dy in range(-radius, radius + 1):
        ty = py + init_y + dy
        if ty + lo < 0 or ty + hi > ch:
            continue
        for dx in range(-radius, radius + 1):
            tx = px + init_x + dx
            if tx + lo < 0 or tx + hi > cw:
                continue
            sad = np.int64(0)
            if found:
                # abort once the partial sum strictly exceeds the incumbent:
                # such a candidate can neither win nor tie
                for u in range(lo, hi):
                    for v in range(lo, hi):
                        diff = np.int64(prev[py + u, px + v]) - np.int64(curr[ty + u, tx + v])
                        if diff < 0:
                            diff = -diff
                        sad += diff
                    if sad > best:
                        break
                if sad > best:
                    continue
            else:
                for u in range(lo, hi):
                    for v in range(lo, hi):
                        diff = np.int64(prev[py + u, px + v]) - np.int64(curr[ty + u, tx + v])
                        if diff < 0:
                            diff = -diff
                        sad += diff
            ddx = init_x + dx
            ddy = init_y + dy
            d2 = np.int64(ddx * ddx + ddy * ddy)
            if (not found) or sad < best or (sad == best and d2 < best_d2):
                best = sad
                best_d2 = d2
                best_x = tx
                best_y = ty
                found = True
    return best_x, best_y, int(best), found


@njit(cache=True)
def track_points_k(prev, curr, pts, inits, radius, block):
    """SAD-track a batch of points; returns (dst(K,2), sad(K,), ok(K,))."""
    k = pts.shape[0]
    dst = np.zeros((k, 2), dtype=np.int64)
    sads = np.zeros(k, dtype=np.int64)
    ok = np.zeros(k, dtype=np.bool_)
    for i in range(k):
        bx, by, s, found = sad_search_k(
            prev, curr, pts[i, 0], pts[i, 1], inits[i, 0], inits[i, 1], radius, block
        )
        if found:
            dst[i, 0] = bx
            dst[i, 1] = by
            sads[i] = s
            ok[i] = True
    return dst, sads, ok
