"""Jit-compiled inner loops of the floating-base simulator.

Everything here works on the flat arrays packed by KinematicTree; the engine
module provides the typed wrappers. All frames are world frames unless noted.
In the external wrench arrays bodies are indexed 0 = base, 1 + i = link i;
elsewhere link arrays are indexed by link.

The hot kernels write into caller-provided buffers and avoid temporaries, so
the batch stepper performs no allocation per substep.

Momentum handling: generalized velocities advance with a semi-implicit Euler
rule, and the base velocity stored at every control-step boundary (every
substep for the single-step API) is re-solved from the momentum map at the
new configuration. The (linear, angular-about-origin) momentum at reported
states therefore equals the initial momentum plus the external impulse
exactly, up to linear-solve roundoff.
"""

import numpy as np
from numba import njit

# ---------------------------------------------------------------- helpers


@njit(cache=True)
def _quat_to_mat(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - w * z)
    R[0, 2] = 2.0 * (x * z + w * y)
    R[1, 0] = 2.0 * (x * y + w * z)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - w * x)
    R[2, 0] = 2.0 * (x * z - w * y)
    R[2, 1] = 2.0 * (y * z + w * x)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


@njit(cache=True)
def _rotvec_to_quat(vx, vy, vz):
    angle = np.sqrt(vx * vx + vy * vy + vz * vz)
    q = np.empty(4)
    if angle < 1e-12:
        q[0] = 1.0
        q[1] = 0.5 * vx
        q[2] = 0.5 * vy
        q[3] = 0.5 * vz
    else:
        half = 0.5 * angle
        s = np.sin(half) / angle
        q[0] = np.cos(half)
        q[1] = s * vx
        q[2] = s * vy
        q[3] = s * vz
    n = np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return q / n


@njit(cache=True)
def _quat_mul(a, b):
    out = np.empty(4)
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]
    return out


# ------------------------------------------------- in-place kinematics


@njit(cache=True)
def _fk(parent, mount_pos, mount_rot, axis_local, pb, Rb, q, R, p, aw):
    """World link rotations R, joint origins p, world joint axes aw."""
    nb = q.shape[0]
    for i in range(nb):
        par = parent[i]
        if par < 0:
            P = Rb
            px, py, pz = pb[0], pb[1], pb[2]
        else:
            P = R[par]
            px, py, pz = p[par, 0], p[par, 1], p[par, 2]
        p00, p01, p02 = P[0, 0], P[0, 1], P[0, 2]
        p10, p11, p12 = P[1, 0], P[1, 1], P[1, 2]
        p20, p21, p22 = P[2, 0], P[2, 1], P[2, 2]
        Mr = mount_rot[i]
        m00, m01, m02 = Mr[0, 0], Mr[0, 1], Mr[0, 2]
        m10, m11, m12 = Mr[1, 0], Mr[1, 1], Mr[1, 2]
        m20, m21, m22 = Mr[2, 0], Mr[2, 1], Mr[2, 2]
        # A = parent rotation times mount rotation
        a00 = p00 * m00 + p01 * m10 + p02 * m20
        a01 = p00 * m01 + p01 * m11 + p02 * m21
        a02 = p00 * m02 + p01 * m12 + p02 * m22
        a10 = p10 * m00 + p11 * m10 + p12 * m20
        a11 = p10 * m01 + p11 * m11 + p12 * m21
        a12 = p10 * m02 + p11 * m12 + p12 * m22
        a20 = p20 * m00 + p21 * m10 + p22 * m20
        a21 = p20 * m01 + p21 * m11 + p22 * m21
        a22 = p20 * m02 + p21 * m12 + p22 * m22
        # joint rotation about the local axis (Rodrigues)
        ax, ay, az = axis_local[i, 0], axis_local[i, 1], axis_local[i, 2]
        c = np.cos(q[i])
        s = np.sin(q[i])
        C = 1.0 - c
        g00 = c + ax * ax * C
        g01 = ax * ay * C - az * s
        g02 = ax * az * C + ay * s
        g10 = ay * ax * C + az * s
        g11 = c + ay * ay * C
        g12 = ay * az * C - ax * s
        g20 = az * ax * C - ay * s
        g21 = az * ay * C + ax * s
        g22 = c + az * az * C
        R[i, 0, 0] = a00 * g00 + a01 * g10 + a02 * g20
        R[i, 0, 1] = a00 * g01 + a01 * g11 + a02 * g21
        R[i, 0, 2] = a00 * g02 + a01 * g12 + a02 * g22
        R[i, 1, 0] = a10 * g00 + a11 * g10 + a12 * g20
        R[i, 1, 1] = a10 * g01 + a11 * g11 + a12 * g21
        R[i, 1, 2] = a10 * g02 + a11 * g12 + a12 * g22
        R[i, 2, 0] = a20 * g00 + a21 * g10 + a22 * g20
        R[i, 2, 1] = a20 * g01 + a21 * g11 + a22 * g21
        R[i, 2, 2] = a20 * g02 + a21 * g12 + a22 * g22
        mx, my, mz = mount_pos[i, 0], mount_pos[i, 1], mount_pos[i, 2]
        p[i, 0] = px + p00 * mx + p01 * my + p02 * mz
        p[i, 1] = py + p10 * mx + p11 * my + p12 * mz
        p[i, 2] = pz + p20 * mx + p21 * my + p22 * mz
        aw[i, 0] = a00 * ax + a01 * ay + a02 * az
        aw[i, 1] = a10 * ax + a11 * ay + a12 * az
        aw[i, 2] = a20 * ax + a21 * ay + a22 * az


@njit(cache=True)
def _velocities(parent, com, R, p, aw, pb, vb, wb, qdot, w, vo, rc, vc):
    """Angular velocity, joint-origin velocity, world COM and COM velocity
    of every link."""
    nb = qdot.shape[0]
    for i in range(nb):
        par = parent[i]
        if par < 0:
            wpx, wpy, wpz = wb[0], wb[1], wb[2]
            vpx, vpy, vpz = vb[0], vb[1], vb[2]
            ppx, ppy, ppz = pb[0], pb[1], pb[2]
        else:
            wpx, wpy, wpz = w[par, 0], w[par, 1], w[par, 2]
            vpx, vpy, vpz = vo[par, 0], vo[par, 1], vo[par, 2]
            ppx, ppy, ppz = p[par, 0], p[par, 1], p[par, 2]
        rx = p[i, 0] - ppx
        ry = p[i, 1] - ppy
        rz = p[i, 2] - ppz
        vo[i, 0] = vpx + wpy * rz - wpz * ry
        vo[i, 1] = vpy + wpz * rx - wpx * rz
        vo[i, 2] = vpz + wpx * ry - wpy * rx
        qi = qdot[i]
        wx = wpx + qi * aw[i, 0]
        wy = wpy + qi * aw[i, 1]
        wz = wpz + qi * aw[i, 2]
        w[i, 0] = wx
        w[i, 1] = wy
        w[i, 2] = wz
        cx, cy, cz = com[i, 0], com[i, 1], com[i, 2]
        dx = R[i, 0, 0] * cx + R[i, 0, 1] * cy + R[i, 0, 2] * cz
        dy = R[i, 1, 0] * cx + R[i, 1, 1] * cy + R[i, 1, 2] * cz
        dz = R[i, 2, 0] * cx + R[i, 2, 1] * cy + R[i, 2, 2] * cz
        rc[i, 0] = p[i, 0] + dx
        rc[i, 1] = p[i, 1] + dy
        rc[i, 2] = p[i, 2] + dz
        vc[i, 0] = vo[i, 0] + wy * dz - wz * dy
        vc[i, 1] = vo[i, 1] + wz * dx - wx * dz
        vc[i, 2] = vo[i, 2] + wx * dy - wy * dx


@njit(cache=True)
def _world_inertia(Rv, I, out):
    """out = Rv I Rv^T for one body."""
    t00 = Rv[0, 0] * I[0, 0] + Rv[0, 1] * I[1, 0] + Rv[0, 2] * I[2, 0]
    t01 = Rv[0, 0] * I[0, 1] + Rv[0, 1] * I[1, 1] + Rv[0, 2] * I[2, 1]
    t02 = Rv[0, 0] * I[0, 2] + Rv[0, 1] * I[1, 2] + Rv[0, 2] * I[2, 2]
    t10 = Rv[1, 0] * I[0, 0] + Rv[1, 1] * I[1, 0] + Rv[1, 2] * I[2, 0]
    t11 = Rv[1, 0] * I[0, 1] + Rv[1, 1] * I[1, 1] + Rv[1, 2] * I[2, 1]
    t12 = Rv[1, 0] * I[0, 2] + Rv[1, 1] * I[1, 2] + Rv[1, 2] * I[2, 2]
    t20 = Rv[2, 0] * I[0, 0] + Rv[2, 1] * I[1, 0] + Rv[2, 2] * I[2, 0]
    t21 = Rv[2, 0] * I[0, 1] + Rv[2, 1] * I[1, 1] + Rv[2, 2] * I[2, 1]
    t22 = Rv[2, 0] * I[0, 2] + Rv[2, 1] * I[1, 2] + Rv[2, 2] * I[2, 2]
    out[0, 0] = t00 * Rv[0, 0] + t01 * Rv[0, 1] + t02 * Rv[0, 2]
    out[0, 1] = t00 * Rv[1, 0] + t01 * Rv[1, 1] + t02 * Rv[1, 2]
    out[0, 2] = t00 * Rv[2, 0] + t01 * Rv[2, 1] + t02 * Rv[2, 2]
    out[1, 0] = t10 * Rv[0, 0] + t11 * Rv[0, 1] + t12 * Rv[0, 2]
    out[1, 1] = t10 * Rv[1, 0] + t11 * Rv[1, 1] + t12 * Rv[1, 2]
    out[1, 2] = t10 * Rv[2, 0] + t11 * Rv[2, 1] + t12 * Rv[2, 2]
    out[2, 0] = t20 * Rv[0, 0] + t21 * Rv[0, 1] + t22 * Rv[0, 2]
    out[2, 1] = t20 * Rv[1, 0] + t21 * Rv[1, 1] + t22 * Rv[1, 2]
    out[2, 2] = t20 * Rv[2, 0] + t21 * Rv[2, 1] + t22 * Rv[2, 2]


@njit(cache=True)
def _fill_body_jac(bi, parent, aw, p, pb, rci, Jv, Jw, cols):
    """COM Jacobians of body bi (-1 = base) into Jv/Jw; returns the number
    of occupied columns, whose indices go into cols. Caller must re-zero
    those columns afterwards."""
    for a in range(6):
        cols[a] = a
    dx = rci[0] - pb[0]
    dy = rci[1] - pb[1]
    dz = rci[2] - pb[2]
    Jv[0, 0] = 1.0
    Jv[1, 1] = 1.0
    Jv[2, 2] = 1.0
    # -skew(d) block: velocity of the COM from the base angular rate
    Jv[0, 4] = dz
    Jv[0, 5] = -dy
    Jv[1, 3] = -dz
    Jv[1, 5] = dx
    Jv[2, 3] = dy
    Jv[2, 4] = -dx
    Jw[0, 3] = 1.0
    Jw[1, 4] = 1.0
    Jw[2, 5] = 1.0
    ncol = 6
    j = bi
    while j >= 0:
        c = 6 + j
        cols[ncol] = c
        ncol += 1
        lx = rci[0] - p[j, 0]
        ly = rci[1] - p[j, 1]
        lz = rci[2] - p[j, 2]
        ax, ay, az = aw[j, 0], aw[j, 1], aw[j, 2]
        Jv[0, c] = ay * lz - az * ly
        Jv[1, c] = az * lx - ax * lz
        Jv[2, c] = ax * ly - ay * lx
        Jw[0, c] = ax
        Jw[1, c] = ay
        Jw[2, c] = az
        j = parent[j]
    return ncol


@njit(cache=True)
def _mass_bias(parent, mass, com, inertia, bmass, bcom, binertia,
               pb, Rb, vb, wb, R, p, aw, w, rc, qdot, tau, fext, text,
               M, rhs, Jv, Jw, cols, ao, al, Iw):
    """Assemble the generalized mass matrix M and right-hand side Q - c
    into the provided buffers (M, rhs zeroed here; Jv/Jw must come in
    zeroed and leave zeroed; cols, ao, al, Iw are scratch)."""
    nb = mass.shape[0]
    N = 6 + nb
    for a in range(N):
        rhs[a] = 0.0
        for b in range(N):
            M[a, b] = 0.0

    # velocity-product (zero-acceleration) terms of joint origins / links
    for i in range(nb):
        par = parent[i]
        if par < 0:
            ppx, ppy, ppz = pb[0], pb[1], pb[2]
            axo, ayo, azo = 0.0, 0.0, 0.0
            alx, aly, alz = 0.0, 0.0, 0.0
            wpx, wpy, wpz = wb[0], wb[1], wb[2]
        else:
            ppx, ppy, ppz = p[par, 0], p[par, 1], p[par, 2]
            axo, ayo, azo = ao[par, 0], ao[par, 1], ao[par, 2]
            alx, aly, alz = al[par, 0], al[par, 1], al[par, 2]
            wpx, wpy, wpz = w[par, 0], w[par, 1], w[par, 2]
        rx = p[i, 0] - ppx
        ry = p[i, 1] - ppy
        rz = p[i, 2] - ppz
        # t = wp x dr, then ao_i = ao_p + al_p x dr + wp x t
        tx = wpy * rz - wpz * ry
        ty = wpz * rx - wpx * rz
        tz = wpx * ry - wpy * rx
        ao[i, 0] = axo + aly * rz - alz * ry + wpy * tz - wpz * ty
        ao[i, 1] = ayo + alz * rx - alx * rz + wpz * tx - wpx * tz
        ao[i, 2] = azo + alx * ry - aly * rx + wpx * ty - wpy * tx
        qi = qdot[i]
        al[i, 0] = alx + qi * (wpy * aw[i, 2] - wpz * aw[i, 1])
        al[i, 1] = aly + qi * (wpz * aw[i, 0] - wpx * aw[i, 2])
        al[i, 2] = alz + qi * (wpx * aw[i, 1] - wpy * aw[i, 0])

    dcbx = Rb[0, 0] * bcom[0] + Rb[0, 1] * bcom[1] + Rb[0, 2] * bcom[2]
    dcby = Rb[1, 0] * bcom[0] + Rb[1, 1] * bcom[1] + Rb[1, 2] * bcom[2]
    dcbz = Rb[2, 0] * bcom[0] + Rb[2, 1] * bcom[1] + Rb[2, 2] * bcom[2]
    rcb = np.empty(3)
    rcb[0] = pb[0] + dcbx
    rcb[1] = pb[1] + dcby
    rcb[2] = pb[2] + dcbz

    for bi in range(-1, nb):
        if bi < 0:
            m = bmass
            rci = rcb
            _world_inertia(Rb, binertia, Iw)
            alx, aly, alz = 0.0, 0.0, 0.0
            wx, wy, wz = wb[0], wb[1], wb[2]
            # acc of base COM with zero generalized acceleration
            tx = wy * dcbz - wz * dcby
            ty = wz * dcbx - wx * dcbz
            tz = wx * dcby - wy * dcbx
            accx = wy * tz - wz * ty
            accy = wz * tx - wx * tz
            accz = wx * ty - wy * tx
            fx_, fy_, fz_ = fext[0, 0], fext[0, 1], fext[0, 2]
            tx_, ty_, tz_ = text[0, 0], text[0, 1], text[0, 2]
        else:
            m = mass[bi]
            rci = rc[bi]
            _world_inertia(R[bi], inertia[bi], Iw)
            alx, aly, alz = al[bi, 0], al[bi, 1], al[bi, 2]
            wx, wy, wz = w[bi, 0], w[bi, 1], w[bi, 2]
            dx = rci[0] - p[bi, 0]
            dy = rci[1] - p[bi, 1]
            dz = rci[2] - p[bi, 2]
            tx = wy * dz - wz * dy
            ty = wz * dx - wx * dz
            tz = wx * dy - wy * dx
            accx = ao[bi, 0] + aly * dz - alz * dy + wy * tz - wz * ty
            accy = ao[bi, 1] + alz * dx - alx * dz + wz * tx - wx * tz
            accz = ao[bi, 2] + alx * dy - aly * dx + wx * ty - wy * tx
            fx_, fy_, fz_ = fext[bi + 1, 0], fext[bi + 1, 1], fext[bi + 1, 2]
            tx_, ty_, tz_ = text[bi + 1, 0], text[bi + 1, 1], text[bi + 1, 2]
        ncol = _fill_body_jac(bi, parent, aw, p, pb, rci, Jv, Jw, cols)
        fbx = m * accx - fx_
        fby = m * accy - fy_
        fbz = m * accz - fz_
        iwwx = Iw[0, 0] * wx + Iw[0, 1] * wy + Iw[0, 2] * wz
        iwwy = Iw[1, 0] * wx + Iw[1, 1] * wy + Iw[1, 2] * wz
        iwwz = Iw[2, 0] * wx + Iw[2, 1] * wy + Iw[2, 2] * wz
        nbx = (Iw[0, 0] * alx + Iw[0, 1] * aly + Iw[0, 2] * alz
               + wy * iwwz - wz * iwwy - tx_)
        nby = (Iw[1, 0] * alx + Iw[1, 1] * aly + Iw[1, 2] * alz
               + wz * iwwx - wx * iwwz - ty_)
        nbz = (Iw[2, 0] * alx + Iw[2, 1] * aly + Iw[2, 2] * alz
               + wx * iwwy - wy * iwwx - tz_)
        for a in range(ncol):
            ca = cols[a]
            rhs[ca] -= (Jv[0, ca] * fbx + Jv[1, ca] * fby + Jv[2, ca] * fbz
                        + Jw[0, ca] * nbx + Jw[1, ca] * nby + Jw[2, ca] * nbz)
            wv0 = m * Jv[0, ca]
            wv1 = m * Jv[1, ca]
            wv2 = m * Jv[2, ca]
            ww0 = Iw[0, 0] * Jw[0, ca] + Iw[0, 1] * Jw[1, ca] + Iw[0, 2] * Jw[2, ca]
            ww1 = Iw[1, 0] * Jw[0, ca] + Iw[1, 1] * Jw[1, ca] + Iw[1, 2] * Jw[2, ca]
            ww2 = Iw[2, 0] * Jw[0, ca] + Iw[2, 1] * Jw[1, ca] + Iw[2, 2] * Jw[2, ca]
            for b in range(a, ncol):
                cb = cols[b]
                val = (wv0 * Jv[0, cb] + wv1 * Jv[1, cb] + wv2 * Jv[2, cb]
                       + ww0 * Jw[0, cb] + ww1 * Jw[1, cb] + ww2 * Jw[2, cb])
                M[ca, cb] += val
                if cb != ca:
                    M[cb, ca] += val
        for a in range(ncol):
            ca = cols[a]
            Jv[0, ca] = 0.0
            Jv[1, ca] = 0.0
            Jv[2, ca] = 0.0
            Jw[0, ca] = 0.0
            Jw[1, ca] = 0.0
            Jw[2, ca] = 0.0
    for i in range(nb):
        rhs[6 + i] += tau[i]


@njit(cache=True)
def _momentum_matrix(parent, mass, com, inertia, bmass, bcom, binertia,
                     pb, Rb, R, p, aw, A, Jv, Jw, cols, Iw):
    """6 x N map A with A u = (linear momentum, angular momentum about the
    world origin), assembled into the A buffer."""
    nb = mass.shape[0]
    N = 6 + nb
    for a in range(6):
        for b in range(N):
            A[a, b] = 0.0
    rcb = np.empty(3)
    rcb[0] = pb[0] + Rb[0, 0] * bcom[0] + Rb[0, 1] * bcom[1] + Rb[0, 2] * bcom[2]
    rcb[1] = pb[1] + Rb[1, 0] * bcom[0] + Rb[1, 1] * bcom[1] + Rb[1, 2] * bcom[2]
    rcb[2] = pb[2] + Rb[2, 0] * bcom[0] + Rb[2, 1] * bcom[1] + Rb[2, 2] * bcom[2]
    rci_l = np.empty(3)
    for bi in range(-1, nb):
        if bi < 0:
            m = bmass
            rci = rcb
            _world_inertia(Rb, binertia, Iw)
        else:
            m = mass[bi]
            cx, cy, cz = com[bi, 0], com[bi, 1], com[bi, 2]
            rci_l[0] = p[bi, 0] + R[bi, 0, 0] * cx + R[bi, 0, 1] * cy + R[bi, 0, 2] * cz
            rci_l[1] = p[bi, 1] + R[bi, 1, 0] * cx + R[bi, 1, 1] * cy + R[bi, 1, 2] * cz
            rci_l[2] = p[bi, 2] + R[bi, 2, 0] * cx + R[bi, 2, 1] * cy + R[bi, 2, 2] * cz
            rci = rci_l
            _world_inertia(R[bi], inertia[bi], Iw)
        ncol = _fill_body_jac(bi, parent, aw, p, pb, rci, Jv, Jw, cols)
        for a in range(ncol):
            ca = cols[a]
            v0 = m * Jv[0, ca]
            v1 = m * Jv[1, ca]
            v2 = m * Jv[2, ca]
            A[0, ca] += v0
            A[1, ca] += v1
            A[2, ca] += v2
            A[3, ca] += (rci[1] * v2 - rci[2] * v1
                         + Iw[0, 0] * Jw[0, ca] + Iw[0, 1] * Jw[1, ca]
                         + Iw[0, 2] * Jw[2, ca])
            A[4, ca] += (rci[2] * v0 - rci[0] * v2
                         + Iw[1, 0] * Jw[0, ca] + Iw[1, 1] * Jw[1, ca]
                         + Iw[1, 2] * Jw[2, ca])
            A[5, ca] += (rci[0] * v1 - rci[1] * v0
                         + Iw[2, 0] * Jw[0, ca] + Iw[2, 1] * Jw[1, ca]
                         + Iw[2, 2] * Jw[2, ca])
        for a in range(ncol):
            ca = cols[a]
            Jv[0, ca] = 0.0
            Jv[1, ca] = 0.0
            Jv[2, ca] = 0.0
            Jw[0, ca] = 0.0
            Jw[1, ca] = 0.0
            Jw[2, ca] = 0.0


@njit(cache=True)
def _momentum_from_vel(mass, bmass, bcom, binertia, inertia,
                       pb, Rb, vb, wb, R, w, rc, vc, Iw, h):
    """Momentum about the world origin from per-body COM velocities."""
    nb = mass.shape[0]
    dcbx = Rb[0, 0] * bcom[0] + Rb[0, 1] * bcom[1] + Rb[0, 2] * bcom[2]
    dcby = Rb[1, 0] * bcom[0] + Rb[1, 1] * bcom[1] + Rb[1, 2] * bcom[2]
    dcbz = Rb[2, 0] * bcom[0] + Rb[2, 1] * bcom[1] + Rb[2, 2] * bcom[2]
    rbx = pb[0] + dcbx
    rby = pb[1] + dcby
    rbz = pb[2] + dcbz
    vcbx = vb[0] + wb[1] * dcbz - wb[2] * dcby
    vcby = vb[1] + wb[2] * dcbx - wb[0] * dcbz
    vcbz = vb[2] + wb[0] * dcby - wb[1] * dcbx
    _world_inertia(Rb, binertia, Iw)
    px = bmass * vcbx
    py = bmass * vcby
    pz = bmass * vcbz
    h[0] = px
    h[1] = py
    h[2] = pz
    h[3] = rby * pz - rbz * py + Iw[0, 0] * wb[0] + Iw[0, 1] * wb[1] + Iw[0, 2] * wb[2]
    h[4] = rbz * px - rbx * pz + Iw[1, 0] * wb[0] + Iw[1, 1] * wb[1] + Iw[1, 2] * wb[2]
    h[5] = rbx * py - rby * px + Iw[2, 0] * wb[0] + Iw[2, 1] * wb[1] + Iw[2, 2] * wb[2]
    for i in range(nb):
        m = mass[i]
        px = m * vc[i, 0]
        py = m * vc[i, 1]
        pz = m * vc[i, 2]
        _world_inertia(R[i], inertia[i], Iw)
        h[0] += px
        h[1] += py
        h[2] += pz
        h[3] += (rc[i, 1] * pz - rc[i, 2] * py
                 + Iw[0, 0] * w[i, 0] + Iw[0, 1] * w[i, 1] + Iw[0, 2] * w[i, 2])
        h[4] += (rc[i, 2] * px - rc[i, 0] * pz
                 + Iw[1, 0] * w[i, 0] + Iw[1, 1] * w[i, 1] + Iw[1, 2] * w[i, 2])
        h[5] += (rc[i, 0] * py - rc[i, 1] * px
                 + Iw[2, 0] * w[i, 0] + Iw[2, 1] * w[i, 1] + Iw[2, 2] * w[i, 2])


# ---------------------------------------------------------- linear algebra


@njit(cache=True)
def _chol_solve_inplace(M, b, n):
    """Solve M x = b for SPD M; overwrites M with its Cholesky factor and b
    with the solution. Returns False if M is not positive definite."""
    for j in range(n):
        s = M[j, j]
        for k in range(j):
            s -= M[j, k] * M[j, k]
        if s <= 0.0:
            return False
        d = np.sqrt(s)
        M[j, j] = d
        for i in range(j + 1, n):
            s2 = M[i, j]
            for k in range(j):
                s2 -= M[i, k] * M[j, k]
            M[i, j] = s2 / d
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= M[i, k] * b[k]
        b[i] = s / M[i, i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= M[k, i] * b[k]
        b[i] = s / M[i, i]
    return True


@njit(cache=True)
def _gauss_solve_inplace(A, b, n):
    """Solve A x = b with partial pivoting; overwrites A and b (solution in
    b). Returns False on a singular pivot."""
    for col in range(n):
        piv = col
        big = abs(A[col, col])
        for r in range(col + 1, n):
            v = abs(A[r, col])
            if v > big:
                big = v
                piv = r
        if big == 0.0:
            return False
        if piv != col:
            for c2 in range(col, n):
                tmp = A[col, c2]
                A[col, c2] = A[piv, c2]
                A[piv, c2] = tmp
            tmp = b[col]
            b[col] = b[piv]
            b[piv] = tmp
        inv = 1.0 / A[col, col]
        for r in range(col + 1, n):
            f = A[r, col] * inv
            if f != 0.0:
                for c2 in range(col + 1, n):
                    A[r, c2] -= f * A[col, c2]
                b[r] -= f * b[col]
                A[r, col] = 0.0
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= A[i, k] * b[k]
        b[i] = s / A[i, i]
    return True


@njit(cache=True)
def _reduced_accel(M, rhs, locked):
    """Solve M udot = rhs with locked joints held at zero acceleration.
    Reference path; allocates its own reduced system."""
    N = M.shape[0]
    nb = N - 6
    nfree = 6
    for i in range(nb):
        if not locked[i]:
            nfree += 1
    free = np.empty(nfree, dtype=np.int64)
    for a in range(6):
        free[a] = a
    k = 6
    for i in range(nb):
        if not locked[i]:
            free[k] = 6 + i
            k += 1
    Mr = np.empty((nfree, nfree))
    br = np.empty(nfree)
    for a in range(nfree):
        br[a] = rhs[free[a]]
        for b in range(nfree):
            Mr[a, b] = M[free[a], free[b]]
    x = np.linalg.solve(Mr, br)
    udot = np.zeros(N)
    for a in range(nfree):
        udot[free[a]] = x[a]
    return udot


# -------------------------------------------------- single reference step


@njit(cache=True)
def _substep(parent, mount_pos, mount_rot, axis_local,
             mass, com, inertia, bmass, bcom, binertia,
             q_max, qdot_max, tau_max,
             pb, qb, vb, wb, q, qdot,
             tau, fext, text, locked, dt):
    """One momentum-exact integration step of size dt (reference path used
    by the single-step API; the batch stepper has its own fused loop).

    Torques saturate at +-tau_max. Joint rates saturate at +-qdot_max and
    positions clamp at +-q_max; clamping zeroes the joint rate (an inelastic
    stop) and the momentum re-solve passes the lost joint momentum into the
    base, so the total stays exact.
    """
    nb = q.shape[0]
    N = 6 + nb
    Rb = _quat_to_mat(qb)
    R = np.empty((nb, 3, 3))
    p = np.empty((nb, 3))
    aw = np.empty((nb, 3))
    _fk(parent, mount_pos, mount_rot, axis_local, pb, Rb, q, R, p, aw)
    w = np.empty((nb, 3))
    vo = np.empty((nb, 3))
    rc = np.empty((nb, 3))
    vc = np.empty((nb, 3))
    _velocities(parent, com, R, p, aw, pb, vb, wb, qdot, w, vo, rc, vc)
    Iw = np.empty((3, 3))
    h = np.empty(6)
    _momentum_from_vel(mass, bmass, bcom, binertia, inertia,
                       pb, Rb, vb, wb, R, w, rc, vc, Iw, h)

    # external impulse about the world origin
    rcbx = pb[0] + Rb[0, 0] * bcom[0] + Rb[0, 1] * bcom[1] + Rb[0, 2] * bcom[2]
    rcby = pb[1] + Rb[1, 0] * bcom[0] + Rb[1, 1] * bcom[1] + Rb[1, 2] * bcom[2]
    rcbz = pb[2] + Rb[2, 0] * bcom[0] + Rb[2, 1] * bcom[1] + Rb[2, 2] * bcom[2]
    ht = h.copy()
    for bi in range(nb + 1):
        fx_, fy_, fz_ = fext[bi, 0], fext[bi, 1], fext[bi, 2]
        if fx_ != 0.0 or fy_ != 0.0 or fz_ != 0.0 or text[bi, 0] != 0.0 \
                or text[bi, 1] != 0.0 or text[bi, 2] != 0.0:
            if bi == 0:
                rx, ry, rz = rcbx, rcby, rcbz
            else:
                rx, ry, rz = rc[bi - 1, 0], rc[bi - 1, 1], rc[bi - 1, 2]
            ht[0] += dt * fx_
            ht[1] += dt * fy_
            ht[2] += dt * fz_
            ht[3] += dt * (ry * fz_ - rz * fy_ + text[bi, 0])
            ht[4] += dt * (rz * fx_ - rx * fz_ + text[bi, 1])
            ht[5] += dt * (rx * fy_ - ry * fx_ + text[bi, 2])

    tau_eff = np.empty(nb)
    for i in range(nb):
        t = tau[i]
        if t > tau_max[i]:
            t = tau_max[i]
        elif t < -tau_max[i]:
            t = -tau_max[i]
        if locked[i]:
            t = 0.0
        tau_eff[i] = t

    M = np.empty((N, N))
    rhs = np.empty(N)
    Jv = np.zeros((3, N))
    Jw = np.zeros((3, N))
    cols = np.empty(N, dtype=np.int64)
    ao = np.empty((nb, 3))
    al = np.empty((nb, 3))
    _mass_bias(parent, mass, com, inertia, bmass, bcom, binertia,
               pb, Rb, vb, wb, R, p, aw, w, rc, qdot, tau_eff, fext, text,
               M, rhs, Jv, Jw, cols, ao, al, Iw)
    udot = _reduced_accel(M, rhs, locked)

    qdot_n = np.empty(nb)
    limit_hit = False
    for i in range(nb):
        v = qdot[i] + dt * udot[6 + i]
        if v > qdot_max[i]:
            v = qdot_max[i]
        elif v < -qdot_max[i]:
            v = -qdot_max[i]
        if locked[i]:
            v = 0.0
        qdot_n[i] = v

    vbp = np.empty(3)
    wbp = np.empty(3)
    for k in range(3):
        vbp[k] = vb[k] + dt * udot[k]
        wbp[k] = wb[k] + dt * udot[3 + k]
    pb_n = pb + dt * vbp
    qb_n = _quat_mul(_rotvec_to_quat(wbp[0] * dt, wbp[1] * dt, wbp[2] * dt), qb)

    q_n = np.empty(nb)
    for i in range(nb):
        x = q[i] + dt * qdot_n[i]
        if x > q_max[i]:
            x = q_max[i]
            qdot_n[i] = 0.0
            limit_hit = True
        elif x < -q_max[i]:
            x = -q_max[i]
            qdot_n[i] = 0.0
            limit_hit = True
        q_n[i] = x

    # re-solve the base velocity so the new state carries exactly ht
    Rb_n = _quat_to_mat(qb_n)
    _fk(parent, mount_pos, mount_rot, axis_local, pb_n, Rb_n, q_n, R, p, aw)
    A = np.zeros((6, N))
    _momentum_matrix(parent, mass, com, inertia, bmass, bcom, binertia,
                     pb_n, Rb_n, R, p, aw, A, Jv, Jw, cols, Iw)
    A6 = np.empty((6, 6))
    b6 = np.empty(6)
    for a in range(6):
        s = ht[a]
        for i in range(nb):
            s -= A[a, 6 + i] * qdot_n[i]
        b6[a] = s
        for b in range(6):
            A6[a, b] = A[a, b]
    ok = _gauss_solve_inplace(A6, b6, 6)
    vb_n = np.empty(3)
    wb_n = np.empty(3)
    if ok:
        for k in range(3):
            vb_n[k] = b6[k]
            wb_n[k] = b6[3 + k]
    else:
        for k in range(3):
            vb_n[k] = np.nan
            wb_n[k] = np.nan
    return pb_n, qb_n, vb_n, wb_n, q_n, qdot_n, limit_hit


# ----------------------------------------------------------- batch stepper


@njit(cache=True)
def _advance_batch(parent, mount_pos, mount_rot, axis_local,
                   mass, com, inertia, bmass, bcom, binertia,
                   q_max, qdot_max, tau_max,
                   arm_of, cap_a, cap_b, cap_r, half,
                   PB, QB, VB, WB, Q, QD, QDPREV,
                   qdot_des, kp, kd, locked,
                   wr_body, wr_F, wr_T, wr_active,
                   n_sub, dt,
                   R_out, p_out):
    """Advance every environment through one control step, in place.

    Each control step is n_sub substeps; every substep applies the velocity
    PD torque tau = kp (qdot_des - qdot) - kd qddot_est, with qddot_est the
    finite difference of the joint rate over the previous substep.
    wr_active[e, s] switches the external wrench (wr_body, wr_F, wr_T) on
    during substep s of environment e.

    Within a control step the base velocity integrates the equations of
    motion directly; at the control-step boundary it is re-solved from the
    tracked momentum target, so reported states carry the exact momentum.

    Returns (collided, min_clearance, limit_hit, diverged) per env; final
    link frames are written to R_out / p_out.
    """
    ne = PB.shape[0]
    nb = Q.shape[1]
    N = 6 + nb
    coll = np.zeros(ne, dtype=np.bool_)
    clear = np.empty(ne)
    limit = np.zeros(ne, dtype=np.bool_)
    diverged = np.zeros(ne, dtype=np.bool_)

    R = np.empty((nb, 3, 3))
    p = np.empty((nb, 3))
    aw = np.empty((nb, 3))
    w = np.empty((nb, 3))
    vo = np.empty((nb, 3))
    rc = np.empty((nb, 3))
    vc = np.empty((nb, 3))
    ao = np.empty((nb, 3))
    al = np.empty((nb, 3))
    Iw = np.empty((3, 3))
    M = np.empty((N, N))
    rhs = np.empty(N)
    Jv = np.zeros((3, N))
    Jw = np.zeros((3, N))
    cols = np.empty(N, dtype=np.int64)
    A = np.zeros((6, N))
    A6 = np.empty((6, 6))
    b6 = np.empty(6)
    h = np.empty(6)
    ht = np.empty(6)
    tau = np.empty(nb)
    fext = np.zeros((nb + 1, 3))
    text = np.zeros((nb + 1, 3))
    free = np.empty(N, dtype=np.int64)
    Mr = np.empty((N, N))
    br = np.empty(N)

    for e in range(ne):
        pb = PB[e].copy()
        qb = QB[e].copy()
        vb = VB[e].copy()
        wb = WB[e].copy()
        q = Q[e].copy()
        qd = QD[e].copy()
        qdp = QDPREV[e].copy()
        lk = locked[e]

        # free-coordinate index list (base always free)
        nfree = 6
        for a in range(6):
            free[a] = a
        for i in range(nb):
            if not lk[i]:
                free[nfree] = 6 + i
                nfree += 1
        all_free = nfree == N

        Rb = _quat_to_mat(qb)
        _fk(parent, mount_pos, mount_rot, axis_local, pb, Rb, q, R, p, aw)
        _velocities(parent, com, R, p, aw, pb, vb, wb, qd, w, vo, rc, vc)
        _momentum_from_vel(mass, bmass, bcom, binertia, inertia,
                           pb, Rb, vb, wb, R, w, rc, vc, Iw, h)
        for a in range(6):
            ht[a] = h[a]

        hit_limit = False
        bad = False
        for s in range(n_sub):
            # PD torque from the current and previous substep joint rates
            for i in range(nb):
                acc_est = (qd[i] - qdp[i]) / dt
                t = kp[i] * (qdot_des[e, i] - qd[i]) - kd[i] * acc_est
                if t > tau_max[i]:
                    t = tau_max[i]
                elif t < -tau_max[i]:
                    t = -tau_max[i]
                if lk[i]:
                    t = 0.0
                tau[i] = t
                qdp[i] = qd[i]

            use_wrench = wr_active[e, s]
            if use_wrench:
                bidx = wr_body[e] + 1
                for k in range(3):
                    fext[bidx, k] = wr_F[e, k]
                    text[bidx, k] = wr_T[e, k]
                # impulse about the origin, at the target body's current COM
                if bidx == 0:
                    rx = pb[0] + Rb[0, 0] * bcom[0] + Rb[0, 1] * bcom[1] + Rb[0, 2] * bcom[2]
                    ry = pb[1] + Rb[1, 0] * bcom[0] + Rb[1, 1] * bcom[1] + Rb[1, 2] * bcom[2]
                    rz = pb[2] + Rb[2, 0] * bcom[0] + Rb[2, 1] * bcom[1] + Rb[2, 2] * bcom[2]
                else:
                    rx = rc[bidx - 1, 0]
                    ry = rc[bidx - 1, 1]
                    rz = rc[bidx - 1, 2]
                fx_, fy_, fz_ = wr_F[e, 0], wr_F[e, 1], wr_F[e, 2]
                ht[0] += dt * fx_
                ht[1] += dt * fy_
                ht[2] += dt * fz_
                ht[3] += dt * (ry * fz_ - rz * fy_ + wr_T[e, 0])
                ht[4] += dt * (rz * fx_ - rx * fz_ + wr_T[e, 1])
                ht[5] += dt * (rx * fy_ - ry * fx_ + wr_T[e, 2])

            _mass_bias(parent, mass, com, inertia, bmass, bcom, binertia,
                       pb, Rb, vb, wb, R, p, aw, w, rc, qd, tau, fext, text,
                       M, rhs, Jv, Jw, cols, ao, al, Iw)
            if use_wrench:
                bidx = wr_body[e] + 1
                for k in range(3):
                    fext[bidx, k] = 0.0
                    text[bidx, k] = 0.0

            if all_free:
                if not _chol_solve_inplace(M, rhs, N):
                    bad = True
                    break
                # rhs now holds udot
                for k in range(3):
                    vb[k] += dt * rhs[k]
                    wb[k] += dt * rhs[3 + k]
                for i in range(nb):
                    if lk[i]:
                        qd[i] = 0.0
                        continue
                    v = qd[i] + dt * rhs[6 + i]
                    if v > qdot_max[i]:
                        v = qdot_max[i]
                    elif v < -qdot_max[i]:
                        v = -qdot_max[i]
                    qd[i] = v
            else:
                for a in range(nfree):
                    br[a] = rhs[free[a]]
                    for b in range(nfree):
                        Mr[a, b] = M[free[a], free[b]]
                if not _chol_solve_inplace(Mr, br, nfree):
                    bad = True
                    break
                for k in range(3):
                    vb[k] += dt * br[k]
                    wb[k] += dt * br[3 + k]
                kk = 6
                for i in range(nb):
                    if lk[i]:
                        qd[i] = 0.0
                        continue
                    v = qd[i] + dt * br[kk]
                    kk += 1
                    if v > qdot_max[i]:
                        v = qdot_max[i]
                    elif v < -qdot_max[i]:
                        v = -qdot_max[i]
                    qd[i] = v

            for k in range(3):
                pb[k] += dt * vb[k]
            qb = _quat_mul(_rotvec_to_quat(wb[0] * dt, wb[1] * dt, wb[2] * dt), qb)
            for i in range(nb):
                x = q[i] + dt * qd[i]
                if x > q_max[i]:
                    x = q_max[i]
                    qd[i] = 0.0
                    hit_limit = True
                elif x < -q_max[i]:
                    x = -q_max[i]
                    qd[i] = 0.0
                    hit_limit = True
                q[i] = x

            Rb = _quat_to_mat(qb)
            _fk(parent, mount_pos, mount_rot, axis_local, pb, Rb, q, R, p, aw)
            if s + 1 < n_sub:
                _velocities(parent, com, R, p, aw, pb, vb, wb, qd, w, vo, rc, vc)

        if not bad:
            # momentum correction at the control-step boundary
            _momentum_matrix(parent, mass, com, inertia, bmass, bcom, binertia,
                             pb, Rb, R, p, aw, A, Jv, Jw, cols, Iw)
            for a in range(6):
                s2 = ht[a]
                for i in range(nb):
                    s2 -= A[a, 6 + i] * qd[i]
                b6[a] = s2
                for b in range(6):
                    A6[a, b] = A[a, b]
            if _gauss_solve_inplace(A6, b6, 6):
                for k in range(3):
                    vb[k] = b6[k]
                    wb[k] = b6[3 + k]
            else:
                bad = True

        if not bad:
            for k in range(3):
                if not (np.isfinite(pb[k]) and np.isfinite(vb[k])
                        and np.isfinite(wb[k])):
                    bad = True
            for i in range(nb):
                if not (np.isfinite(q[i]) and np.isfinite(qd[i])):
                    bad = True
        if bad:
            diverged[e] = True
            clear[e] = 0.0
            continue

        PB[e] = pb
        QB[e] = qb
        VB[e] = vb
        WB[e] = wb
        Q[e] = q
        QD[e] = qd
        QDPREV[e] = qdp
        limit[e] = hit_limit
        R_out[e] = R
        p_out[e] = p
        hit, c = _collision_check(parent, arm_of, cap_a, cap_b, cap_r,
                                  R, p, pb, Rb, half)
        coll[e] = hit
        clear[e] = c
    return coll, clear, limit, diverged


# ------------------------------------------------------------- collision


@njit(cache=True)
def _point_box_dist(px, py, pz, half):
    s = 0.0
    d = abs(px) - half[0]
    if d > 0.0:
        s += d * d
    d = abs(py) - half[1]
    if d > 0.0:
        s += d * d
    d = abs(pz) - half[2]
    if d > 0.0:
        s += d * d
    return np.sqrt(s)


@njit(cache=True)
def _seg_box_dist(a, b, half):
    """Min distance from segment ab to an origin-centered box (all in the
    box frame). Distance to a convex set is convex along the segment, so a
    ternary search converges."""
    dx = b[0] - a[0]
    dy = b[1] - a[1]
    dz = b[2] - a[2]
    lo = 0.0
    hi = 1.0
    for _ in range(64):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        f1 = _point_box_dist(a[0] + m1 * dx, a[1] + m1 * dy, a[2] + m1 * dz, half)
        f2 = _point_box_dist(a[0] + m2 * dx, a[1] + m2 * dy, a[2] + m2 * dz, half)
        if f1 <= f2:
            hi = m2
        else:
            lo = m1
    m = 0.5 * (lo + hi)
    return _point_box_dist(a[0] + m * dx, a[1] + m * dy, a[2] + m * dz, half)


@njit(cache=True)
def _seg_seg_dist(p1, q1, p2, q2):
    """Min distance between segments p1q1 and p2q2."""
    d1x = q1[0] - p1[0]
    d1y = q1[1] - p1[1]
    d1z = q1[2] - p1[2]
    d2x = q2[0] - p2[0]
    d2y = q2[1] - p2[1]
    d2z = q2[2] - p2[2]
    rx = p1[0] - p2[0]
    ry = p1[1] - p2[1]
    rz = p1[2] - p2[2]
    a = d1x * d1x + d1y * d1y + d1z * d1z
    e = d2x * d2x + d2y * d2y + d2z * d2z
    f = d2x * rx + d2y * ry + d2z * rz
    EPS = 1e-14
    if a <= EPS and e <= EPS:
        return np.sqrt(rx * rx + ry * ry + rz * rz)
    if a <= EPS:
        s = 0.0
        t = f / e
        t = min(max(t, 0.0), 1.0)
    else:
        c = d1x * rx + d1y * ry + d1z * rz
        if e <= EPS:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = d1x * d2x + d1y * d2y + d1z * d2z
            denom = a * e - b * b
            if denom > EPS:
                s = min(max((b * f - c * e) / denom, 0.0), 1.0)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    ddx = rx + s * d1x - t * d2x
    ddy = ry + s * d1y - t * d2y
    ddz = rz + s * d1z - t * d2z
    return np.sqrt(ddx * ddx + ddy * ddy + ddz * ddz)


@njit(cache=True)
def _collision_check(parent, arm_of, cap_a, cap_b, cap_r, R, p, pb, Rb, half):
    """Clearance of the closest monitored pair.

    Monitored pairs: every link capsule against the base box except the
    first link of each arm (it is attached to the box), and every capsule
    pair belonging to different arms. Negative clearance means overlap;
    a collision is a strictly negative clearance.
    """
    nb = cap_r.shape[0]
    best = 1.0e300
    e0 = np.empty((nb, 3))
    e1 = np.empty((nb, 3))
    s0 = np.empty(3)
    s1 = np.empty(3)
    for i in range(nb):
        for k in range(3):
            e0[i, k] = (p[i, k] + R[i, k, 0] * cap_a[i, 0]
                        + R[i, k, 1] * cap_a[i, 1] + R[i, k, 2] * cap_a[i, 2])
            e1[i, k] = (p[i, k] + R[i, k, 0] * cap_b[i, 0]
                        + R[i, k, 1] * cap_b[i, 1] + R[i, k, 2] * cap_b[i, 2])
    for i in range(nb):
        if parent[i] < 0:
            continue
        for k in range(3):
            s0[k] = (Rb[0, k] * (e0[i, 0] - pb[0]) + Rb[1, k] * (e0[i, 1] - pb[1])
                     + Rb[2, k] * (e0[i, 2] - pb[2]))
            s1[k] = (Rb[0, k] * (e1[i, 0] - pb[0]) + Rb[1, k] * (e1[i, 1] - pb[1])
                     + Rb[2, k] * (e1[i, 2] - pb[2]))
        d = _seg_box_dist(s0, s1, half) - cap_r[i]
        if d < best:
            best = d
    for i in range(nb):
        for j in range(i + 1, nb):
            if arm_of[i] == arm_of[j]:
                continue
            d = _seg_seg_dist(e0[i], e1[i], e0[j], e1[j]) - (cap_r[i] + cap_r[j])
            if d < best:
                best = d
    return best < 0.0, best
