"""Numba inner loops for spring/hinge energy and force accumulation.

Falls back to the pure-numpy implementations in model.py when numba is
unavailable; tests assert both paths agree.  Loops run in a fixed order so
results are deterministic.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        if args and callable(args[0]):
            return args[0]
        return wrap


@njit(cache=True, fastmath={'arcp', 'nnan', 'ninf', 'nsz'})
def spring_eval(pos, si, sj, k, rest, tension_only, cls, grad, want_grad):
    """Per-class spring energies; optionally accumulates the gradient."""
    energy = np.zeros(4)
    for s in range(si.size):
        i = si[s]
        j = sj[s]
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        dz = pos[j, 2] - pos[i, 2]
        ln = math.sqrt(dx * dx + dy * dy + dz * dz)
        ext = ln - rest[s]
        if tension_only[s] and ext < 0.0:
            continue
        energy[cls[s]] += 0.5 * k[s] * ext * ext
        if want_grad:
            f = k[s] * ext / max(ln, 1e-300)
            fx = f * dx
            fy = f * dy
            fz = f * dz
            grad[i, 0] -= fx
            grad[i, 1] -= fy
            grad[i, 2] -= fz
            grad[j, 0] += fx
            grad[j, 1] += fy
            grad[j, 2] += fz
    return energy


@njit(cache=True, fastmath={'arcp', 'nnan', 'ninf', 'nsz'})
def hinge_eval(pos, ha, hb, hc, hk, grad, want_grad):
    """Angular spring energy 0.5*k*theta^2, theta = pi - interior angle."""
    energy = 0.0
    for h in range(ha.size):
        a = ha[h]
        b = hb[h]
        c = hc[h]
        ux = pos[a, 0] - pos[b, 0]
        uy = pos[a, 1] - pos[b, 1]
        uz = pos[a, 2] - pos[b, 2]
        wx = pos[c, 0] - pos[b, 0]
        wy = pos[c, 1] - pos[b, 1]
        wz = pos[c, 2] - pos[b, 2]
        nu = math.sqrt(ux * ux + uy * uy + uz * uz)
        nw = math.sqrt(wx * wx + wy * wy + wz * wz)
        cx = uy * wz - uz * wy
        cy = uz * wx - ux * wz
        cz = ux * wy - uy * wx
        sin_phi = math.sqrt(cx * cx + cy * cy + cz * cz) / (nu * nw)
        cos_phi = (ux * wx + uy * wy + uz * wz) / (nu * nw)
        theta = math.atan2(sin_phi, -cos_phi)
        energy += 0.5 * hk[h] * theta * theta
        if want_grad:
            # k*theta * dtheta/dx; theta/sin(phi) -> 1 at the straight bar
            if sin_phi > 1e-9:
                coeff = hk[h] * theta / sin_phi
            else:
                coeff = hk[h]
            uhx = ux / nu
            uhy = uy / nu
            uhz = uz / nu
            whx = wx / nw
            why = wy / nw
            whz = wz / nw
            gax = coeff * (whx - cos_phi * uhx) / nu
            gay = coeff * (why - cos_phi * uhy) / nu
            gaz = coeff * (whz - cos_phi * uhz) / nu
            gcx = coeff * (uhx - cos_phi * whx) / nw
            gcy = coeff * (uhy - cos_phi * why) / nw
            gcz = coeff * (uhz - cos_phi * whz) / nw
            grad[a, 0] += gax
            grad[a, 1] += gay
            grad[a, 2] += gaz
            grad[c, 0] += gcx
            grad[c, 1] += gcy
            grad[c, 2] += gcz
            grad[b, 0] -= gax + gcx
            grad[b, 1] -= gay + gcy
            grad[b, 2] -= gaz + gcz
    return energy


@njit(cache=True, fastmath={'arcp', 'nnan', 'ninf', 'nsz'})
def _accumulate_forces(pos, si, sj, sk, srest, stens, ha, hb, hc, hk, grad):
    grad[:, :] = 0.0
    for s in range(si.size):
        i = si[s]
        j = sj[s]
        dx = pos[j, 0] - pos[i, 0]
        dy = pos[j, 1] - pos[i, 1]
        dz = pos[j, 2] - pos[i, 2]
        ln = math.sqrt(dx * dx + dy * dy + dz * dz)
        ext = ln - srest[s]
        if stens[s] and ext < 0.0:
            continue
        f = sk[s] * ext / max(ln, 1e-300)
        fx = f * dx
        fy = f * dy
        fz = f * dz
        grad[i, 0] -= fx
        grad[i, 1] -= fy
        grad[i, 2] -= fz
        grad[j, 0] += fx
        grad[j, 1] += fy
        grad[j, 2] += fz
    for h in range(ha.size):
        a = ha[h]
        b = hb[h]
        c = hc[h]
        ux = pos[a, 0] - pos[b, 0]
        uy = pos[a, 1] - pos[b, 1]
        uz = pos[a, 2] - pos[b, 2]
        wx = pos[c, 0] - pos[b, 0]
        wy = pos[c, 1] - pos[b, 1]
        wz = pos[c, 2] - pos[b, 2]
        nu = math.sqrt(ux * ux + uy * uy + uz * uz)
        nw = math.sqrt(wx * wx + wy * wy + wz * wz)
        cx = uy * wz - uz * wy
        cy = uz * wx - ux * wz
        cz = ux * wy - uy * wx
        sin_phi = math.sqrt(cx * cx + cy * cy + cz * cz) / (nu * nw)
        cos_phi = (ux * wx + uy * wy + uz * wz) / (nu * nw)
        theta = math.atan2(sin_phi, -cos_phi)
        if sin_phi > 1e-9:
            coeff = hk[h] * theta / sin_phi
        else:
            coeff = hk[h]
        uhx = ux / nu
        uhy = uy / nu
        uhz = uz / nu
        whx = wx / nw
        why = wy / nw
        whz = wz / nw
        gax = coeff * (whx - cos_phi * uhx) / nu
        gay = coeff * (why - cos_phi * uhy) / nu
        gaz = coeff * (whz - cos_phi * uhz) / nu
        gcx = coeff * (uhx - cos_phi * whx) / nw
        gcy = coeff * (uhy - cos_phi * why) / nw
        gcz = coeff * (uhz - cos_phi * whz) / nw
        grad[a, 0] += gax
        grad[a, 1] += gay
        grad[a, 2] += gaz
        grad[c, 0] += gcx
        grad[c, 1] += gcy
        grad[c, 2] += gcz
        grad[b, 0] -= gax + gcx
        grad[b, 1] -= gay + gcy
        grad[b, 2] -= gaz + gcz


@njit(cache=True, fastmath={'arcp', 'nnan', 'ninf', 'nsz'})
def _contact_pass(pos, vel, mass, restitution, mu):
    """Returns (normal loss, friction loss) for one contact sweep."""
    loss_n = 0.0
    loss_t = 0.0
    for i in range(pos.shape[0]):
        if pos[i, 2] >= 0.0 or vel[i, 2] >= 0.0:
            continue
        m = mass[i]
        vx = vel[i, 0]
        vy = vel[i, 1]
        vz = vel[i, 2]
        jn = -(1.0 + restitution) * m * vz
        vel[i, 2] = -restitution * vz
        pos[i, 2] = 0.0
        loss_n += 0.5 * m * vz * vz * (1.0 - restitution * restitution)
        speed_t = math.sqrt(vx * vx + vy * vy)
        if speed_t > 0.0:
            jt_stop = m * speed_t
            jt = min(jt_stop, mu * jn)
            factor = 1.0 - jt / jt_stop
            vel[i, 0] = vx * factor
            vel[i, 1] = vy * factor
            loss_t += 0.5 * m * speed_t * speed_t * (1.0 - factor * factor)
    return loss_n, loss_t


@njit(cache=True, fastmath={'arcp', 'nnan', 'ninf', 'nsz'})
def advance(pos, vel, grad, mass, dt, n_steps, verlet,
            si, sj, sk, srest, stens, ha, hb, hc, hk,
            gravity, restitution, mu, contact):
    """March n_steps of explicit integration with inline ground contact.

    Mutates pos/vel/grad in place; returns cumulative (normal loss,
    friction loss) over the chunk.
    """
    acc_n = 0.0
    acc_t = 0.0
    n = pos.shape[0]
    for _ in range(n_steps):
        _accumulate_forces(pos, si, sj, sk, srest, stens, ha, hb, hc, hk, grad)
        if verlet:
            for i in range(n):
                half = 0.5 * dt / mass[i]
                vel[i, 0] -= half * grad[i, 0]
                vel[i, 1] -= half * grad[i, 1]
                vel[i, 2] -= half * (grad[i, 2] + mass[i] * gravity)
                pos[i, 0] += dt * vel[i, 0]
                pos[i, 1] += dt * vel[i, 1]
                pos[i, 2] += dt * vel[i, 2]
            _accumulate_forces(pos, si, sj, sk, srest, stens, ha, hb, hc, hk,
                               grad)
            for i in range(n):
                half = 0.5 * dt / mass[i]
                vel[i, 0] -= half * grad[i, 0]
                vel[i, 1] -= half * grad[i, 1]
                vel[i, 2] -= half * (grad[i, 2] + mass[i] * gravity)
        else:
            for i in range(n):
                w = dt / mass[i]
                vel[i, 0] -= w * grad[i, 0]
                vel[i, 1] -= w * grad[i, 1]
                vel[i, 2] -= w * (grad[i, 2] + mass[i] * gravity)
                pos[i, 0] += dt * vel[i, 0]
                pos[i, 1] += dt * vel[i, 1]
                pos[i, 2] += dt * vel[i, 2]
        if contact:
            ln, lt = _contact_pass(pos, vel, mass, restitution, mu)
            acc_n += ln
            acc_t += lt
    return acc_n, acc_t
