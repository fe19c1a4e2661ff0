"""Pure NumPy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``COMPCBF_PURE_PYTHON=1`` is set.  Contracts match the compiled versions.
"""
import numpy as np

SAFETY = 0
CONNECTIVITY = 1


def pair_terms(pos, vel, first, second, kind, max_accel, d_s, d_c, domain_tol):
    """Raw values and partial derivatives of pairwise braking barriers.

    Returns ``(h, dh_ddp, dh_ddv, dist)`` where the derivatives are taken with
    respect to ``dp = p[first] - p[second]`` and ``dv = v[first] - v[second]``.
    Out-of-domain pairs get ``h = -inf`` and zero derivatives.  A connectivity
    pair at zero distance gets ``h = nan``.
    """
    pos = np.asarray(pos, dtype=float)
    vel = np.asarray(vel, dtype=float)
    first = np.asarray(first, dtype=np.intp)
    second = np.asarray(second, dtype=np.intp)
    kind = np.asarray(kind)
    dp = pos[first] - pos[second]
    dv = vel[first] - vel[second]
    dist = np.hypot(dp[:, 0], dp[:, 1])
    k = dist.size
    h = np.empty(k)
    gdp = np.zeros((k, 2))
    gdv = np.zeros((k, 2))

    conn = kind == CONNECTIVITY
    gap = np.where(conn, d_c - dist, dist - d_s)
    arg = max_accel * gap
    ok = (arg >= -domain_tol) & (dist > 0.0)
    h[~ok] = -np.inf
    h[conn & (dist == 0.0)] = np.nan
    if not np.any(ok):
        return h, gdp, gdv, dist

    sign = np.where(conn[ok], -1.0, 1.0)[:, None]
    d = dist[ok][:, None]
    n = dp[ok] / d
    rel = dv[ok]
    radial = np.sum(n * rel, axis=1)
    s = np.sqrt(np.maximum(arg[ok], 0.0))
    s_eff = np.maximum(s, np.sqrt(max_accel * domain_tol))
    h[ok] = 2.0 * s + sign[:, 0] * radial
    gdp[ok] = sign * ((max_accel / s_eff)[:, None] * n + (rel - n * radial[:, None]) / d)
    gdv[ok] = sign * n
    return h, gdp, gdv, dist


def project_halfspace_box(u_hat, a, c, lo, hi):
    """Euclidean projection of ``u_hat`` onto ``{a.u + c >= 0} & [lo, hi]``.

    Returns ``(u, mu, feasible)`` with ``u = clip(u_hat + mu * a, lo, hi)``.
    When the set is empty, ``u`` is the box corner maximising ``a.u`` and
    ``mu = inf``.
    """
    u_hat = np.asarray(u_hat, dtype=float)
    a = np.asarray(a, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    u0 = np.clip(u_hat, lo, hi)
    phi0 = float(a @ u0) + c
    if phi0 >= 0.0:
        return u0, 0.0, True
    top = np.where(a > 0.0, hi, np.where(a < 0.0, lo, u0))
    if float(a @ top) + c < 0.0:
        return top, np.inf, False

    nz = a != 0.0
    bp = np.concatenate([(lo[nz] - u_hat[nz]) / a[nz], (hi[nz] - u_hat[nz]) / a[nz]])
    bp = np.unique(bp[bp > 0.0])
    trial = np.clip(u_hat[None, :] + bp[:, None] * a[None, :], lo, hi)
    phis = trial @ a + c
    k = int(np.argmax(phis >= 0.0))
    mu_a, phi_a = (0.0, phi0) if k == 0 else (bp[k - 1], phis[k - 1])
    mu = mu_a - phi_a * (bp[k] - mu_a) / (phis[k] - phi_a)
    return np.clip(u_hat + mu * a, lo, hi), float(mu), True
