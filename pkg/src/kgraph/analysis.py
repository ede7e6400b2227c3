"""Geometric estimate machinery as numeric certificates.

Everything here consumes a converged graph and produces checkable
artifacts: the inward mean curvature of the boundary cylinder
H_cyl = ((n-1) H_Gamma + kappa) / n and its evolution along inward
normal geodesics, exponential height barriers, logarithmic boundary
gradient barriers, the flux identity between the boundary integral of
<Y, nu> and the bulk integral of n H <Y, N>, and the angle function
Theta = <N, Y> with its boundary minimum principle.  Certificates are
pointwise margin checks, not proofs: a passing certificate stores a
nonnegative margin field.
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import (CertificateFailed, MinPrincipleViolated,
                     TubularWidthExceeded)
from .geometry import christoffels_at, inverse_metric_at, kappa_vector_at
from .grid import Rectangle, integrate
from .operator import _get_operator

CURVE_DT = 2e-4          # parameter differencing step, scaled by period/(2 pi)
GEOM_H_FD = 1e-3         # chart differencing step for boundary geometry
LADDER = [2.0 ** k for k in range(0, 21)]


# ---------------------------------------------------------------------------
# boundary geometry

@dataclass
class BoundaryGeometry:
    params: np.ndarray       # (S,)
    dparam: np.ndarray       # (S,) parameter weight of each sample
    points: np.ndarray       # (S, 2)
    points_minus: np.ndarray  # (S, 2) at t - dt
    points_plus: np.ndarray  # (S, 2) at t + dt
    dt: float
    tangents: np.ndarray     # (S, 2) dc/dt
    eta: np.ndarray          # (S, 2) inward sigma-unit normal
    eta_minus: np.ndarray    # (S, 2)
    eta_plus: np.ndarray     # (S, 2)
    H_gamma: np.ndarray      # (S,)
    kappa: np.ndarray        # (S,)
    H_cyl: np.ndarray        # (S,)
    weights: np.ndarray      # (S,) sigma arclength weights
    n: int = 2

    @property
    def inf_H_cyl(self):
        return float(np.min(self.H_cyl))

    @property
    def perimeter(self):
        return float(np.sum(self.weights))


def _boundary_params(domain, samples):
    period = domain.boundary_period()
    if isinstance(domain, Rectangle):
        w = domain.x1 - domain.x0
        h = domain.y1 - domain.y0
        lengths = [w, h, w, h]
        starts = np.concatenate([[0.0], np.cumsum(lengths)])[:4]
        ts, dts = [], []
        for start, ln in zip(starts, lengths):
            k = max(4, int(round(samples * ln / period)))
            ts.append(start + (np.arange(k) + 0.5) * ln / k)
            dts.append(np.full(k, ln / k))
        return np.concatenate(ts), np.concatenate(dts)
    step = period / samples
    return (np.arange(samples) + 0.5) * step, np.full(samples, step)


def _sigma_normalize(chart, points, vectors):
    sig = chart.metric_at(points)
    norm = np.sqrt(np.einsum("...i,...ij,...j->...", vectors, sig, vectors))
    return vectors / norm[..., None]


def _inward_normal(chart, points, tangents):
    # counterclockwise parametrization: rotating the tangent by +90
    # degrees gives the Euclidean inward covector
    m = np.stack([-tangents[..., 1], tangents[..., 0]], axis=-1)
    m = m / np.linalg.norm(m, axis=-1, keepdims=True)
    siginv = inverse_metric_at(chart, points)
    v = np.einsum("...ij,...j->...i", siginv, m)
    norm = np.sqrt(np.einsum("...i,...i->...", m, v))
    return v / norm[..., None]


def _curve_H_cyl(chart, p_minus, p0, p_plus, dt, eta, n=2, h_fd=GEOM_H_FD):
    """Cylinder curvature from three nearby curve points and the inward normal.

    H_Gamma is the sigma-covariant curvature of the curve through the
    triplet; kappa is the kappa-vector paired with eta.
    """
    cp = (p_plus - p_minus) / (2.0 * dt)
    cpp = (p_plus - 2.0 * p0 + p_minus) / dt ** 2
    gam = christoffels_at(chart, p0, h_fd)
    acc = cpp + np.einsum("...kij,...i,...j->...k", gam, cp, cp)
    sig = chart.metric_at(p0)
    speed2 = np.einsum("...i,...ij,...j->...", cp, sig, cp)
    tang = cp / np.sqrt(speed2)[..., None]
    a_dot_t = np.einsum("...i,...ij,...j->...", acc, sig, tang)
    kvec = (acc - a_dot_t[..., None] * tang) / speed2[..., None]
    H_gamma = np.einsum("...i,...ij,...j->...", kvec, sig, eta)
    kap = np.einsum("...i,...i->...", kappa_vector_at(chart, p0, h_fd), eta)
    return ((n - 1) * H_gamma + kap) / n, H_gamma, kap


def boundary_geometry(chart, domain, samples=64, n=2, h_fd=GEOM_H_FD):
    """Sample H_Gamma, kappa and H_cyl along the boundary.

    The parametrization is differenced with a small parameter step;
    samples avoid rectangle corners.  Arclength weights are sigma
    lengths of the parameter cells.
    """
    if samples < 16:
        raise ValueError("need at least 16 boundary samples")
    ts, dts = _boundary_params(domain, samples)
    period = domain.boundary_period()
    dt = CURVE_DT * period / (2.0 * np.pi)
    p0 = domain.boundary_point(ts)
    pm = domain.boundary_point(ts - dt)
    pp = domain.boundary_point(ts + dt)
    pmm = domain.boundary_point(ts - 2 * dt)
    ppp = domain.boundary_point(ts + 2 * dt)

    cp = (pp - pm) / (2.0 * dt)
    eta = _inward_normal(chart, p0, cp)
    eta_m = _inward_normal(chart, pm, (p0 - pmm) / (2.0 * dt))
    eta_p = _inward_normal(chart, pp, (ppp - p0) / (2.0 * dt))

    H_cyl, H_gamma, kap = _curve_H_cyl(chart, pm, p0, pp, dt, eta, n=n, h_fd=h_fd)

    sig = chart.metric_at(p0)
    speed = np.sqrt(np.einsum("...i,...ij,...j->...", cp, sig, cp))
    weights = speed * dts

    return BoundaryGeometry(
        params=ts, dparam=dts, points=p0, points_minus=pm, points_plus=pp,
        dt=dt, tangents=cp, eta=eta, eta_minus=eta_m, eta_plus=eta_p,
        H_gamma=H_gamma, kappa=kap, H_cyl=H_cyl, weights=weights, n=n,
    )


# ---------------------------------------------------------------------------
# hypothesis check

@dataclass
class HypothesisVerdict:
    sup_H: float
    inf_Hcyl: float
    ric_lower: float
    cyl_positive: bool
    h_ok: bool
    ric_ok: bool
    slack_H: float
    slack_ric: float

    @property
    def passed(self):
        return self.cyl_positive and self.h_ok and self.ric_ok

    def as_dict(self):
        out = asdict(self)
        out["passed"] = self.passed
        return out


def hypothesis_check(spec, bgeom, grid=None):
    """Checks sup|H| <= inf H_cyl, H_cyl > 0 and the Ricci lower bound.

    The three inequalities are reported with their numeric slack; the
    verdict is their conjunction.
    """
    H_bdry = np.abs(spec.H_at(bgeom.points))
    sup_H = float(np.max(H_bdry))
    if grid is not None:
        sup_H = max(sup_H, float(np.max(np.abs(spec.H_nodes(grid)))))
    inf_c = bgeom.inf_H_cyl
    n = bgeom.n
    ric = float(spec.chart.ric_lower)
    return HypothesisVerdict(
        sup_H=sup_H,
        inf_Hcyl=inf_c,
        ric_lower=ric,
        cyl_positive=inf_c > 0.0,
        h_ok=sup_H <= inf_c + 1e-12,
        ric_ok=ric >= -n * inf_c ** 2 - 1e-12,
        slack_H=inf_c - sup_H,
        slack_ric=ric + n * inf_c ** 2,
    )


# ---------------------------------------------------------------------------
# normal geodesic flow and the Riccati envelope

@dataclass
class RiccatiCurve:
    eps: np.ndarray        # (E,)
    H_direct: np.ndarray   # (S, E) cylinder curvature of the level sets
    H_envelope: np.ndarray  # (S, E) scalar lower-bound integration
    bgeom: BoundaryGeometry

    def monotone(self, tol=1e-9):
        return bool(np.all(np.diff(self.H_direct, axis=1) >= -tol))


def _geodesic_flow(chart, pos, vel, eps_total, nsteps, h_fd=GEOM_H_FD):
    """RK4 integration of the geodesic equation; yields every step.

    Flat charts flow along straight lines exactly.
    """
    dt = eps_total / nsteps
    flat = chart.flat_metric

    def acc(p, v):
        if flat:
            return np.zeros_like(v)
        gam = christoffels_at(chart, p, h_fd)
        return -np.einsum("...kij,...i,...j->...k", gam, v, v)

    p, v = pos.copy(), vel.copy()
    yield p.copy(), v.copy()
    for _ in range(nsteps):
        k1p, k1v = v, acc(p, v)
        k2p, k2v = v + 0.5 * dt * k1v, acc(p + 0.5 * dt * k1p, v + 0.5 * dt * k1v)
        k3p, k3v = v + 0.5 * dt * k2v, acc(p + 0.5 * dt * k2p, v + 0.5 * dt * k2v)
        k4p, k4v = v + dt * k3v, acc(p + dt * k3p, v + dt * k3v)
        p = p + dt / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        yield p.copy(), v.copy()


def riccati_evolution(chart, domain, eps_max, deps, samples=64, n=2,
                      ric_lower=None, h_fd=GEOM_H_FD):
    """Cylinder curvature along inward equidistants, two ways.

    Direct: each boundary sample is flowed along its inward normal
    geodesic; the level-set curvature at depth eps comes from the
    flowed parameter triplet.  Envelope: the scalar Riccati bound
    dH/deps = H^2 + ric_lower / n integrated from the boundary value,
    which must stay below the direct curve when the hypotheses hold.
    """
    if eps_max <= 0 or deps <= 0:
        raise ValueError("eps_max and deps must be positive")
    ric = chart.ric_lower if ric_lower is None else float(ric_lower)
    bg = boundary_geometry(chart, domain, samples=samples, n=n, h_fd=h_fd)
    nsteps = max(1, int(round(eps_max / deps)))
    eps = np.linspace(0.0, eps_max, nsteps + 1)

    pos = np.concatenate([bg.points_minus, bg.points, bg.points_plus])
    vel = np.concatenate([bg.eta_minus, bg.eta, bg.eta_plus])
    S = len(bg.points)

    H_direct = np.empty((S, nsteps + 1))
    width0 = np.linalg.norm(bg.points_plus - bg.points_minus, axis=1)
    for k, (p, v) in enumerate(_geodesic_flow(chart, pos, vel, eps_max, nsteps, h_fd)):
        pm, p0, pp = p[:S], p[S:2 * S], p[2 * S:]
        width = np.linalg.norm(pp - pm, axis=1)
        if np.any(width < 0.05 * width0):
            raise TubularWidthExceeded(
                f"normal geodesics focus before eps = {eps[k]:.4g}"
            )
        eta_eps = _sigma_normalize(chart, p0, v[S:2 * S])
        H_direct[:, k], _, _ = _curve_H_cyl(chart, pm, p0, pp, bg.dt, eta_eps,
                                            n=n, h_fd=h_fd)

    # scalar comparison ODE, RK4 with the same step
    H_env = np.empty_like(H_direct)
    H_env[:, 0] = bg.H_cyl
    de = eps_max / nsteps

    def rhs(Hval):
        return Hval * Hval + ric / n

    for k in range(nsteps):
        Hk = H_env[:, k]
        k1 = rhs(Hk)
        k2 = rhs(Hk + 0.5 * de * k1)
        k3 = rhs(Hk + 0.5 * de * k2)
        k4 = rhs(Hk + de * k3)
        H_env[:, k + 1] = Hk + de / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(H_env[:, k + 1])):
            raise TubularWidthExceeded(
                f"Riccati envelope blows up before eps = {eps[k + 1]:.4g}"
            )

    return RiccatiCurve(eps=eps, H_direct=H_direct, H_envelope=H_env, bgeom=bg)


# ---------------------------------------------------------------------------
# interpolation helpers

def _interp_vector(grid, gx, gy, p):
    """Bilinear interpolation of a nodal vector field; None when the
    containing cell has a non-inside corner."""
    h = grid.h
    sx = (p[0] - grid.x_origin) / h
    sy = (p[1] - grid.y_origin) / h
    ix, iy = int(np.floor(sx)), int(np.floor(sy))
    tx, ty = sx - ix, sy - iy
    ids = (grid.node_index[iy, ix], grid.node_index[iy, ix + 1],
           grid.node_index[iy + 1, ix], grid.node_index[iy + 1, ix + 1])
    if min(ids) < 0:
        return None
    w = ((1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty)
    return np.array([sum(wk * gx[i] for wk, i in zip(w, ids)),
                     sum(wk * gy[i] for wk, i in zip(w, ids))])


def _interp_ext(grid, ext_map, u_ext, p):
    """Bilinear interpolation over the ghost-extended lattice."""
    h = grid.h
    sx = (p[0] - grid.x_origin) / h
    sy = (p[1] - grid.y_origin) / h
    ix, iy = int(np.floor(sx)), int(np.floor(sy))
    tx, ty = sx - ix, sy - iy
    ids = (ext_map[iy, ix], ext_map[iy, ix + 1],
           ext_map[iy + 1, ix], ext_map[iy + 1, ix + 1])
    if min(ids) < 0:
        good = [(i, v) for i, v in enumerate(ids) if v >= 0]
        if not good:
            raise CertificateFailed(f"no data near boundary point ({p[0]:.4g}, {p[1]:.4g})")
        return float(np.mean([u_ext[v] for _, v in good]))
    w = ((1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty)
    return float(sum(wk * u_ext[i] for wk, i in zip(w, ids)))


def _nearest_sample(grid, bgeom, pts):
    """Index of the locally nearest boundary sample for each point."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    d2 = ((pts[:, None, :] - bgeom.points[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)


def boundary_gradient_samples(spec, grid, u, bgeom):
    """sup-norm data of grad u along the boundary.

    The normal derivative comes from the nodal gradient field (itself
    second-order accurate) sampled at one and two spacings inward and
    extrapolated linearly back to the boundary; the tangential
    derivative comes from the boundary data.  Falls back to one-sided
    value differencing where the interpolation cells are incomplete.
    Returns (grad_norms, normal_derivs, tangential_derivs).
    """
    chart = spec.chart
    h = grid.h
    phi0 = spec.phi_at(bgeom.points)
    phi_m = spec.phi_at(bgeom.points_minus)
    phi_p = spec.phi_at(bgeom.points_plus)
    sig = chart.metric_at(bgeom.points)
    speed = np.sqrt(np.einsum("si,sij,sj->s", bgeom.tangents, sig, bgeom.tangents))
    dphi_dt = (phi_p - phi_m) / (2.0 * bgeom.dt)
    tang_deriv = dphi_dt / speed            # derivative along the sigma-unit tangent

    op = _get_operator(chart, grid, spec.n)
    u_ext = op.extend(np.asarray(u, dtype=float), spec.phi_links(grid))
    gx = op.Gx @ u_ext
    gy = op.Gy @ u_ext
    ext_map = op._ext_id_map()

    a, b = 1.5 * h, 2.5 * h   # gradient sample depths; cells there avoid ghosts
    norm_deriv = np.empty(len(phi0))
    for k, (y, eta) in enumerate(zip(bgeom.points, bgeom.eta)):
        g1 = _interp_vector(grid, gx, gy, y + a * eta)
        g2 = _interp_vector(grid, gx, gy, y + b * eta)
        if g1 is not None and g2 is not None:
            # linear extrapolation of the eta component back to the boundary
            d1, d2 = g1 @ eta, g2 @ eta
            norm_deriv[k] = (b * d1 - a * d2) / (b - a)
        else:
            u1 = _interp_ext(grid, ext_map, u_ext, y + h * eta)
            u2 = _interp_ext(grid, ext_map, u_ext, y + 2.0 * h * eta)
            norm_deriv[k] = (-3.0 * phi0[k] + 4.0 * u1 - u2) / (2.0 * h)
    grad_norm = np.sqrt(norm_deriv ** 2 + tang_deriv ** 2)
    return grad_norm, norm_deriv, tang_deriv


# ---------------------------------------------------------------------------
# height barrier

@dataclass
class HeightCertificate:
    C: float
    A: float
    margin: np.ndarray       # (N_checked,) min of upper and lower margins
    checked_nodes: np.ndarray
    crude_bound: float       # sup of the barrier over the domain
    crude_ok: bool
    passed: bool = True


def _sigma_diameter_bound(chart, grid):
    if chart.flat_metric:
        return grid.domain.diameter_euclid()
    sig = chart.metric_at(grid.points)
    tr = sig[:, 0, 0] + sig[:, 1, 1]
    disc = np.sqrt((sig[:, 0, 0] - sig[:, 1, 1]) ** 2 / 4 + sig[:, 0, 1] ** 2)
    lam_max = np.max(tr / 2 + disc)
    return grid.domain.diameter_euclid() * float(np.sqrt(lam_max))


def height_barrier(C, A, d):
    """Exponential distance barrier (e^{CA}/C)(1 - e^{-Cd})."""
    return np.exp(C * A) / C * (1.0 - np.exp(-C * np.asarray(d, dtype=float)))


def height_barrier_certificate(spec, grid, u, bgeom=None, band=None, ladder=None):
    """Smallest ladder constant whose distance barrier encloses u.

    Checks phi_sup + h(d) >= u and phi_inf - h(d) <= u pointwise (on
    the whole domain for flat charts, on the distance band `band`
    otherwise), and independently the crude bound
    sup|u| <= sup h + sup|phi|.  Raises CertificateFailed when the
    ladder is exhausted.
    """
    u = grid.check_field(np.asarray(u, dtype=float), "u")
    phi_vals = spec.phi_links(grid)
    phi_sup = float(np.max(phi_vals))
    phi_inf = float(np.min(phi_vals))
    d = grid.dist
    if spec.chart.flat_metric or band is None:
        nodes = np.arange(grid.num_inside)
    else:
        nodes = np.nonzero(d <= band)[0]
    A = 1.01 * _sigma_diameter_bound(spec.chart, grid)
    tol = 1e-12 * (1.0 + np.max(np.abs(u)))
    margin = None
    for C in (LADDER if ladder is None else ladder):
        with np.errstate(over="ignore"):
            hvals = height_barrier(C, A, d[nodes])
        if not np.all(np.isfinite(hvals)):
            break   # barrier overflowed before enclosing u: report failure
        upper = phi_sup + hvals - u[nodes]
        lower = u[nodes] - (phi_inf - hvals)
        margin = np.minimum(upper, lower)
        if np.all(margin >= -tol):
            crude = float(np.max(height_barrier(C, A, d)))
            crude_ok = bool(np.max(np.abs(u)) <= crude + max(abs(phi_sup), abs(phi_inf)) + 1e-9)
            return HeightCertificate(C=C, A=A, margin=margin,
                                     checked_nodes=nodes, crude_bound=crude,
                                     crude_ok=crude_ok)
    if margin is None:
        raise CertificateFailed("height barrier overflowed on every ladder rung")
    k = int(nodes[np.argmin(margin)])
    raise CertificateFailed(
        "height barrier ladder exhausted", node=k, point=tuple(grid.points[k])
    )


# ---------------------------------------------------------------------------
# boundary gradient barrier

@dataclass
class BarrierParams:
    K: float
    C: float
    eps: float

    @property
    def mu(self):
        return self.C / np.log1p(self.K)

    def psi(self, d):
        return self.mu * np.log1p(self.K * np.asarray(d, dtype=float))

    def psi_prime0(self):
        return self.mu * self.K


@dataclass
class GradientCertificate:
    params: BarrierParams
    extension: str            # "constant" or "linear_tilt"
    condition_ok: bool        # <grad phi_ext, eta> < -f^{1/2} delta . eta strictly
    sup_grad_boundary: float
    bound: float
    margin: np.ndarray
    checked_nodes: np.ndarray
    passed: bool = True


def _extension_condition(spec, bgeom):
    """Threshold -f^{1/2} delta . eta at the samples (strictly positive
    is what the constant extension needs)."""
    chart = spec.chart
    tilt = np.sqrt(chart.f_at(bgeom.points))[:, None] * chart.delta_at(bgeom.points)
    return -np.einsum("si,si->s", tilt, bgeom.eta)


def boundary_gradient_certificate(spec, grid, u, params=None, bgeom=None,
                                  eps=None, ladder=None):
    """Logarithmic barrier certificate for the boundary gradient.

    Verifies phi_ext + psi(d) >= u and phi_ext - psi(d) <= u on the
    tubular band, with phi extended constantly along inward normals (a
    linear tilt is substituted when the strict extension condition
    fails).  Reports sup |grad u| on the boundary and the bound implied
    by psi'(0) = mu K.  Searches (K, C) ladders when params is None.
    """
    u = grid.check_field(np.asarray(u, dtype=float), "u")
    if bgeom is None:
        bgeom = boundary_geometry(spec.chart, spec.domain,
                                  samples=max(64, grid.num_links), n=spec.n)
    d = grid.dist
    if eps is None:
        eps = params.eps if params is not None else 0.3 * float(np.max(d))
    band = np.nonzero(d <= eps)[0]
    if len(band) == 0:
        raise CertificateFailed("tubular band contains no node")

    threshold = _extension_condition(spec, bgeom)
    condition_ok = bool(np.all(threshold > 1e-12))
    feet = _nearest_sample(grid, bgeom, grid.points[band])
    phi_feet = spec.phi_at(bgeom.points[feet])
    if condition_ok:
        extension = "constant"
        phi_ext = phi_feet
        slope_sup = 0.0
    else:
        extension = "linear_tilt"
        slope = np.minimum(threshold, 0.0) - 1e-3
        phi_ext = phi_feet + slope[feet] * d[band]
        slope_sup = float(np.max(np.abs(slope)))

    grad_norm, _, tang = boundary_gradient_samples(spec, grid, u, bgeom)
    sup_grad = float(np.max(grad_norm))
    tol = 1e-9 * (1.0 + np.max(np.abs(u)))

    def check(p):
        psi = p.psi(d[band])
        upper = phi_ext + psi - u[band]
        lower = u[band] - (phi_ext - psi)
        return np.minimum(upper, lower)

    rungs = LADDER if ladder is None else ladder
    candidates = [params] if params is not None else [
        BarrierParams(K=K, C=C, eps=eps) for K in rungs for C in rungs
    ]
    for p in candidates:
        margin = check(p)
        bound = np.hypot(p.psi_prime0() + slope_sup, np.max(np.abs(tang)))
        if np.all(margin >= -tol) and sup_grad <= bound + 1e-9:
            return GradientCertificate(
                params=p, extension=extension, condition_ok=condition_ok,
                sup_grad_boundary=sup_grad, bound=float(bound),
                margin=margin, checked_nodes=band,
            )
    k = int(band[np.argmin(margin)])
    raise CertificateFailed(
        "gradient barrier ladder exhausted", node=k, point=tuple(grid.points[k])
    )


# ---------------------------------------------------------------------------
# flux identity

@dataclass
class FluxResult:
    boundary: float
    bulk: float

    @property
    def imbalance(self):
        return self.boundary - self.bulk

    @property
    def relative(self):
        return abs(self.imbalance) / (abs(self.boundary) + abs(self.bulk) + 1.0)


def flux_balance(spec, grid, u, bgeom=None):
    """Boundary flux of <Y, nu> against the bulk flux of n H <Y, N>.

    Both sides are expressed in base data: the boundary integrand is
    -f^{-1/2} hat_u(eta) / W per sigma arclength, the bulk integrand is
    n H (1/W) times the graph area element W f^{-1/2} per sigma area.
    """
    chart = spec.chart
    u = grid.check_field(np.asarray(u, dtype=float), "u")
    if bgeom is None:
        bgeom = boundary_geometry(chart, spec.domain,
                                  samples=max(64, grid.num_links), n=spec.n)

    _, norm_deriv, tang_deriv = boundary_gradient_samples(spec, grid, u, bgeom)
    f_b = chart.f_at(bgeom.points)
    tilt = np.sqrt(f_b)[:, None] * chart.delta_at(bgeom.points)
    sig = chart.metric_at(bgeom.points)
    speed = np.sqrt(np.einsum("si,sij,sj->s", bgeom.tangents, sig, bgeom.tangents))
    t_unit = bgeom.tangents / speed[:, None]
    uhat_eta = norm_deriv + np.einsum("si,si->s", tilt, bgeom.eta)
    uhat_tan = tang_deriv + np.einsum("si,si->s", tilt, t_unit)
    W_b = np.sqrt(f_b + uhat_eta ** 2 + uhat_tan ** 2)
    boundary = float(np.sum(-uhat_eta / (W_b * np.sqrt(f_b)) * bgeom.weights))

    op = _get_operator(chart, grid, spec.n)
    state = op.state(u, spec.phi_links(grid), spec.H_nodes(grid))
    H_vals = spec.H_nodes(grid)
    f_n = op.node_f
    # n H <Y, N> times the graph area element relative to sqrt(sigma) dx
    integrand = spec.n * H_vals * (1.0 / state.W) * (state.W / np.sqrt(f_n))
    bulk = integrate(grid, integrand, chart)
    return FluxResult(boundary=boundary, bulk=bulk)


# ---------------------------------------------------------------------------
# angle function

@dataclass
class ThetaReport:
    theta: np.ndarray            # 1 / W, the normal-to-fiber pairing
    theta_fiber_scaled: np.ndarray  # f / W variant
    normalization_gap: float
    min_value: float
    min_node: int
    min_point: tuple
    band_min: float
    interior_min: float
    passed: bool


def theta_field(spec, grid, u, band_cells=1.5, slack=1e-6, require_pass=True):
    """Angle function Theta = <N, Y> = 1/W with its minimum location.

    For constant H the minimum must sit within one cell of the
    boundary, up to `slack`.  Both the 1/W normalization and the
    fiber-scaled f/W variant are reported; the minimum principle is
    checked on 1/W.
    """
    if not spec.H_is_constant(grid):
        raise ValueError("theta minimum principle applies to constant H only")
    u = grid.check_field(np.asarray(u, dtype=float), "u")
    op = _get_operator(spec.chart, grid, spec.n)
    state = op.state(u, spec.phi_links(grid), spec.H_nodes(grid))
    theta = 1.0 / state.W
    theta_scaled = op.node_f / state.W
    gap = float(np.max(np.abs(theta_scaled - theta)))

    band = grid.dist <= band_cells * grid.h
    band_min = float(np.min(theta[band])) if np.any(band) else np.inf
    interior_min = float(np.min(theta[~band])) if np.any(~band) else np.inf
    k = int(np.argmin(theta))
    passed = interior_min >= band_min - slack
    report = ThetaReport(
        theta=theta, theta_fiber_scaled=theta_scaled, normalization_gap=gap,
        min_value=float(theta[k]), min_node=k, min_point=tuple(grid.points[k]),
        band_min=band_min, interior_min=interior_min, passed=passed,
    )
    if require_pass and not passed:
        raise MinPrincipleViolated(
            f"theta minimum {interior_min:.6g} in the interior undercuts the "
            f"boundary band minimum {band_min:.6g}",
            node=k, point=tuple(grid.points[k]),
        )
    return report


# ---------------------------------------------------------------------------
# full verification suite

@dataclass
class VerifyReport:
    items: dict = field(default_factory=dict)
    margins: dict = field(default_factory=dict)

    @property
    def passed(self):
        # advisory items (the solvability hypothesis is a property of the
        # problem, not of the solution) and skipped items do not gate
        return all(item.get("passed", False) for item in self.items.values()
                   if not (item.get("skipped", False) or item.get("advisory", False)))

    def to_json_dict(self):
        out = {"schema": 1, "passed": self.passed, "items": self.items}
        return json.loads(json.dumps(out, default=float))


def verify(spec, grid, u, newton_tol=1e-10, rng_seed=7):
    """Run every applicable certificate on a solved field."""
    from .operator import residual as residual_of

    rep = VerifyReport()
    u = grid.check_field(np.asarray(u, dtype=float), "u")

    r = residual_of(spec, grid, u)
    res_inf = float(np.max(np.abs(r)))
    rep.items["residual"] = {
        "passed": bool(res_inf <= 2.0 * newton_tol),
        "residual_inf": res_inf,
        "tolerance": 2.0 * newton_tol,
    }

    op = _get_operator(spec.chart, grid, spec.n)
    state = op.state(u, spec.phi_links(grid), spec.H_nodes(grid))
    rng = np.random.default_rng(rng_seed)
    xi = rng.normal(size=(8, 2))
    quad = np.einsum("nij,ki,kj->nk", state.A, xi, xi)
    norm2 = np.einsum("nij,ki,kj->nk", op.node_siginv, xi, xi)
    ratio = quad / norm2
    lo = op.node_f[:, None]
    hi = (state.W ** 2)[:, None]
    ell_ok = bool(np.all(ratio >= lo * (1 - 1e-10) - 1e-10)
                  and np.all(ratio <= hi * (1 + 1e-10) + 1e-10))
    rep.items["ellipticity"] = {"passed": ell_ok}

    bgeom = boundary_geometry(spec.chart, spec.domain,
                              samples=max(64, grid.num_links), n=spec.n)
    hypo = hypothesis_check(spec, bgeom, grid=grid)
    rep.items["hypothesis"] = dict(hypo.as_dict(), passed=hypo.passed,
                                   advisory=True)

    if hypo.passed:
        try:
            hc = height_barrier_certificate(spec, grid, u, bgeom=bgeom)
            rep.items["height_barrier"] = {
                "passed": True, "C": hc.C, "A": hc.A,
                "min_margin": float(np.min(hc.margin)),
                "crude_ok": hc.crude_ok,
            }
            rep.margins["height"] = (hc.checked_nodes, hc.margin)
        except CertificateFailed as exc:
            rep.items["height_barrier"] = {"passed": False, "reason": str(exc)}
        try:
            gc = boundary_gradient_certificate(spec, grid, u, bgeom=bgeom)
            rep.items["gradient_barrier"] = {
                "passed": True, "K": gc.params.K, "C": gc.params.C,
                "mu": gc.params.mu, "extension": gc.extension,
                "sup_grad_boundary": gc.sup_grad_boundary, "bound": gc.bound,
                "min_margin": float(np.min(gc.margin)),
            }
            rep.margins["gradient"] = (gc.checked_nodes, gc.margin)
        except CertificateFailed as exc:
            rep.items["gradient_barrier"] = {"passed": False, "reason": str(exc)}
        try:
            eps_max = 0.3 * float(np.max(grid.dist))
            curve = riccati_evolution(spec.chart, spec.domain, eps_max,
                                      eps_max / 16.0, samples=64, n=spec.n)
            envelope_ok = bool(np.all(curve.H_direct >= curve.H_envelope - 1e-6))
            rep.items["riccati"] = {
                "passed": curve.monotone() and envelope_ok,
                "monotone": curve.monotone(),
                "envelope_below": envelope_ok,
            }
        except TubularWidthExceeded as exc:
            rep.items["riccati"] = {"passed": False, "reason": str(exc)}
    else:
        for name in ("height_barrier", "gradient_barrier", "riccati"):
            rep.items[name] = {"passed": False, "skipped": True,
                               "reason": "hypothesis check failed"}

    flux = flux_balance(spec, grid, u, bgeom=bgeom)
    flux_tol = max(1e-2, 5.0 * grid.h)
    rep.items["flux"] = {
        "passed": bool(flux.relative <= flux_tol),
        "boundary": flux.boundary, "bulk": flux.bulk,
        "imbalance": flux.imbalance, "relative": flux.relative,
        "tolerance": flux_tol,
    }

    if spec.H_is_constant(grid):
        try:
            th = theta_field(spec, grid, u)
            rep.items["theta"] = {
                "passed": th.passed, "min_value": th.min_value,
                "min_point": list(th.min_point),
                "normalization_gap": th.normalization_gap,
            }
        except MinPrincipleViolated as exc:
            rep.items["theta"] = {"passed": False, "reason": str(exc)}
    else:
        rep.items["theta"] = {"passed": True, "skipped": True,
                              "reason": "H not constant"}
    return rep
