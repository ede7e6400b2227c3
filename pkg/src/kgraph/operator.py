"""The Killing-graph mean curvature operator on a grid.

For a graph function u over a chart (sigma, f, delta), the tilted
gradient is

    hat_u_i = d_i u + f^{1/2} delta_i        (covariant)
    hat_u^j = sigma^{ij} hat_u_i             (contravariant)
    W       = sqrt(f + hat_u_i hat_u^i)

and the operator in divergence form reads

    Q[u] = div_sigma(hat_u / W) - (1/W) kappa_i hat_u^i,

with kappa_i = d_i f / (2 f).  A graph has prescribed mean curvature H
precisely when Q[u] = n H.  The primary discretization is the flux
form: face-centered fluxes sqrt(det sigma) hat_u^axis / W differenced
over each node cell, with Dirichlet data entering through ghost values
extrapolated across the true boundary crossings (equivalent to
Shortley-Weller stencils).  The nondivergence form built from the
quasilinear coefficients A^{ij} = W^2 sigma^{ij} - hat_u^i hat_u^j is
kept as a cross-check only.

Sign convention: the graph normal points up the fiber, so over a
Euclidean base the lower spherical cap u = -sqrt(R^2 - r^2) has
H = +1/R.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import KGraphError
from .geometry import christoffels_at, inverse_metric_at, kappa_vector_at
from .grid import gradient_at

THETA_FLOOR = 1e-6  # ghost extrapolation keeps theta away from zero
THETA_ELIM = 0.05   # below this, a node is pinned to boundary interpolation:
                    # extrapolation weights ~ 1/theta would otherwise amplify
                    # fp noise past any reasonable Newton tolerance


@dataclass(frozen=True)
class ProblemSpec:
    """A Dirichlet problem: chart, domain, prescribed H, boundary data phi.

    H may be a constant, a callable over points, or a node array;
    phi a constant, a callable over boundary points, or a link array.
    """

    chart: object
    domain: object
    H: object = 0.0
    phi: object = 0.0
    n: int = 2

    def H_nodes(self, grid):
        vals = _eval_data(self.H, grid.points)
        grid.check_field(vals, "H")
        return vals

    def H_at(self, points):
        return _eval_data(self.H, points)

    def phi_links(self, grid):
        return self.phi_at(grid.link_points)

    def phi_at(self, points):
        points = np.asarray(points, dtype=float)
        vals = _eval_data(self.phi, points)
        if not np.all(np.isfinite(vals)):
            raise KGraphError("boundary data phi is not finite on the boundary")
        return vals

    def H_is_constant(self, grid, tol=1e-12):
        vals = self.H_nodes(grid)
        return float(np.ptp(vals)) <= tol * (1.0 + float(np.max(np.abs(vals))))


def _eval_data(data, points):
    points = np.asarray(points, dtype=float)
    lead = points.shape[:-1]
    if callable(data):
        out = np.asarray(data(points), dtype=float)
        return np.broadcast_to(out, lead).astype(float)
    arr = np.asarray(data, dtype=float)
    if arr.ndim == 0:
        return np.full(lead, float(arr))
    return arr.astype(float)


@dataclass
class OperatorState:
    """Pointwise operator data over inside nodes."""

    u_hat_up: np.ndarray    # (N, 2) contravariant
    u_hat_down: np.ndarray  # (N, 2) covariant
    W: np.ndarray           # (N,)
    A: np.ndarray           # (N, 2, 2) quasilinear coefficients
    B: np.ndarray           # (N,) n H W^3


class GraphOperator:
    """Discrete operator bound to one (chart, grid) pair.

    Assembles the residual Q[u] - n H and its analytic sparse Jacobian
    from a fixed set of sparse incidence matrices, so repeated Newton
    calls only pay pointwise nonlinear work.
    """

    def __init__(self, chart, grid, n=2):
        self.chart = chart
        self.grid = grid
        self.n = n
        self._find_eliminated()
        self._build_extension()
        self._build_gradients()
        self._build_faces()
        self._node_geometry()

    def _find_eliminated(self):
        """Nodes hugging the boundary (min link theta < THETA_ELIM).

        Their curvature equation is replaced by linear interpolation
        along the closest link between the crossing value and the
        opposite neighbor; second-order consistent and free of the
        1/theta weights that otherwise set an fp noise floor.
        """
        grid = self.grid
        N = grid.num_inside
        self.elim_link = -np.ones(N, dtype=int)
        best = np.full(N, THETA_ELIM)
        for k in range(grid.num_links):
            n = int(grid.link_node[k])
            theta = float(grid.link_theta[k])
            if theta < best[n]:
                best[n] = theta
                self.elim_link[n] = k
        self.elim_nodes = np.nonzero(self.elim_link >= 0)[0]
        # constraint row: u_n interpolated along the closest link from the
        # crossing value and up to three inward neighbors (cubic when
        # available, so the exact solution's row residual is O(theta h^2)),
        # scaled by 1/h^2 to match the PDE row magnitudes
        rows, cols, vals = [], [], []
        prows, pcols, pvals = [], [], []
        scale = 1.0 / grid.h ** 2
        for n in self.elim_nodes:
            k = self.elim_link[n]
            th = float(grid.link_theta[k])
            d = int(grid.link_dir[k])
            sx, sy = ((1, 0), (-1, 0), (0, 1), (0, -1))[d]
            cx, cy = grid.inside_ij[n]
            inward = []
            for step in (1, 2, 3):
                jx, jy = cx - step * sx, cy - step * sy
                j = grid.node_index[jy, jx] if 0 <= jx < grid.nx and 0 <= jy < grid.ny else -1
                if j < 0:
                    break
                inward.append(int(j))
            rows.append(n)
            cols.append(n)
            vals.append(scale)
            if len(inward) == 3:
                coefs = [6.0 / ((1 + th) * (2 + th) * (3 + th)),
                         3.0 * th / (1 + th),
                         -3.0 * th / (2 + th),
                         th / (3 + th)]
            elif len(inward) == 2:
                coefs = [2.0 / ((1 + th) * (2 + th)),
                         2.0 * th / (1 + th),
                         -th / (2 + th)]
            elif len(inward) == 1:
                coefs = [1.0 / (1 + th), th / (1 + th)]
            else:
                coefs = [1.0]
            prows.append(n)
            pcols.append(int(k))
            pvals.append(coefs[0] * scale)
            for j, c in zip(inward, coefs[1:]):
                rows.append(n)
                cols.append(j)
                vals.append(-c * scale)
        L = max(grid.num_links, 1)
        self._elim_J = sp.csr_matrix((vals, (rows, cols)), shape=(N, N))
        self._elim_phi = sp.csr_matrix((pvals, (prows, pcols)), shape=(N, L))
        keep = np.ones(N)
        keep[self.elim_nodes] = 0.0
        self._keep_diag = sp.diags(keep)
        self._elim_any = len(self.elim_nodes) > 0

    # -- assembly of constant sparse operators --------------------------

    def _ext_id_map(self):
        grid = self.grid
        ext = np.array(grid.node_index, dtype=int)
        gmask = grid.ghost_index >= 0
        ext[gmask] = grid.num_inside + grid.ghost_index[gmask]
        return ext

    def _build_extension(self):
        grid = self.grid
        N, Ng, L = grid.num_inside, grid.num_ghost, grid.num_links
        rows, cols, vals = list(range(N)), list(range(N)), [1.0] * N
        brows, bcols, bvals = [], [], []
        counts = np.zeros(Ng)
        g_rows = {}

        for k in range(L):
            n = int(grid.link_node[k])
            d = int(grid.link_dir[k])
            theta = max(float(grid.link_theta[k]), THETA_FLOOR)
            e = grid.neighbor_ext[n, d]
            g = e - N
            sx, sy = ((1, 0), (-1, 0), (0, 1), (0, -1))[d]
            cx, cy = grid.inside_ij[n]
            m = grid.node_index[cy - sy, cx - sx]
            mm = -1
            if 0 <= cy - 2 * sy < grid.ny and 0 <= cx - 2 * sx < grid.nx:
                mm = grid.node_index[cy - 2 * sy, cx - 2 * sx]
            entry = g_rows.setdefault(g, {"node": {}, "phi": {}})
            if theta < THETA_ELIM:
                # crossing nearly on the node: extrapolate past it without
                # the 1/theta weights, treating the crossing as the sample
                if m >= 0 and mm >= 0:
                    cmm = 2.0 * (1.0 - theta) / (2.0 + theta)
                    cm = -3.0 * (1.0 - theta) / (1.0 + theta)
                    cp = 6.0 / ((2.0 + theta) * (1.0 + theta))
                    entry["node"][int(mm)] = entry["node"].get(int(mm), 0.0) + cmm
                    entry["node"][int(m)] = entry["node"].get(int(m), 0.0) + cm
                elif m >= 0:
                    cm = -(1.0 - theta) / (1.0 + theta)
                    cp = 2.0 / (1.0 + theta)
                    entry["node"][int(m)] = entry["node"].get(int(m), 0.0) + cm
                else:
                    cp = 1.0
            elif m >= 0 and mm >= 0:
                # cubic through (-2h, -h, 0, theta h), evaluated at +h
                cmm = -(1.0 - theta) / (2.0 + theta)
                cm = 3.0 * (1.0 - theta) / (1.0 + theta)
                cn = -3.0 * (1.0 - theta) / theta
                cp = 6.0 / ((2.0 + theta) * (1.0 + theta) * theta)
                entry["node"][int(mm)] = entry["node"].get(int(mm), 0.0) + cmm
                entry["node"][int(m)] = entry["node"].get(int(m), 0.0) + cm
                entry["node"][n] = entry["node"].get(n, 0.0) + cn
            elif m >= 0:
                # quadratic through (-h, 0, theta h)
                cm = (1.0 - theta) / (1.0 + theta)
                cn = -2.0 * (1.0 - theta) / theta
                cp = 2.0 / (theta * (1.0 + theta))
                entry["node"][int(m)] = entry["node"].get(int(m), 0.0) + cm
                entry["node"][n] = entry["node"].get(n, 0.0) + cn
            else:
                cp = 1.0 / theta
                entry["node"][n] = entry["node"].get(n, 0.0) + (1.0 - 1.0 / theta)
            entry["phi"][k] = entry["phi"].get(k, 0.0) + cp
            counts[g] += 1.0

        for g, entry in g_rows.items():
            c = counts[g]
            for j, v in entry["node"].items():
                rows.append(N + g)
                cols.append(j)
                vals.append(v / c)
            for k, v in entry["phi"].items():
                brows.append(N + g)
                bcols.append(k)
                bvals.append(v / c)

        self.P = sp.csr_matrix((vals, (rows, cols)), shape=(N + Ng, N))
        self.B = sp.csr_matrix((bvals, (brows, bcols)), shape=(N + Ng, max(L, 1)))
        self._L = L

    def _build_gradients(self):
        grid = self.grid
        N, Ng, h = grid.num_inside, grid.num_ghost, grid.h
        rows, cols, vals = [], [], []
        rows2, cols2, vals2 = [], [], []
        for n in range(N):
            ep, em = grid.neighbor_ext[n, 0], grid.neighbor_ext[n, 1]
            rows += [n, n]
            cols += [ep, em]
            vals += [0.5 / h, -0.5 / h]
            ep, em = grid.neighbor_ext[n, 2], grid.neighbor_ext[n, 3]
            rows2 += [n, n]
            cols2 += [ep, em]
            vals2 += [0.5 / h, -0.5 / h]
        self.Gx = sp.csr_matrix((vals, (rows, cols)), shape=(N, N + Ng))
        self.Gy = sp.csr_matrix((vals2, (rows2, cols2)), shape=(N, N + Ng))

    def _build_faces(self):
        grid = self.grid
        N, Ng, h = grid.num_inside, grid.num_ghost, grid.h
        ext = self._ext_id_map()

        fx_ids, fy_ids = {}, {}
        for n in range(N):
            cx, cy = grid.inside_ij[n]
            for key in ((cx, cy), (cx - 1, cy)):
                fx_ids.setdefault(key, len(fx_ids))
            for key in ((cx, cy), (cx, cy - 1)):
                fy_ids.setdefault(key, len(fy_ids))
        Fx, Fy = len(fx_ids), len(fy_ids)
        self.n_faces = Fx + Fy

        def tangential_weights(e_lo, e_hi, behind_lo, behind_hi):
            """Face value of a nodal field from its two sides.

            Both sides inside: midpoint average.  One side a ghost:
            linear extrapolation from the inside node and the next node
            behind it (falls back to the inside value alone).
            """
            if e_lo < N and e_hi < N:
                return [(e_lo, 0.5), (e_hi, 0.5)]
            if e_lo < N:
                back = behind_lo
                if back >= 0 and back < N:
                    return [(e_lo, 1.5), (back, -0.5)]
                return [(e_lo, 1.0)]
            back = behind_hi
            if back >= 0 and back < N:
                return [(e_hi, 1.5), (back, -0.5)]
            return [(e_hi, 1.0)]

        # normal differences and tangential averaging per face
        nrows, ncols, nvals = [], [], []
        arows, acols, avals = [], [], []
        mid = np.empty((Fx + Fy, 2))
        axis = np.empty(Fx + Fy, dtype=int)
        for (fx, fy), fid in fx_ids.items():
            eL, eR = ext[fy, fx], ext[fy, fx + 1]
            nrows += [fid, fid]
            ncols += [eR, eL]
            nvals += [1.0 / h, -1.0 / h]
            wts = tangential_weights(
                eL, eR,
                grid.node_index[fy, fx - 1] if fx >= 1 else -1,
                grid.node_index[fy, fx + 2] if fx + 2 < grid.nx else -1,
            )
            for e, w in wts:
                arows.append(fid)
                acols.append(e)
                avals.append(w)
            mid[fid] = (grid.x_origin + (fx + 0.5) * h, grid.y_origin + fy * h)
            axis[fid] = 0
        nrows2, ncols2, nvals2 = [], [], []
        arows2, acols2, avals2 = [], [], []
        for (fx, fy), fid0 in fy_ids.items():
            fid = Fx + fid0
            eB, eT = ext[fy, fx], ext[fy + 1, fx]
            nrows2 += [fid0, fid0]
            ncols2 += [eT, eB]
            nvals2 += [1.0 / h, -1.0 / h]
            wts = tangential_weights(
                eB, eT,
                grid.node_index[fy - 1, fx] if fy >= 1 else -1,
                grid.node_index[fy + 2, fx] if fy + 2 < grid.ny else -1,
            )
            for e, w in wts:
                arows2.append(fid0)
                acols2.append(e)
                avals2.append(w)
            mid[fid] = (grid.x_origin + fx * h, grid.y_origin + (fy + 0.5) * h)
            axis[fid] = 1

        Dx_norm = sp.csr_matrix((nvals, (nrows, ncols)), shape=(Fx, N + Ng))
        Dy_norm = sp.csr_matrix((nvals2, (nrows2, ncols2)), shape=(Fy, N + Ng))
        Avg_x = sp.csr_matrix((avals, (arows, acols)), shape=(Fx, N))
        Avg_y = sp.csr_matrix((avals2, (arows2, acols2)), shape=(Fy, N))

        self.Mq1 = sp.vstack([Dx_norm, Avg_y @ self.Gx]).tocsr()
        self.Mq2 = sp.vstack([Avg_x @ self.Gy, Dy_norm]).tocsr()
        self.face_mid = mid
        self.face_axis = axis

        # divergence: difference of the four face fluxes per node
        drows, dcols, dvals = [], [], []
        sig = self.chart.metric_at(grid.points)
        sqrt_det_node = np.sqrt(sig[:, 0, 0] * sig[:, 1, 1] - sig[:, 0, 1] ** 2)
        for n in range(N):
            cx, cy = grid.inside_ij[n]
            c = 1.0 / (h * sqrt_det_node[n])
            for fid, s in ((fx_ids[(cx, cy)], +1.0), (fx_ids[(cx - 1, cy)], -1.0)):
                drows.append(n)
                dcols.append(fid)
                dvals.append(s * c)
            for fid0, s in ((fy_ids[(cx, cy)], +1.0), (fy_ids[(cx, cy - 1)], -1.0)):
                drows.append(n)
                dcols.append(Fx + fid0)
                dvals.append(s * c)
        self.Div = sp.csr_matrix((dvals, (drows, dcols)), shape=(N, Fx + Fy))

        # face chart data
        self.face_siginv = inverse_metric_at(self.chart, mid)
        fsig = self.chart.metric_at(mid)
        self.face_sqrt_det = np.sqrt(fsig[:, 0, 0] * fsig[:, 1, 1] - fsig[:, 0, 1] ** 2)
        self.face_f = self.chart.f_at(mid)
        self.face_tilt = np.sqrt(self.face_f)[:, None] * self.chart.delta_at(mid)

    def _node_geometry(self):
        grid = self.grid
        pts = grid.points
        self.node_sig = self.chart.metric_at(pts)
        self.node_siginv = inverse_metric_at(self.chart, pts)
        self.node_f = self.chart.f_at(pts)
        self.node_tilt = np.sqrt(self.node_f)[:, None] * self.chart.delta_at(pts)
        self.node_kappa = kappa_vector_at(self.chart, pts, grid.h)
        self.node_sqrt_det = np.sqrt(
            self.node_sig[:, 0, 0] * self.node_sig[:, 1, 1] - self.node_sig[:, 0, 1] ** 2
        )

    # -- pointwise states ------------------------------------------------

    def extend(self, u, phi_vals):
        u = np.asarray(u, dtype=float)
        out = self.P @ u
        if self._L:
            out += self.B @ np.asarray(phi_vals, dtype=float)
        return out

    def _face_state(self, u_ext):
        q1 = self.Mq1 @ u_ext
        q2 = self.Mq2 @ u_ext
        c = np.stack([q1, q2], axis=-1) + self.face_tilt      # covariant hat_u
        up = np.einsum("fij,fj->fi", self.face_siginv, c)     # contravariant
        W = np.sqrt(self.face_f + np.einsum("fi,fi->f", c, up))
        return c, up, W

    def _node_state(self, u_ext):
        g1 = self.Gx @ u_ext
        g2 = self.Gy @ u_ext
        c = np.stack([g1, g2], axis=-1) + self.node_tilt
        up = np.einsum("nij,nj->ni", self.node_siginv, c)
        W = np.sqrt(self.node_f + np.einsum("ni,ni->n", c, up))
        return c, up, W

    # -- public evaluations ----------------------------------------------

    def residual(self, u, phi_vals, H_vals):
        """Pointwise Q[u] - n H over inside nodes, divergence form."""
        u_ext = self.extend(u, phi_vals)
        _, up_f, W_f = self._face_state(u_ext)
        flux = self.face_sqrt_det * np.take_along_axis(
            up_f, self.face_axis[:, None], axis=1
        )[:, 0] / W_f
        div = self.Div @ flux
        _, up_n, W_n = self._node_state(u_ext)
        low = np.einsum("ni,ni->n", self.node_kappa, up_n) / W_n
        r = div - low - self.n * np.asarray(H_vals, dtype=float)
        if self._elim_any:
            u = np.asarray(u, dtype=float)
            constraint = self._elim_J @ u - self._elim_phi @ np.asarray(
                phi_vals, dtype=float)
            r[self.elim_nodes] = constraint[self.elim_nodes]
        if not np.all(np.isfinite(r)):
            k = int(np.argmax(~np.isfinite(r)))
            x, y = self.grid.points[k]
            raise KGraphError(f"residual not finite at node ({x:.6g}, {y:.6g})")
        return r

    def q_value(self, u, phi_vals):
        """The curvature operator Q[u] alone (no H subtraction)."""
        return self.residual(u, phi_vals, np.zeros(self.grid.num_inside))

    def jacobian(self, u, phi_vals):
        """Analytic sparse Jacobian of `residual` in u at fixed phi.

        Per-face flux derivative is sqrt(det sigma) A^{axis m} / W^3
        with A the quasilinear coefficient matrix, so ellipticity of the
        linearization is inherited from the pointwise inequality
        f |xi|^2 <= A xi xi <= W^2 |xi|^2.
        """
        u_ext = self.extend(u, phi_vals)
        c_f, up_f, W_f = self._face_state(u_ext)
        sig_f = self.face_siginv
        alpha = self.face_axis
        up_alpha = np.take_along_axis(up_f, alpha[:, None], axis=1)[:, 0]
        W2 = W_f * W_f
        coef = []
        for m in range(2):
            sig_am = np.take_along_axis(sig_f[:, :, m], alpha[:, None], axis=1)[:, 0]
            A_am = W2 * sig_am - up_alpha * up_f[:, m]
            coef.append(self.face_sqrt_det * A_am / (W_f * W2))
        flux_part = (sp.diags(coef[0]) @ self.Mq1 + sp.diags(coef[1]) @ self.Mq2)

        c_n, up_n, W_n = self._node_state(u_ext)
        kup = np.einsum("ni,ni->n", self.node_kappa, up_n)
        low_coef = []
        for m in range(2):
            ksig = np.einsum("ni,nim->nm", self.node_kappa, self.node_siginv)[:, m]
            low_coef.append(-(ksig / W_n - kup * up_n[:, m] / W_n ** 3))
        low_part = sp.diags(low_coef[0]) @ self.Gx + sp.diags(low_coef[1]) @ self.Gy
        J = ((self.Div @ flux_part + low_part) @ self.P).tocsr()
        if self._elim_any:
            J = (self._keep_diag @ J + self._elim_J).tocsr()
        return J

    def jacobian_fd(self, u, phi_vals, eps=1e-6):
        """Colored central finite-difference Jacobian; the trusted oracle.

        Dependencies reach up to four cells through ghost fills near
        the boundary, so nodes are colored by (ix mod 9, iy mod 9),
        which keeps same-color columns row-disjoint.
        """
        grid = self.grid
        N = grid.num_inside
        H0 = np.zeros(N)
        reach = 4
        stride = 2 * reach + 1
        color = (grid.inside_ij[:, 0] % stride) * stride + grid.inside_ij[:, 1] % stride
        by_cell = {}
        for n in range(N):
            cx, cy = grid.inside_ij[n]
            by_cell[(cx, cy)] = n
        rows, cols, vals = [], [], []
        for c in range(stride * stride):
            members = np.nonzero(color == c)[0]
            if len(members) == 0:
                continue
            e = np.zeros(N)
            e[members] = 1.0
            rp = self.residual(u + eps * e, phi_vals, H0)
            rm = self.residual(u - eps * e, phi_vals, H0)
            d = (rp - rm) / (2.0 * eps)
            for k in members:
                cx, cy = grid.inside_ij[k]
                for dx in range(-reach, reach + 1):
                    for dy in range(-reach, reach + 1):
                        j = by_cell.get((cx + dx, cy + dy))
                        if j is not None and d[j] != 0.0:
                            rows.append(j)
                            cols.append(k)
                            vals.append(d[j])
        return sp.csr_matrix((vals, (rows, cols)), shape=(N, N))

    def laplace_lift(self, phi_vals):
        """Discrete harmonic extension of the boundary data.

        Solves the linear metric Laplacian with the same ghost
        machinery; used to warm-start Newton with boundary-compatible
        iterates so the saturating flux never sees the raw data jump.
        """
        import scipy.sparse.linalg as spla

        if getattr(self, "_lap_T", None) is None:
            coef = []
            for m in range(2):
                sig_am = np.take_along_axis(
                    self.face_siginv[:, :, m], self.face_axis[:, None], axis=1
                )[:, 0]
                coef.append(self.face_sqrt_det * sig_am)
            T = self.Div @ (sp.diags(coef[0]) @ self.Mq1 + sp.diags(coef[1]) @ self.Mq2)
            self._lap_T = T.tocsr()
            self._lap_A = (T @ self.P).tocsc()
        rhs = -(self._lap_T @ (self.B @ np.asarray(phi_vals, dtype=float)))
        lift = spla.spsolve(self._lap_A, rhs)
        if not np.all(np.isfinite(lift)):
            raise KGraphError("harmonic lift solve returned non-finite values")
        return lift

    def state(self, u, phi_vals, H_vals):
        u_ext = self.extend(u, phi_vals)
        c, up, W = self._node_state(u_ext)
        A = (W * W)[:, None, None] * self.node_siginv - np.einsum("ni,nj->nij", up, up)
        B = self.n * np.asarray(H_vals, dtype=float) * W ** 3
        return OperatorState(u_hat_up=up, u_hat_down=c, W=W, A=A, B=B)

    def functional(self, u, phi_vals, fiber_weighted=False):
        """Integral of W (optionally of W / sqrt(f)) against sqrt(sigma).

        The fiber-weighted variant is the true graph area and is the
        quantity whose first variation matches the H = 0 residual when
        f is not constant.
        """
        from .grid import integrate

        u_ext = self.extend(u, phi_vals)
        _, _, W = self._node_state(u_ext)
        field = W / np.sqrt(self.node_f) if fiber_weighted else W
        return integrate(self.grid, field, self.chart)

    def residual_nondivergence(self, u, phi_vals, H_vals, gamma_mode="full"):
        """Nondivergence-form residual on interior nodes (cross-check).

        gamma_mode "full" keeps the antisymmetric bracket part of the
        covariant derivative of hat_u; "symmetrized" drops it.  The
        symmetric contraction against A^{ij} makes both agree to
        rounding.  Non-interior entries are NaN.
        """
        grid = self.grid
        N = grid.num_inside
        u_ext = self.extend(u, phi_vals)
        c, up, W = self._node_state(u_ext)
        interior = grid.interior_mask
        out = np.full(N, np.nan)

        h = grid.h
        ext_id = self._ext_id_map()
        gam = christoffels_at(self.chart, grid.points, h)

        # d_i tilt_k by central differences of the chart tilt
        def tilt(points):
            return np.sqrt(self.chart.f_at(points))[..., None] * self.chart.delta_at(points)

        dt = np.empty((N, 2, 2))
        for a in range(2):
            step = np.zeros(2)
            step[a] = h
            dt[:, a, :] = (tilt(grid.points + step) - tilt(grid.points - step)) / (2 * h)

        idx = np.nonzero(interior)[0]
        Hv = self.n * np.asarray(H_vals, dtype=float)
        for n in idx:
            cx, cy = grid.inside_ij[n]
            up_c = u_ext[ext_id[cy, cx + 1]]
            um_c = u_ext[ext_id[cy, cx - 1]]
            vp_c = u_ext[ext_id[cy + 1, cx]]
            vm_c = u_ext[ext_id[cy - 1, cx]]
            u0 = u_ext[n]
            uxx = (up_c - 2 * u0 + um_c) / h ** 2
            uyy = (vp_c - 2 * u0 + vm_c) / h ** 2
            uxy = (u_ext[ext_id[cy + 1, cx + 1]] - u_ext[ext_id[cy - 1, cx + 1]]
                   - u_ext[ext_id[cy + 1, cx - 1]] + u_ext[ext_id[cy - 1, cx - 1]]) / (4 * h ** 2)
            hess = np.array([[uxx, uxy], [uxy, uyy]])
            duhat = hess + dt[n]            # [i, k] = d_i hat_u_k
            M = duhat.T - np.einsum("lki,l->ki", gam[n], c[n])  # [k, i]
            if gamma_mode == "symmetrized":
                M = 0.5 * (M + M.T)
            A = (W[n] ** 2) * self.node_siginv[n] - np.outer(up[n], up[n])
            kup = self.node_kappa[n] @ up[n]
            out[n] = (np.einsum("ik,ki->", A, M)
                      - (self.node_f[n] + W[n] ** 2) * kup) / W[n] ** 3 - Hv[n]
        return out


_OP_CACHE = {}


def _get_operator(chart, grid, n=2):
    key = (id(chart), id(grid), n)
    op = _OP_CACHE.get(key)
    if op is None or op.chart is not chart or op.grid is not grid:
        if len(_OP_CACHE) > 32:
            _OP_CACHE.clear()
        op = GraphOperator(chart, grid, n=n)
        _OP_CACHE[key] = op
    return op


# ---------------------------------------------------------------------------
# spec-level convenience functions

def u_hat(chart, grid, u, node, boundary_values=None):
    """Contravariant tilted gradient hat_u^j at one node."""
    g = gradient_at(grid, u, node, boundary_values)
    x = grid.points[node]
    tilt = np.sqrt(chart.f_at(x)) * chart.delta_at(x)
    siginv = inverse_metric_at(chart, x)
    return siginv @ (g + tilt)


def w_of(chart, uhat_up, x):
    """Graph slope W = sqrt(f + |hat_u|^2) from a contravariant hat_u."""
    sig = chart.metric_at(x)
    uhat_up = np.asarray(uhat_up, dtype=float)
    quad = np.einsum("...i,...ij,...j->...", uhat_up, sig, uhat_up)
    return np.sqrt(chart.f_at(x) + quad)


def residual(spec, grid, u, H=None, phi=None):
    """Q[u] - n H over inside nodes for a problem spec."""
    op = _get_operator(spec.chart, grid, spec.n)
    H_vals = spec.H_nodes(grid) if H is None else _eval_data(H, grid.points)
    phi_vals = spec.phi_links(grid) if phi is None else _eval_data(phi, grid.link_points)
    return op.residual(np.asarray(u, dtype=float), phi_vals, H_vals)


def jacobian(spec, grid, u, phi=None):
    """Analytic sparse Jacobian of the residual at u."""
    op = _get_operator(spec.chart, grid, spec.n)
    phi_vals = spec.phi_links(grid) if phi is None else _eval_data(phi, grid.link_points)
    return op.jacobian(np.asarray(u, dtype=float), phi_vals)


def quasilinear_coeffs(spec, grid, u, node, boundary_values=None):
    """(A^{ij}, lower-order scalar) at one interior node."""
    chart = spec.chart
    up = u_hat(chart, grid, u, node, boundary_values)
    x = grid.points[node]
    W = w_of(chart, up, x)
    siginv = inverse_metric_at(chart, x)
    A = W * W * siginv - np.outer(up, up)
    kap = kappa_vector_at(chart, x, grid.h)
    f = chart.f_at(x)
    lower = -(f + W * W) * float(kap @ up)
    return A, lower


def operator_state(spec, grid, u):
    op = _get_operator(spec.chart, grid, spec.n)
    return op.state(np.asarray(u, dtype=float), spec.phi_links(grid), spec.H_nodes(grid))


def area_functional(spec, grid, u):
    """The graph functional integral of W against the sigma area element."""
    op = _get_operator(spec.chart, grid, spec.n)
    return op.functional(np.asarray(u, dtype=float), spec.phi_links(grid))
