"""Unsteady Stokes Dirichlet solver on a smooth closed curve.

The interior velocity is sought as u = U[phi] + grad V[psi]: a space-time
boundary convolution with the unsteady response tensor (tangential vector
density phi) plus the gradient of a steady harmonic single layer (scalar
density psi).  Matching the boundary trace couples two second-kind
equations: a causal Volterra identity for the tangential part, and for the
normal part a steady Fredholm equation whose operator annihilates the
equilibrium density and is therefore factorized in deflated form.  On a
short time slab the alternating substitution between the two equations is
a contraction with a measurable ratio; longer horizons are covered by
restarting slab after slab with the datum shifted by the history of the
densities already found.

Nonzero initial velocity, body force, and divergence-form forcing are
absorbed into a background flow built from whole-space heat potentials of
projected extensions (see the projection module); the boundary solver then
handles the remaining trace mismatch.

A scalar heat-equation variant of the same march (double layer in space,
product integration in time) provides a standalone Dirichlet/Neumann
initial-boundary solver assembled from the same potential pieces.
"""

import warnings
from dataclasses import dataclass, field as dataclass_field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import lu_factor, lu_solve
from scipy.special import erf

from .curves import BoundaryCurve
from .errors import (
    CompatibilityError,
    ContinuationError,
    GeometryError,
    InvalidInputError,
    InvalidTestFieldError,
    NearSingularWarning,
    SlabContractionError,
)
from .fields import SampledField
from .heatkernel import (
    QuadratureConfig,
    divergence_form_potential,
    grid_points,
    heat_kernel,
    initial_potential,
    initial_potential_grad,
    volume_heat_potential,
    volume_heat_potential_grad,
)
from .layerpot import (
    HydroConvolution,
    SpaceTimeDensity,
    green_tensor_row,
    interior_normal_derivative_matrix,
    tangential_gradient_single_layer,
)
from .norms import parabolic_norm

__all__ = [
    "StokesProblem",
    "CompatibilityReport",
    "SlabSolution",
    "SolveReport",
    "HeatProblem",
    "check_compatibility",
    "solve_boundary_system",
    "continue_in_time",
    "assemble_interior",
    "solve_stokes_ibvp",
    "weak_residual",
    "stream_test_field",
    "heat_ibvp_solve",
]

_GL6 = leggauss(6)


# ---------------------------------------------------------------------------
# problem data

@dataclass
class StokesProblem:
    """Data for the Dirichlet problem on the region bounded by `curve`.

    boundary_velocity : SampledField of the velocity trace at the curve
        nodes on a uniform time grid starting at 0, or a callable
        g(P, t) -> (M, 2).
    initial_velocity  : callable u0(P) -> (N, 2) defined on the closed
        region (divergence-free), or None for rest.
    body_force        : callable f(P, t) -> (N, 2), SampledField, or None.
    stress_forcing    : divergence-form forcing, callable/SampledField with
        components (F11, F12, F21, F22), or None.
    alpha             : Hoelder exponent used by the norm diagnostics.
    modulus           : optional DiniModulus for the normal-trace seminorm.
    """

    curve: BoundaryCurve
    boundary_velocity: object
    t_final: float
    alpha: float = 0.5
    initial_velocity: object = None
    body_force: object = None
    stress_forcing: object = None
    modulus: object = None

    def __post_init__(self):
        if self.t_final <= 0:
            raise InvalidInputError("t_final must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise InvalidInputError("alpha must lie in (0, 1)")


@dataclass
class CompatibilityReport:
    """Residuals of the three data compatibility conditions."""

    max_flux: float
    trace_mismatch: float
    max_divergence: float
    flux_ok: bool
    trace_ok: bool
    divergence_ok: bool

    @property
    def passed(self):
        return self.flux_ok and self.trace_ok and self.divergence_ok


@dataclass
class SlabSolution:
    """Converged densities on one time slab with iteration diagnostics."""

    density: SpaceTimeDensity
    contraction_ratios: list
    residual: float
    iterations: int = 0


@dataclass
class SolveReport:
    """Diagnostics of a full initial-boundary solve."""

    compatibility: CompatibilityReport
    slab_edges: np.ndarray = None
    contraction_ratios: list = dataclass_field(default_factory=list)
    residuals: list = dataclass_field(default_factory=list)
    joint_jumps: list = dataclass_field(default_factory=list)
    norms: dict = dataclass_field(default_factory=dict)


def _boundary_values(g, curve, times):
    """Boundary data as a (n_times, M, 2) array on the given grid."""
    m = curve.n_nodes
    if callable(g):
        return np.array([np.asarray(g(curve.positions, float(t)), dtype=float)
                         for t in times])
    if not isinstance(g, SampledField):
        raise InvalidInputError("boundary data must be callable or SampledField")
    if g.n_points != m or np.abs(g.points - curve.positions).max() > 1e-9:
        raise InvalidInputError("boundary data must live on the curve nodes")
    if g.n_times != times.size or np.abs(g.times - times).max() > 1e-9 * max(
            times[-1], 1.0):
        raise InvalidInputError("boundary data grid does not match the solver "
                                "time grid")
    if g.n_components != 2:
        raise InvalidInputError("boundary velocity needs 2 components")
    return np.transpose(g.values, (1, 0, 2))


def check_compatibility(problem, flux_tol=1e-8, trace_tol=1e-6, div_tol=1e-6):
    """Report the residuals of the compatibility conditions of the data:
    zero net boundary flux at every time, initial/boundary trace match, and
    discrete divergence-freeness of the initial velocity."""
    curve = problem.curve
    if isinstance(problem.boundary_velocity, SampledField):
        times = problem.boundary_velocity.times
    else:
        times = np.linspace(0.0, problem.t_final, 9)
    gv = _boundary_values(problem.boundary_velocity, curve, times)
    scale = max(np.abs(gv).max(), 1.0)
    flux = np.abs(np.einsum("kmd,md,m->k", gv, curve.normal, curve.weights))
    max_flux = float(flux.max())

    if problem.initial_velocity is None:
        u0b = np.zeros((curve.n_nodes, 2))
        max_div = 0.0
    else:
        u0b = np.asarray(problem.initial_velocity(curve.positions), dtype=float)
        h = 0.01 * np.sqrt(curve.area)
        pts = _interior_probes(curve, margin=3 * h)
        e1 = np.array([h, 0.0])
        e2 = np.array([0.0, h])
        div = ((problem.initial_velocity(pts + e1)[:, 0]
                - problem.initial_velocity(pts - e1)[:, 0]) / (2 * h)
               + (problem.initial_velocity(pts + e2)[:, 1]
                  - problem.initial_velocity(pts - e2)[:, 1]) / (2 * h))
        max_div = float(np.abs(div).max())
    mismatch = float(np.abs(u0b - gv[0]).max())

    return CompatibilityReport(
        max_flux=max_flux,
        trace_mismatch=mismatch,
        max_divergence=max_div,
        flux_ok=max_flux <= flux_tol * scale,
        trace_ok=mismatch <= trace_tol * scale,
        divergence_ok=max_div <= div_tol * max(np.abs(u0b).max(), 1.0),
    )


def _interior_probes(curve, margin, n_per_axis=12):
    """Grid points well inside the region (distance > margin from the curve)."""
    lo = curve.positions.min(axis=0)
    hi = curve.positions.max(axis=0)
    xs = np.linspace(lo[0], hi[0], n_per_axis)
    ys = np.linspace(lo[1], hi[1], n_per_axis)
    pts = grid_points(xs, ys)
    inside = curve.contains(pts)
    d = np.min(np.linalg.norm(pts[:, None, :] - curve.positions[None, :, :],
                              axis=2), axis=1)
    pts = pts[inside & (d > margin)]
    if pts.shape[0] == 0:
        raise GeometryError("no interior probe points; margin too large")
    return pts


# ---------------------------------------------------------------------------
# boundary system operators

class BoundarySystemOperators:
    """Dense blocks of the boundary system on a fixed geometry and uniform
    time grid.

    Per lag cell: tangential-tangential and normal-tangential reductions of
    the space-time convolution moments (split into the weights multiplying
    the newer and older density samples of piecewise-linear product
    integration).  Time-independent: the arclength-derivative matrix of the
    single-layer trace and a deflated LU factorization of the interior
    normal-trace operator (deflation shifts its equilibrium-density
    nullspace, and right-hand sides are projected onto the complement of
    the weight vector, which spans the transpose nullspace).
    """

    def __init__(self, curve, dt, n_steps):
        self.curve = curve
        self.dt = float(dt)
        self.n_steps = int(n_steps)
        self.conv = HydroConvolution(curve, dt, n_steps)
        tang, nrm = curve.tangent, curve.normal
        self.tan_new, self.tan_old = [], []
        self.nrm_new, self.nrm_old = [], []
        for cell in range(self.n_steps):
            m0, m1 = self.conv.moment_matrices(cell)
            t0 = np.einsum("ia,ijab,jb->ij", tang, m0, tang)
            t1 = np.einsum("ia,ijab,jb->ij", tang, m1, tang)
            n0 = np.einsum("ia,ijab,jb->ij", nrm, m0, tang)
            n1 = np.einsum("ia,ijab,jb->ij", nrm, m1, tang)
            self.tan_new.append(t0 - t1)
            self.tan_old.append(t1)
            self.nrm_new.append(n0 - n1)
            self.nrm_old.append(n1)
        m = curve.n_nodes
        self.grad_trace = tangential_gradient_single_layer(curve, np.eye(m))
        self.trace_mat = interior_normal_derivative_matrix(curve)
        w = curve.weights
        deflated = self.trace_mat + np.outer(w, w) / curve.length
        if np.linalg.cond(deflated) > 1e12:
            raise GeometryError("normal-trace operator is numerically "
                                "singular on this curve")
        self.normal_lu = lu_factor(deflated)
        self.weights = w
        self._wnorm2 = float(w @ w)

    def convolve_all(self, new_blocks, old_blocks, hist):
        """Causal product-integration sweep: out[k] = sum over lag cells of
        new[cell] hist[k-cell] + old[cell] hist[k-cell-1], for every k."""
        out = np.zeros_like(hist)
        for step in range(1, hist.shape[0]):
            acc = np.zeros(hist.shape[1])
            for cell in range(min(step, self.n_steps)):
                acc += new_blocks[cell] @ hist[step - cell]
                acc += old_blocks[cell] @ hist[step - cell - 1]
            out[step] = acc
        return out

    def solve_tangential(self, rhs, start, tol, max_sweeps=None):
        """Solve (I + U_tan) phi = rhs over the slab by successive
        substitution (the operator's measured norm on a short slab is well
        below one, so the geometric series converges)."""
        if max_sweeps is None:
            max_sweeps = max(80, 2 * rhs.shape[0])
        phi = start.copy()
        prev = None
        grow = 0
        for _ in range(max_sweeps):
            new = rhs - self.convolve_all(self.tan_new, self.tan_old, phi)
            diff = float(np.abs(new - phi).max())
            phi = new
            if diff <= tol:
                return phi
            if prev is not None and diff > prev:
                grow += 1
                if grow >= 3:
                    raise SlabContractionError(
                        "tangential Volterra substitution diverges "
                        "(sweep change %.3e after %.3e); halve the slab"
                        % (diff, prev))
            else:
                grow = 0
            prev = diff
        raise SlabContractionError(
            "tangential substitution missed tolerance %.1e (last change "
            "%.3e); halve the slab" % (tol, prev))

    def solve_normal(self, rhs):
        """Deflated solve of the normal-trace equation; the right-hand side
        is first projected onto the solvable (flux-free) complement, and
        the returned density has exactly zero weighted mean."""
        w = self.weights
        r = rhs - w * ((w @ rhs) / self._wnorm2)
        return lu_solve(self.normal_lu, r)


def _density_change_norm(curve, times, dphi, dpsi, alpha):
    """Parabolic Hoelder norm of a density increment (phi as a tangential
    vector plus psi as a third component), screened pair mode."""
    m, nt = curve.n_nodes, times.size
    vals = np.zeros((m, nt, 3))
    vals[:, :, :2] = dphi.T[:, :, None] * curve.tangent[:, None, :]
    vals[:, :, 2] = dpsi.T
    f = SampledField(curve.positions, times, vals)
    return parabolic_norm(f, alpha, mode="screened").parabolic_norm


def solve_boundary_system(g, curve, slab_t, tol=1e-9, max_iter=40,
                          alpha=0.5, ops=None):
    """Solve the coupled boundary equations on one time slab.

    g : SampledField of the boundary velocity on the curve nodes over a
        uniform grid covering [0, slab_t], vanishing at time 0 and with
        zero net flux at every time (both validated).
    Returns a SlabSolution whose density reproduces the trace g; the
    alternating-iteration contraction ratios are recorded, and a ratio at
    or above one raises SlabContractionError (halve the slab and retry).
    """
    if slab_t <= 0:
        raise InvalidInputError("slab length must be positive")
    if not isinstance(g, SampledField):
        raise InvalidInputError("g must be a SampledField on the curve nodes")
    nt = g.n_times
    if nt < 2:
        raise InvalidInputError("need at least two time levels on the slab")
    n_steps = nt - 1
    dt = slab_t / n_steps
    times = np.linspace(0.0, slab_t, nt)
    gv = _boundary_values(g, curve, times)          # (nt, M, 2)
    scale = max(np.abs(gv).max(), 1e-300)
    if np.abs(gv[0]).max() > 1e-8 * max(scale, 1.0):
        raise CompatibilityError("boundary datum must vanish at slab start")
    flux = np.abs(np.einsum("kmd,md,m->k", gv, curve.normal, curve.weights))
    if flux.max() > 1e-6 * max(scale, 1.0):
        raise CompatibilityError(
            "boundary datum has net flux %.3e; the layer ansatz requires "
            "flux-free data" % flux.max())

    if ops is None:
        ops = BoundarySystemOperators(curve, dt, n_steps)
    elif abs(ops.dt - dt) > 1e-12 * dt:
        raise InvalidInputError("operator cache was built for a different "
                                "time step")

    g_tan = np.einsum("kmd,md->km", gv, curve.tangent)
    g_nrm = np.einsum("kmd,md->km", gv, curve.normal)

    m = curve.n_nodes
    phi = np.zeros((nt, m))
    psi = np.zeros((nt, m))
    ratios = []
    diffs = []
    converged = False
    iterations = 0
    inner_tol = 0.1 * tol * max(scale, 1.0)
    for iterations in range(1, max_iter + 1):
        rhs_tan = g_tan - psi @ ops.grad_trace.T
        phi_new = ops.solve_tangential(rhs_tan, phi, inner_tol)
        conv_nrm = ops.convolve_all(ops.nrm_new, ops.nrm_old, phi_new)
        psi_new = np.zeros_like(psi)
        for k in range(1, nt):
            psi_new[k] = ops.solve_normal(g_nrm[k] - conv_nrm[k])
        diff = _density_change_norm(curve, times, phi_new - phi,
                                    psi_new - psi, alpha)
        diffs.append(diff)
        if len(diffs) >= 2 and diffs[-2] > 0:
            ratios.append(diffs[-1] / diffs[-2])
        phi, psi = phi_new, psi_new
        if diff <= tol * max(scale, 1.0):
            converged = True
            break
        if ratios and ratios[-1] >= 1.0:
            raise SlabContractionError(
                "alternating iteration is not contracting (ratio %.3f) on "
                "slab length %.4g; halve the slab" % (ratios[-1], slab_t))
    if not converged:
        raise SlabContractionError(
            "alternating iteration missed tolerance after %d sweeps (last "
            "change %.3e); halve the slab" % (max_iter, diffs[-1]))

    tan_trace = phi + ops.convolve_all(ops.tan_new, ops.tan_old, phi) \
        + psi @ ops.grad_trace.T
    nrm_trace = ops.convolve_all(ops.nrm_new, ops.nrm_old, phi) \
        + psi @ ops.trace_mat.T
    residual = max(np.abs(tan_trace - g_tan).max(),
                   np.abs(nrm_trace - g_nrm).max()) / max(scale, 1.0)

    phi_pack = phi.T[:, :, None] * curve.tangent[:, None, :]
    density = SpaceTimeDensity(curve, times, phi_pack, psi.T)
    return SlabSolution(density=density, contraction_ratios=ratios,
                        residual=float(residual), iterations=iterations)


def continue_in_time(slabs, g, curve, t_final=None, tol=1e-9, max_iter=40,
                     alpha=0.5, joint_tol=1e-5, ops=None,
                     return_details=False):
    """Chain slab solves to cover the full time grid of g.

    slabs : number of equal slabs, or an increasing array of joint times
        (each must lie on the grid of g).  On every slab after the first
        the datum is shifted by the trace history of the accumulated
        densities, so the concatenated density (slab increments on top of
        the previous end values) satisfies the original boundary system on
        the whole interval.  The shifted datum's value at each joint is the
        previous slab's residual; above joint_tol (relative) this raises
        ContinuationError, otherwise it is subtracted before the sub-solve.
    """
    if not isinstance(g, SampledField):
        raise InvalidInputError("g must be a SampledField on the curve nodes")
    times = g.times
    if abs(times[0]) > 1e-14:
        raise InvalidInputError("boundary data must start at time 0")
    n_total = g.n_times - 1
    if t_final is None:
        t_final = float(times[-1])
    elif abs(t_final - times[-1]) > 1e-9 * max(t_final, 1.0):
        raise InvalidInputError("t_final does not match the data grid")
    dt = t_final / n_total
    if np.abs(np.diff(times) - dt).max() > 1e-9 * dt:
        raise InvalidInputError("boundary data must use a uniform time grid")

    if np.isscalar(slabs):
        n_slabs = int(slabs)
        if n_slabs < 1 or n_slabs > n_total:
            raise InvalidInputError("slab count must be in [1, n_steps]")
        cuts = [round(s * n_total / n_slabs) for s in range(n_slabs + 1)]
    else:
        joints = np.asarray(slabs, dtype=float)
        cuts = [int(round(tj / dt)) for tj in joints]
        if cuts[0] != 0 or cuts[-1] != n_total or np.any(np.diff(cuts) < 1):
            raise InvalidInputError("slab joints must partition [0, T]")
        if np.abs(np.array(cuts) * dt - joints).max() > 1e-9 * max(t_final, 1.0):
            raise InvalidInputError("slab joints must lie on the time grid")

    gv = _boundary_values(g, curve, times)
    scale = max(np.abs(gv).max(), 1e-300)
    g_tan = np.einsum("kmd,md->km", gv, curve.tangent)
    g_nrm = np.einsum("kmd,md->km", gv, curve.normal)

    if ops is None:
        ops = BoundarySystemOperators(curve, dt, n_total)
    m = curve.n_nodes
    phi_acc = np.zeros((n_total + 1, m))
    psi_acc = np.zeros((n_total + 1, m))
    slab_solutions = []
    jumps = []
    for n0, n1 in zip(cuts[:-1], cuts[1:]):
        ns = n1 - n0
        if n0 == 0:
            h_tan = g_tan[:ns + 1].copy()
            h_nrm = g_nrm[:ns + 1].copy()
            jumps.append(0.0)
        else:
            ext_phi = np.vstack([phi_acc[:n0 + 1],
                                 np.repeat(phi_acc[n0:n0 + 1], n_total - n0,
                                           axis=0)])
            hist_tan = ops.convolve_all(ops.tan_new, ops.tan_old, ext_phi)
            hist_nrm = ops.convolve_all(ops.nrm_new, ops.nrm_old, ext_phi)
            base_tan = phi_acc[n0] + ops.grad_trace @ psi_acc[n0]
            base_nrm = ops.trace_mat @ psi_acc[n0]
            h_tan = g_tan[n0:n1 + 1] - hist_tan[n0:n1 + 1] - base_tan
            h_nrm = g_nrm[n0:n1 + 1] - hist_nrm[n0:n1 + 1] - base_nrm
            jump = max(np.abs(h_tan[0]).max(), np.abs(h_nrm[0]).max()) / scale
            jumps.append(float(jump))
            if jump > joint_tol:
                raise ContinuationError(
                    "slab joint at t=%.6g mismatches by %.3e (relative); "
                    "previous slab under-resolved" % (n0 * dt, jump))
            h_tan = h_tan - h_tan[0]
            h_nrm = h_nrm - h_nrm[0]
        h_vals = (h_tan.T[:, :, None] * curve.tangent[:, None, :]
                  + h_nrm.T[:, :, None] * curve.normal[:, None, :])
        g_loc = SampledField(curve.positions, dt * np.arange(ns + 1), h_vals)
        sol = solve_boundary_system(g_loc, curve, ns * dt, tol=tol,
                                    max_iter=max_iter, alpha=alpha, ops=ops)
        slab_solutions.append(sol)
        phi_loc = np.einsum("mkd,md->km", sol.density.phi, curve.tangent)
        psi_loc = sol.density.psi.T
        phi_acc[n0:n1 + 1] = phi_acc[n0] + phi_loc
        psi_acc[n0:n1 + 1] = psi_acc[n0] + psi_loc

    phi_pack = phi_acc.T[:, :, None] * curve.tangent[:, None, :]
    density = SpaceTimeDensity(curve, times, phi_pack, psi_acc.T)
    if return_details:
        details = {"solutions": slab_solutions, "jumps": jumps,
                   "edges": dt * np.asarray(cuts, dtype=float)}
        return density, details
    return density


# ---------------------------------------------------------------------------
# interior evaluation

def assemble_interior(density, targets, times=None, warn_near=True,
                      curve=None):
    """Velocity field of a space-time density at interior/exterior points.

    Sum of the unsteady convolution (product integration on the density's
    own grid, cell moments evaluated per target) and the instantaneous
    single-layer gradient.  Returns a SampledField on (targets, grid times);
    pass `times` (a subset of grid times) to restrict the output.
    """
    curve = curve if curve is not None else density.curve
    X = np.atleast_2d(np.asarray(targets, dtype=float))
    grid = density.times
    nt = grid.size
    if nt < 2:
        raise InvalidInputError("density must carry at least two time levels")
    dt = grid[1] - grid[0]
    if np.abs(np.diff(grid) - dt).max() > 1e-9 * dt:
        raise InvalidInputError("density must use a uniform time grid")

    d = np.min(np.linalg.norm(X[:, None, :] - curve.positions[None, :, :],
                              axis=2), axis=1)
    if warn_near and np.any(d < curve.weights.max()):
        warnings.warn("evaluation point within one node spacing of the "
                      "boundary; smooth quadrature degrades there",
                      NearSingularWarning, stacklevel=2)

    phi_w = density.phi * curve.weights[:, None, None]   # (M, nt, 2)
    psi_w = density.psi * curve.weights[:, None]         # (M, nt)
    nodes, wts = _GL6
    out = np.zeros((X.shape[0], nt, 2))
    for i, x in enumerate(X):
        mom_new, mom_old = [], []
        for cell in range(nt - 1):
            lo, hi = np.sqrt(cell * dt), np.sqrt((cell + 1) * dt)
            sig = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
            sw = 0.5 * (hi - lo) * wts * 2.0 * sig
            m0 = np.zeros((curve.n_nodes, 2, 2))
            m1 = np.zeros((curve.n_nodes, 2, 2))
            for s, w in zip(sig, sw):
                tau = s * s
                theta = (tau - cell * dt) / dt
                row = green_tensor_row(curve, x, tau)
                m0 += w * row
                m1 += (w * theta) * row
            mom_new.append(m0 - m1)
            mom_old.append(m1)
        for k in range(1, nt):
            acc = np.zeros(2)
            for cell in range(k):
                acc += np.einsum("mad,md->a", mom_new[cell], phi_w[:, k - cell])
                acc += np.einsum("mad,md->a", mom_old[cell],
                                 phi_w[:, k - cell - 1])
            out[i, k] = acc

    # instantaneous single-layer gradient of psi, all times at once
    diff = X[:, None, :] - curve.positions[None, :, :]
    r2 = np.sum(diff * diff, axis=2)
    kern = diff / (2.0 * np.pi * r2[:, :, None])
    out += np.einsum("nmd,mk->nkd", kern, psi_w)

    fld = SampledField(X, grid, out)
    if times is None:
        return fld
    times = np.asarray(times, dtype=float)
    idx = np.searchsorted(grid, times)
    idx = np.clip(idx, 0, nt - 1)
    if np.abs(grid[idx] - times).max() > 1e-9 * max(grid[-1], 1.0):
        raise InvalidInputError("requested times must lie on the density grid")
    return SampledField(X, grid[idx], out[:, idx])


# ---------------------------------------------------------------------------
# background flow from whole-space potentials

class _BackgroundFlow:
    """Sum of whole-space heat potentials absorbing initial velocity, body
    force, and divergence-form forcing; evaluable at points and times."""

    def __init__(self, problem, cfg):
        self.cfg = cfg or QuadratureConfig()
        self.pieces = []
        curve = problem.curve
        if (problem.initial_velocity is not None
                or problem.body_force is not None
                or problem.stress_forcing is not None):
            from . import projection
        if problem.initial_velocity is not None:
            ext = projection.divergence_free_extension(
                curve, problem.initial_velocity)
            self.pieces.append(ext.heat_evolution)
        if problem.body_force is not None:
            self.pieces.append(projection.forcing_background(
                curve, problem.body_force, problem.t_final))
        if problem.stress_forcing is not None:
            self.pieces.append(projection.stress_background(
                curve, problem.stress_forcing, problem.t_final))

    def __bool__(self):
        return bool(self.pieces)

    def at(self, X, t):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros((X.shape[0], 2))
        for piece in self.pieces:
            out += np.atleast_2d(piece(X, float(t)))
        return out


def solve_stokes_ibvp(problem, targets, n_steps, n_slabs=1, tol=1e-9,
                      max_iter=40, quad_cfg=None):
    """Full Dirichlet solve: subtract the background flow of the volumetric
    data, solve the boundary system for the remainder, and assemble the
    velocity at the target points over the uniform time grid.

    Returns (velocity SampledField, SolveReport)."""
    comp = check_compatibility(problem)
    if not comp.passed:
        raise CompatibilityError(
            "incompatible data: flux %.2e, trace mismatch %.2e, "
            "divergence %.2e" % (comp.max_flux, comp.trace_mismatch,
                                 comp.max_divergence))
    curve = problem.curve
    times = np.linspace(0.0, problem.t_final, n_steps + 1)
    gv = _boundary_values(problem.boundary_velocity, curve, times)

    background = _BackgroundFlow(problem, quad_cfg)
    if background:
        bg_bnd = np.array([background.at(curve.positions, t) for t in times])
        # the exact background flow is divergence-free, so any net flux in
        # its trace is quadrature noise on the node set; strip it so the
        # remainder datum stays flux-free for the layer ansatz
        length = curve.weights.sum()
        bflux = np.einsum("kmd,md,m->k", bg_bnd, curve.normal, curve.weights)
        bg_bnd -= (bflux[:, None, None] / length) * curve.normal[None, :, :]
        gv = gv - bg_bnd
        gv[0] = 0.0   # compatibility residual only; checked above

    g_field = SampledField(curve.positions, times,
                           np.transpose(gv, (1, 0, 2)))
    density, details = continue_in_time(
        n_slabs, g_field, curve, tol=tol, max_iter=max_iter,
        alpha=problem.alpha, return_details=True)

    u = assemble_interior(density, targets)
    if background:
        bg_t = np.array([background.at(u.points, t) for t in times])
        u = SampledField(u.points, times,
                         u.values + np.transpose(bg_t, (1, 0, 2)))

    report = SolveReport(
        compatibility=comp,
        slab_edges=details["edges"],
        contraction_ratios=[s.contraction_ratios
                            for s in details["solutions"]],
        residuals=[s.residual for s in details["solutions"]],
        joint_jumps=details["jumps"],
    )
    report.norms["velocity_parabolic"] = parabolic_norm(
        u, problem.alpha, mode="screened").parabolic_norm
    report.norms["boundary_parabolic"] = parabolic_norm(
        SampledField(curve.positions, times, np.transpose(gv, (1, 0, 2))),
        problem.alpha, mode="screened").parabolic_norm
    bundle = report.norms["boundary_parabolic"]
    if problem.modulus is not None:
        from .norms import mixed_boundary_seminorm
        g_n = np.einsum("kmd,md->mk", gv, curve.normal)
        report.norms["normal_mixed_dini"] = mixed_boundary_seminorm(
            SampledField(curve.positions, times, g_n),
            problem.alpha, problem.modulus, mode="screened")
        bundle += report.norms["normal_mixed_dini"]
    report.norms["data_bundle"] = bundle
    report.norms["stability_ratio"] = (
        report.norms["velocity_parabolic"] / bundle if bundle > 0 else 0.0)
    return u, report


# ---------------------------------------------------------------------------
# weak-form residual

def _as_raster(field):
    """Interpret a SampledField's points as a tensor grid; returns
    (xs, ys, values[nx, ny, nt, C])."""
    xs = np.unique(field.points[:, 0])
    ys = np.unique(field.points[:, 1])
    if xs.size * ys.size != field.n_points:
        raise InvalidInputError("field points must form a tensor grid")
    ix = np.searchsorted(xs, field.points[:, 0])
    iy = np.searchsorted(ys, field.points[:, 1])
    vals = np.full((xs.size, ys.size, field.n_times, field.n_components),
                   np.nan)
    vals[ix, iy] = field.values
    if np.any(np.isnan(vals)):
        raise InvalidInputError("field points must form a tensor grid")
    return xs, ys, vals


def _grad_raster(vals, hx, hy):
    """Centered-interior / one-sided-edge gradient: (nx, ny, nt, C, 2)."""
    gx = np.gradient(vals, hx, axis=0)
    gy = np.gradient(vals, hy, axis=1)
    return np.stack([gx, gy], axis=-1)


def stream_test_field(xs, ys, times, stream, envelope):
    """Admissible weak-form test field from a stream function.

    The velocity components are centered/one-sided differences of
    stream(x, y) * envelope(t) on the raster, so the raster's own
    divergence stencil vanishes identically.  envelope must vanish at
    times[0] and times[-1]; stream should vanish near the raster edge."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    times = np.asarray(times, dtype=float)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    s = np.asarray(stream(X, Y), dtype=float)
    env = np.asarray([envelope(t) for t in times], dtype=float)
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    u1 = np.gradient(s, hy, axis=1)
    u2 = -np.gradient(s, hx, axis=0)
    vals = np.stack([u1, u2], axis=-1)[:, :, None, :] * env[None, None, :,
                                                            None]
    pts = grid_points(xs, ys)
    return SampledField(pts, times, vals.reshape(-1, times.size, 2))


def weak_residual(u, f, F, test_field):
    """Residual of the weak form of the forced Stokes/heat momentum balance
    against one divergence-free, compactly supported test field:
    | int int grad u : grad W  -  int int (u . W_t + f . W - F : grad W) |.

    u and test_field must live on the same raster and times; f (vector) and
    F (2x2, components ordered row-major) are optional."""
    xs, ys, uv = _as_raster(u)
    xs2, ys2, wv = _as_raster(test_field)
    if xs.size != xs2.size or ys.size != ys2.size \
            or np.abs(xs - xs2).max() > 1e-12 or np.abs(ys - ys2).max() > 1e-12:
        raise InvalidInputError("u and test field must share the raster")
    if u.n_times != test_field.n_times \
            or np.abs(u.times - test_field.times).max() > 1e-12:
        raise InvalidInputError("u and test field must share the time grid")
    if uv.shape[3] != 2 or wv.shape[3] != 2:
        raise InvalidInputError("weak form needs 2-component vector fields")
    hx, hy = xs[1] - xs[0], ys[1] - ys[0]
    times = u.times

    wscale = max(np.abs(wv).max(), 1e-300)
    edge = max(np.abs(wv[0]).max(), np.abs(wv[-1]).max(),
               np.abs(wv[:, 0]).max(), np.abs(wv[:, -1]).max())
    ends = max(np.abs(wv[:, :, 0]).max(), np.abs(wv[:, :, -1]).max())
    if edge > 1e-12 * wscale or ends > 1e-12 * wscale:
        raise InvalidTestFieldError(
            "test field must vanish on the raster edge and at both time "
            "endpoints (edge %.2e, ends %.2e)" % (edge, ends))
    div = (np.gradient(wv[:, :, :, 0], hx, axis=0)
           + np.gradient(wv[:, :, :, 1], hy, axis=1))
    if np.abs(div[1:-1, 1:-1]).max() > 1e-10 * wscale:
        raise InvalidTestFieldError(
            "test field is not discretely divergence-free (max %.2e)"
            % np.abs(div[1:-1, 1:-1]).max())

    gu = _grad_raster(uv, hx, hy)
    gw = _grad_raster(wv, hx, hy)
    wt = np.gradient(wv, times, axis=2)

    def cellsum(dens):   # (nx, ny, nt) -> space-time trapezoid integral
        wx = np.ones(xs.size); wx[[0, -1]] = 0.5
        wy = np.ones(ys.size); wy[[0, -1]] = 0.5
        wt_ = np.ones(times.size); wt_[[0, -1]] = 0.5
        dsum = np.einsum("i,j,k,ijk->", wx, wy, wt_, dens)
        return dsum * hx * hy * (times[1] - times[0])

    lhs = cellsum(np.einsum("ijkcd,ijkcd->ijk", gu, gw))
    rhs = cellsum(np.einsum("ijkc,ijkc->ijk", uv, wt))
    if f is not None:
        _, _, fv = _as_raster(f)
        rhs += cellsum(np.einsum("ijkc,ijkc->ijk", fv, wv))
    if F is not None:
        _, _, Fv = _as_raster(F)
        if Fv.shape[3] != 4:
            raise InvalidInputError("stress field needs 4 components")
        Ften = Fv.reshape(Fv.shape[:3] + (2, 2))
        rhs -= cellsum(np.einsum("ijkcd,ijkcd->ijk", Ften, gw))
    return float(abs(lhs - rhs))


# ---------------------------------------------------------------------------
# scalar heat initial-boundary solver (same march, double-layer kernel)

def heat_double_layer_row(curve, x, tau, self_index=None, at_target=False):
    """Scalar heat double-layer kernel row at lag tau.

    at_target False: normal derivative at the source, the double-layer
    kernel ((x - Q) . n(Q) / 2 tau) Gamma(x - Q, tau).
    at_target True: normal derivative at the target node (for the Neumann
    march on the single-layer representation), -((x-Q) . n(x) / 2 tau) Gamma.
    """
    rel = x - curve.positions
    gam = heat_kernel(rel, tau)
    if at_target:
        if self_index is None:
            raise InvalidInputError("target-normal kernel needs the node index")
        dot = rel @ curve.normal[self_index]
        row = -dot * gam / (2.0 * tau)
    else:
        dot = np.einsum("md,md->m", rel, curve.normal)
        row = dot * gam / (2.0 * tau)
    if self_index is not None:
        row[self_index] = 0.0
    return row


def _self_panel_value(kappa, width, tau):
    """Near-self value of the heat double-layer kernel averaged over the
    node's own arclength panel.

    Close to the source point the kernel dips like -(kappa u^2 / 4 tau)
    Gamma(u, tau) in the arclength offset u; once sqrt(tau) falls below
    the node spacing the trapezoid rule misses the whole dip, which is
    the leading quadrature error of the time march.  The dip integrated
    exactly over the panel (-width/2, width/2),

        -kappa/(16 pi tau^2) * [sqrt(pi)/2 a^3 erf(b/a) - a^2 b e^{-b^2/a^2}]

    with a = sqrt(4 tau), b = width/2, divided by the panel width so the
    standard weight multiplication reproduces the integral.  The
    target-normal kernel of the Neumann march dips the same way: the
    source-normal projection (x - Q).n(Q) ~ -kappa u^2/2 while the
    target-normal one (x - Q).n(x) ~ +kappa u^2/2, and the kernel's own
    leading minus restores the sign.
    """
    a = np.sqrt(4.0 * tau)
    b = 0.5 * width
    integral = (np.sqrt(np.pi) / 2.0 * a ** 3 * erf(b / a)
                - a * a * b * np.exp(-((b / a) ** 2)))
    return -kappa * integral / (16.0 * np.pi * tau * tau * width)


def _graded_sigma_cell0(dt, scale):
    """Quadrature in sigma = sqrt(lag) for the newest lag cell [0, dt].

    The heat kernels carry exp(-r^2 / 4 sigma^2) factors that spike near
    sigma ~ r for the closest source points; a single Gauss panel misses
    them once r falls below the cell width.  Panels are graded
    geometrically toward sigma = 0 until the nearest spike (r >= scale)
    is fully resolved, and the super-exponentially small stub below the
    last edge is dropped.
    """
    nodes, wts = _GL6
    hi = np.sqrt(dt)
    n_panels = max(1, min(40, int(np.ceil(np.log2(18.0 * hi / scale)))))
    edges = hi * 0.5 ** np.arange(n_panels + 1)
    sig, sw = [], []
    for a, b in zip(edges[1:], edges[:-1]):
        sig.append(0.5 * (b - a) * nodes + 0.5 * (a + b))
        sw.append(0.5 * (b - a) * wts)
    sig = np.concatenate(sig)
    sw = np.concatenate(sw) * 2.0 * sig
    return sig, sw


class HeatLayerConvolution:
    """Product-integration moments of the scalar heat layer kernels on a
    uniform time grid (same sigma = sqrt(tau) Gauss cells as the vector
    convolution); `kind` selects the Dirichlet double-layer kernel or the
    target-normal kernel of the Neumann march."""

    def __init__(self, curve, dt, n_steps, kind="dirichlet"):
        if kind not in ("dirichlet", "neumann"):
            raise InvalidInputError("kind must be dirichlet or neumann")
        self.curve = curve
        self.dt = float(dt)
        self.n_steps = int(n_steps)
        self.kind = kind
        m = curve.n_nodes
        nodes, wts = _GL6
        at_target = (kind == "neumann")
        diffs = curve.positions[:, None, :] - curve.positions[None, :, :]
        dist = np.linalg.norm(diffs, axis=2)
        r_min = dist[dist > 0].min()
        diag = np.arange(m)
        self.new_blocks, self.old_blocks = [], []
        for cell in range(self.n_steps):
            if cell == 0:
                # off-diagonal entries spike in sigma and want the graded
                # panels; the self-panel value tends to a constant sigma
                # integrand, so it keeps the plain full-range Gauss panel
                # (the graded rule drops a stub near sigma = 0 that the
                # diagonal still needs).
                sig, sw = _graded_sigma_cell0(dt, r_min)
                hi = np.sqrt(dt)
                sig_d = 0.5 * hi * nodes + 0.5 * hi
                sw_d = 0.5 * hi * wts * 2.0 * sig_d
                diag_zero = True
            else:
                lo, hi = np.sqrt(cell * dt), np.sqrt((cell + 1) * dt)
                sig = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
                sw = 0.5 * (hi - lo) * wts * 2.0 * sig
                diag_zero = False
            m0 = np.zeros((m, m))
            m1 = np.zeros((m, m))
            for s, w in zip(sig, sw):
                tau = s * s
                theta = (tau - cell * dt) / dt
                mat = np.empty((m, m))
                for i in range(m):
                    mat[i] = heat_double_layer_row(
                        curve, curve.positions[i], tau, self_index=i,
                        at_target=at_target)
                if diag_zero:
                    mat[diag, diag] = 0.0
                else:
                    mat[diag, diag] = _self_panel_value(
                        curve.curvature, curve.weights, tau)
                mat *= curve.weights[None, :]
                m0 += w * mat
                m1 += (w * theta) * mat
            if diag_zero:
                for s, w in zip(sig_d, sw_d):
                    tau = s * s
                    theta = (tau - cell * dt) / dt
                    dvals = _self_panel_value(
                        curve.curvature, curve.weights, tau) * curve.weights
                    m0[diag, diag] += w * dvals
                    m1[diag, diag] += (w * theta) * dvals
            self.new_blocks.append(m0 - m1)
            self.old_blocks.append(m1)

    def convolve_all(self, hist):
        out = np.zeros_like(hist)
        for step in range(1, hist.shape[0]):
            acc = np.zeros(hist.shape[1])
            for cell in range(min(step, self.n_steps)):
                acc += self.new_blocks[cell] @ hist[step - cell]
                acc += self.old_blocks[cell] @ hist[step - cell - 1]
            out[step] = acc
        return out


def _heat_march(conv, h, jump):
    """Causal solve of (jump I + C) mu = h.  The interior trace of the heat
    double layer carries jump -1/2; the interior normal derivative of the
    heat single layer carries +1/2 (the heat kernel is a positive bump, so
    its layer potential decreases away from the boundary, opposite to the
    logarithmic single layer)."""
    nt, m = h.shape
    mu = np.zeros_like(h)
    lhs = jump * np.eye(m) + conv.new_blocks[0]
    lu = lu_factor(lhs)
    for k in range(1, nt):
        acc = conv.old_blocks[0] @ mu[k - 1]
        for cell in range(1, min(k, conv.n_steps)):
            acc += conv.new_blocks[cell] @ mu[k - cell]
            acc += conv.old_blocks[cell] @ mu[k - cell - 1]
        mu[k] = lu_solve(lu, h[k] - acc)
    return mu


@dataclass
class HeatProblem:
    """Scalar heat initial-boundary data: Dirichlet trace by default, or a
    Neumann (outward normal derivative) trace when neumann=True.

    initial doubles as its own whole-plane extension: a callable
    initial(P, t_ignored), or a single-time SampledField on a tensor grid
    (zero outside its box).  boundary is a callable g(P, t) -> (M,) or a
    SampledField on the curve nodes; source and stress feed the volume and
    divergence-form heat potentials."""

    curve: BoundaryCurve
    boundary: object
    t_final: float
    initial: object = None
    source: object = None
    stress: object = None
    neumann: bool = False

    def __post_init__(self):
        if self.t_final <= 0:
            raise InvalidInputError("t_final must be positive")


def _heat_boundary_values(g, curve, times):
    if callable(g):
        return np.array([np.asarray(g(curve.positions, float(t)), dtype=float)
                         for t in times])
    if not isinstance(g, SampledField):
        raise InvalidInputError("boundary data must be callable or SampledField")
    if g.n_points != curve.n_nodes \
            or np.abs(g.points - curve.positions).max() > 1e-9:
        raise InvalidInputError("boundary data must live on the curve nodes")
    if g.n_times != times.size or np.abs(g.times - times).max() > 1e-9:
        raise InvalidInputError("boundary data grid does not match")
    return g.values[:, :, 0].T


def heat_ibvp_solve(problem, targets, n_steps, cfg=None):
    """Scalar heat initial-boundary solve on the region bounded by
    problem.curve: whole-space potentials of the (extended) data plus a
    boundary-layer correction marched causally in time.

    Returns a SampledField of the solution at the targets over the uniform
    grid; boundary data may be Dirichlet or Neumann."""
    cfg = cfg or QuadratureConfig()
    curve = problem.curve
    times = np.linspace(0.0, problem.t_final, n_steps + 1)
    dt = times[1] - times[0]
    X = np.atleast_2d(np.asarray(targets, dtype=float))

    pieces = []
    if problem.initial is not None:
        # the initial datum doubles as its own whole-plane extension:
        # a callable is evaluated wherever the Gaussian window reaches, a
        # gridded field is extended by zero outside its box
        pieces.append(lambda P, t, e=problem.initial:
                      initial_potential(e, P, t, cfg))
    if problem.source is not None:
        pieces.append(lambda P, t, s=problem.source:
                      volume_heat_potential(s, P, t, cfg))
    if problem.stress is not None:
        pieces.append(lambda P, t, s=problem.stress:
                      -divergence_form_potential(s, P, t, cfg))

    def background(P, t):
        out = np.zeros(np.atleast_2d(P).shape[0])
        for piece in pieces:
            out = out + np.asarray(piece(np.atleast_2d(P), float(t)),
                                   dtype=float).reshape(-1)
        return out

    def background_normal(t):
        # the normal derivative falls on the kernels analytically where a
        # gradient routine exists; differencing interpolated backgrounds
        # directly picks up interpolation kinks that never converge
        out = np.zeros(curve.n_nodes)
        if problem.initial is not None:
            g = initial_potential_grad(problem.initial, curve.positions, t,
                                       cfg)
            out += np.einsum("md,md->m", g, curve.normal)
        if problem.source is not None:
            g = volume_heat_potential_grad(problem.source, curve.positions,
                                           t, cfg)
            out += np.einsum("md,md->m", g, curve.normal)
        if problem.stress is not None:
            piece = (lambda P, tt, s=problem.stress: -np.asarray(
                divergence_form_potential(s, P, tt, cfg)).reshape(-1))
            out += _normal_derivative(piece, curve, t)
        return out

    gb = _heat_boundary_values(problem.boundary, curve, times)  # (nt, M)
    h = np.zeros_like(gb)
    kind = "neumann" if problem.neumann else "dirichlet"
    for k in range(1, n_steps + 1):
        if problem.neumann:
            bg = background_normal(times[k])
        else:
            bg = background(curve.positions, times[k])
        h[k] = gb[k] - bg

    conv = HeatLayerConvolution(curve, dt, n_steps, kind=kind)
    mu = _heat_march(conv, h, jump=0.5 if problem.neumann else -0.5)

    # interior evaluation: per-target cell moments of the double-layer
    # kernel for Dirichlet, of the plain heat kernel (single layer) for
    # Neumann, then the same product-integration sum as the march.
    nodes, wts = _GL6
    mu_w = mu * curve.weights[None, :]
    vals = np.zeros((X.shape[0], n_steps + 1))
    for i, x in enumerate(X):
        mom_new, mom_old = [], []
        r_min = np.linalg.norm(x - curve.positions, axis=1).min()
        for cell in range(n_steps):
            if cell == 0:
                sig, sw = _graded_sigma_cell0(dt, r_min)
            else:
                lo, hi = np.sqrt(cell * dt), np.sqrt((cell + 1) * dt)
                sig = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
                sw = 0.5 * (hi - lo) * wts * 2.0 * sig
            m0 = np.zeros(curve.n_nodes)
            m1 = np.zeros(curve.n_nodes)
            for s, w in zip(sig, sw):
                tau = s * s
                theta = (tau - cell * dt) / dt
                if problem.neumann:
                    row = heat_kernel(x - curve.positions, tau)
                else:
                    row = heat_double_layer_row(curve, x, tau)
                m0 += w * row
                m1 += (w * theta) * row
            mom_new.append(m0 - m1)
            mom_old.append(m1)
        for k in range(1, n_steps + 1):
            acc = 0.0
            for cell in range(k):
                acc += mom_new[cell] @ mu_w[k - cell]
                acc += mom_old[cell] @ mu_w[k - cell - 1]
            vals[i, k] = acc
    for k in range(n_steps + 1):
        if k == 0:
            if problem.initial is not None:
                vals[:, 0] += np.asarray(
                    initial_potential(problem.initial, X, 0.0, cfg),
                    dtype=float).reshape(-1)
        else:
            vals[:, k] += background(X, times[k])
    return SampledField(X, times, vals)


def _normal_derivative(background, curve, t, h=1e-4):
    """Outward normal derivative of a background field at the curve nodes."""
    plus = background(curve.positions + h * curve.normal, t)
    minus = background(curve.positions - h * curve.normal, t)
    return (plus - minus) / (2.0 * h)
