"""Small eigenpairs, eigenvalue counting, quasi-stationary and exit densities."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .errors import FactorizationFailure, Inconclusive, NegativeMass, NoConvergence, SignError
from .operator import (DiscreteOperator, Grid, assemble_witten0, assemble_witten1_1d, default_spacing,
                       grid_for)

__all__ = [
    "SpectralResult",
    "BoundaryDensity",
    "smallest_eigenpairs",
    "count_small",
    "count_small_eigenvalues",
    "nu_threshold",
    "qsd_density",
    "exit_density_pde",
    "generator_rate",
    "problem_operator",
    "m_counts",
    "write_eigenvalues_csv",
    "write_eigenvectors_csv",
    "write_density_csv",
]


@dataclass
class SpectralResult:
    """Ascending eigenvalues with eigenvectors normalised in the grid inner product."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual_norms: np.ndarray
    h: float
    bc: str
    form_degree: int
    grid: Grid
    m_small: int | None = None
    nu: float | None = None

    def inner(self, u, v) -> float:
        return float(np.sum(self.grid.weights * u * v))


@dataclass
class BoundaryDensity:
    """Density on a boundary; ``values * weights`` sums to one.

    In 1D ``weights`` are ones and ``values`` are the endpoint masses.
    """

    points: np.ndarray
    param: np.ndarray
    values: np.ndarray
    weights: np.ndarray

    @property
    def masses(self) -> np.ndarray:
        return self.values * self.weights


def nu_threshold(h: float, exponent: float = 1.2, prefactor: float = 1.0) -> float:
    """Counting threshold ``prefactor * h**exponent`` (default ``h^(6/5)``)."""
    return prefactor * h**exponent


def _sign_fix(v):
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def smallest_eigenpairs(op: DiscreteOperator, k: int = 6, tol: float = 1e-12,
                        nu: float | None = None, dense_threshold: int = 1500,
                        maxiter: int | None = None) -> SpectralResult:
    """The ``k`` smallest eigenpairs by shift-invert Lanczos.

    The shift is 0 for Dirichlet problems.  Neumann operators have a kernel,
    so they are shifted by ``-1e-10 h^2/dx^2``, far below any eigenvalue of
    interest and independent of the (possibly huge) diagonal entries.  Small
    problems fall back to a dense symmetric solver.
    """
    A = op.matrix
    n = A.shape[0]
    k = min(k, n)
    if n <= dense_threshold or k >= n - 1:
        w, V = scipy.linalg.eigh(A.toarray(), subset_by_index=[0, k - 1])
    else:
        c = op.h**2 / float(np.min(op.grid.edge_len)) ** 2
        # the 0-form operator actually assembled is Neumann (singular) exactly
        # when bc and degree disagree with (dirichlet, 0) / (neumann, 1)
        singular = (op.bc == "neumann") != (op.form_degree == 1)
        sigma = -1e-10 * c if singular else 0.0
        try:
            w, V = spla.eigsh(A.tocsc(), k=k, sigma=sigma, which="LM", tol=tol, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            raise NoConvergence(f"ARPACK did not converge: {len(exc.eigenvalues)} of {k} pairs") from exc
        except RuntimeError as exc:
            raise FactorizationFailure(str(exc)) from exc
        if not np.all(np.isfinite(w)):
            raise FactorizationFailure("non-finite Ritz values; operator singular beyond its kernel")
    order = np.argsort(w)
    w, V = w[order], V[:, order]
    V = V / np.linalg.norm(V, axis=0)
    res = np.linalg.norm(A @ V - V * w, axis=0)
    wts = op.grid.weights
    V = V / np.sqrt(np.sum(wts[:, None] * V * V, axis=0))
    V = np.stack([_sign_fix(V[:, j]) for j in range(V.shape[1])], axis=1)
    out = SpectralResult(w, V, res, op.h, op.bc, op.form_degree, op.grid)
    if nu is not None:
        out.nu = nu
        out.m_small = count_small(out, nu)
    return out


def count_small(result: SpectralResult, nu: float) -> int:
    """Number of computed eigenvalues at or below ``nu``."""
    w = np.asarray(result.eigenvalues)
    if np.all(w <= nu):
        raise Inconclusive(f"all {len(w)} computed eigenvalues are <= {nu:g}; request more pairs")
    return int(np.sum(w <= nu))


def count_small_eigenvalues(op: DiscreteOperator, nu: float, k0: int = 6,
                            kmax: int = 96) -> tuple[int, SpectralResult]:
    """Count eigenvalues below ``nu``, growing the number of pairs as needed."""
    k = k0
    while True:
        r = smallest_eigenpairs(op, k=k)
        try:
            m = count_small(r, nu)
        except Inconclusive:
            if k >= min(kmax, op.grid.n):
                raise
            k = min(2 * k, kmax, op.grid.n)
            continue
        r.nu, r.m_small = nu, m
        return m, r


def problem_operator(field, domain, bc: str, degree: int, h: float, spacing: float,
                     check_mesh: bool = False) -> DiscreteOperator:
    """Operator for one (domain, boundary condition, form degree) problem.

    The grid is cell-centred exactly when the 0-form operator actually
    assembled is a 1D Neumann one, as for :func:`grid_for`.
    """
    eff = bc if degree == 0 else ("neumann" if bc == "dirichlet" else "dirichlet")
    grid = grid_for(domain, spacing, eff, min_nodes=2)
    if degree == 0:
        return assemble_witten0(field, grid, bc, h, check_mesh=check_mesh)
    return assemble_witten1_1d(field, grid, bc, h, check_mesh=check_mesh)


def m_counts(field, pair, h: float, nu: float, spacing: float | None = None,
             kmax: int = 96) -> tuple[dict, dict]:
    """Small-eigenvalue counts entering the counting assumptions.

    Returns ``(counts, results)``.  ``counts`` holds ``m0N_minus`` and
    ``m0D_plus``; in 1D also ``m1N_minus``, ``m1D_shell`` and ``m1D_plus``;
    in 2D ``boundary_minima``, the number of local minima of f on the outer
    boundary, which takes the place of the 1-form count on the shell.
    """
    from .potential.critical import boundary_critical_points

    dx = spacing or default_spacing(field, pair.plus, h)
    problems = {"m0N_minus": (pair.minus, "neumann", 0), "m0D_plus": (pair.plus, "dirichlet", 0)}
    if pair.dim == 1:
        problems.update({"m1N_minus": (pair.minus, "neumann", 1),
                         "m1D_shell": (pair.shell(), "dirichlet", 1),
                         "m1D_plus": (pair.plus, "dirichlet", 1)})
    counts, results = {}, {}
    for key, (dom, bc, deg) in problems.items():
        op = problem_operator(field, dom, bc, deg, h, dx)
        m, r = count_small_eigenvalues(op, nu, kmax=kmax)
        counts[key], results[key] = m, r
    if pair.dim == 2:
        bps = boundary_critical_points(field, pair.plus)
        counts["boundary_minima"] = sum(1 for b in bps if b.boundary_index == 0)
    return counts, results


def qsd_density(field, grid: Grid, u1: np.ndarray, h: float) -> np.ndarray:
    """Quasi-stationary density ``u1 exp(-f/h)``, normalised on the grid.

    ``u1`` must be the (sign-fixed) ground state of the Dirichlet 0-form
    operator on ``grid``.
    """
    u1 = np.asarray(u1, dtype=float)
    top = np.max(np.abs(u1))
    if np.min(u1) < -1e-8 * top:
        raise SignError(f"ground state changes sign (min {np.min(u1):.3e}, max {top:.3e})")
    fv = field.value_fn(grid.nodes)
    rho = np.clip(u1, 0.0, None) * np.exp(-(fv - fv.min()) / h)
    return rho / np.sum(grid.weights * rho)


def _one_sided(g1, g2, s1, s2):
    """Derivative at 0 of the quadratic through (0, 0), (s1, g1), (s2, g2)."""
    return g1 * s2 / (s1 * (s2 - s1)) - g2 * s1 / (s2 * (s2 - s1))


def _one_sided_exp(g1, g2, s1, s2):
    """Derivative at 0 of ``A s exp(b s)`` through (s1, g1), (s2, g2).

    Log-linear extrapolation of g/s; exact for exponential boundary layers
    and second order otherwise.  Falls back to :func:`_one_sided` where a
    sample is not positive.
    """
    g1, g2 = np.asarray(g1, dtype=float), np.asarray(g2, dtype=float)
    out = _one_sided(g1, g2, s1, s2)
    pos = (g1 > 0) & (g2 > 0)
    a = np.log(np.where(pos, g1 / s1, 1.0))
    b = np.log(np.where(pos, g2 / s2, 1.0))
    out[pos] = np.exp((a[pos] * s2 - b[pos] * s1) / (s2 - s1))
    return out


def _lattice_array(grid: Grid, values):
    G = np.zeros(grid.shape)
    G[grid.lattice[:, 0], grid.lattice[:, 1]] = values
    axes = [grid.origin[k] + grid.spacing * np.arange(grid.shape[k]) for k in range(2)]
    return RegularGridInterpolator(axes, G, method="linear", bounds_error=False, fill_value=0.0)


def exit_density_pde(field, grid: Grid, u1: np.ndarray, h: float,
                     n_boundary: int = 4096, clip_tol: float = 1e-6) -> BoundaryDensity:
    """Exit point density ``-d_n(exp(-f/h) u1)`` on the boundary, L1-normalised.

    The normal derivative uses a second order one-sided difference with the
    boundary value 0.  In 1D the nodes next to each endpoint are used with a
    quadratic fit; in 2D the function is interpolated bilinearly at 2 dx and
    4 dx along the inward normal and fitted by ``A s exp(b s)``.
    """
    fv = field.value_fn(grid.nodes)
    g = np.asarray(u1) * np.exp(-(fv - fv.min()) / h)
    if grid.dim == 1:
        vals, pts, par = [], [], []
        for k, x, th, L, nrm in zip(grid.cut_nodes, grid.cut_points[:, 0], grid.cut_theta,
                                    grid.cut_len, grid.cut_normals[:, 0]):
            k2 = k - 1 if nrm > 0 else k + 1
            s1 = th * L
            s2 = abs(grid.nodes[k2, 0] - x)
            vals.append(_one_sided(g[k], g[k2], s1, s2))
            pts.append([x])
            par.append(nrm)
        vals = np.array(vals)
        pts = np.array(pts)
        par = np.array(par)
        wts = np.ones(len(vals))
    else:
        bs = grid.domain.boundary(n_boundary)
        interp = _lattice_array(grid, g)
        s1, s2 = 2 * grid.spacing, 4 * grid.spacing
        g1 = interp(bs.points - s1 * bs.normals)
        g2 = interp(bs.points - s2 * bs.normals)
        # the boundary layer of width h/|grad f| is often under-resolved on
        # 2D grids, where a quadratic fit overshoots below zero
        vals = _one_sided_exp(g1, g2, s1, s2)
        pts, par, wts = bs.points, bs.param, bs.weights
    total = np.sum(np.abs(vals) * wts)
    neg = np.sum(np.clip(-vals, 0.0, None) * wts)
    if total == 0:
        raise NegativeMass("exit flux vanishes identically")
    if neg / total > clip_tol:
        raise NegativeMass(f"clipped negative mass fraction {neg / total:.2e} exceeds {clip_tol:g}")
    vals = np.clip(vals, 0.0, None)
    vals = vals / np.sum(vals * wts)
    return BoundaryDensity(pts, par, vals, wts)


def generator_rate(lambda1: float, h: float) -> float:
    """Exit rate of the diffusion from the first Dirichlet eigenvalue: lambda1/(2h)."""
    if lambda1 < 0 or h <= 0:
        raise ValueError("need lambda1 >= 0 and h > 0")
    return lambda1 / (2.0 * h)


def _fmt(x) -> str:
    return repr(float(x))


def write_eigenvalues_csv(result: SpectralResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "residual"])
        for i, (lam, r) in enumerate(zip(result.eigenvalues, result.residual_norms), start=1):
            w.writerow([i, _fmt(lam), _fmt(r)])


def write_eigenvectors_csv(result: SpectralResult, path, which=None) -> None:
    which = range(result.eigenvectors.shape[1]) if which is None else which
    coords = ["x"] if result.grid.dim == 1 else ["x", "y"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(coords + [f"v{j + 1}" for j in which])
        for i in range(result.grid.n):
            w.writerow([_fmt(c) for c in result.grid.nodes[i]] +
                       [_fmt(result.eigenvectors[i, j]) for j in which])


def write_density_csv(dens: BoundaryDensity, path) -> None:
    coords = ["x"] if dens.points.shape[1] == 1 else ["x", "y"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param"] + coords + ["density", "weight"])
        for p, x, v, wt in zip(dens.param, dens.points, dens.values, dens.weights):
            w.writerow([_fmt(p)] + [_fmt(c) for c in x] + [_fmt(v), _fmt(wt)])
