"""Euler-Maruyama exit simulation from the quasi-stationary distribution and exit-law tests.

Every sample owns counter-based random streams keyed by
``(seed, stream, sample index, purpose)``, so an ensemble is the same whatever
the batch size or number of worker threads.  Ensembles are integrated as
vectors of independent paths; the per-path arithmetic is elementwise, which
keeps results bit-identical across batchings.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numba
import numpy as np
from scipy import stats

from . import __version__
from .errors import EnvelopeBust, SparseTable, StepBudgetExceeded, TooFewSamples
from .operator import Grid, assemble_witten0, build_grid, default_spacing
from .potential.domains import Disc, DomainPair, Interval, IntervalUnion
from .potential.fields import ScalarField
from .spectra import _lattice_array, qsd_density, smallest_eigenpairs

__all__ = [
    "ExitSample",
    "ExitStatistics",
    "QSD",
    "rng_stream",
    "em_step",
    "sample_qsd",
    "compute_qsd",
    "simulate_exit",
    "exit_ensemble",
    "ks_exponential",
    "independence_test",
    "exit_histogram",
    "density_histogram",
    "total_variation",
    "hyperdyn_compare",
    "dt_halving_check",
]

_NORMAL, _UNIFORM, _START = 0, 1, 2


def rng_stream(seed: int, stream: int, index: int, purpose: int = 0) -> np.random.Generator:
    """Independent generator for one sample and one purpose."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index), int(purpose)))))


@dataclass
class ExitSample:
    tau: float
    location: np.ndarray
    param: float
    steps: int
    censored: bool = False


@dataclass
class ExitStatistics:
    """Exit times and points of an ensemble, ordered by sample index."""

    tau: np.ndarray
    location: np.ndarray
    param: np.ndarray
    steps: np.ndarray
    censored: np.ndarray
    config: dict = dc_field(default_factory=dict)
    endpoints: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(len(self.tau))

    @property
    def valid(self) -> np.ndarray:
        return ~self.censored

    @property
    def censoring_fraction(self) -> float:
        return float(np.mean(self.censored)) if self.n else 0.0

    @property
    def mean_tau(self) -> float:
        return float(np.mean(self.tau[self.valid]))

    @property
    def rate(self) -> float:
        return 1.0 / self.mean_tau

    @property
    def stderr_tau(self) -> float:
        t = self.tau[self.valid]
        return float(np.std(t, ddof=1) / np.sqrt(len(t)))

    def samples(self) -> list[ExitSample]:
        return [ExitSample(float(t), x, float(p), int(s), bool(c))
                for t, x, p, s, c in zip(self.tau, self.location, self.param, self.steps, self.censored)]

    def header(self) -> dict:
        return {"version": __version__, "n": self.n, "censored": int(np.sum(self.censored)),
                "censoring_fraction": self.censoring_fraction, "config": self.config}

    def write_csv(self, path) -> None:
        d = self.location.shape[1] if self.location.ndim == 2 else 1
        coords = ["x"] if d == 1 else ["x", "y"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "tau"] + coords + ["param", "steps", "censored"])
            for i, (t, x, p, s, c) in enumerate(zip(self.tau, self.location, self.param,
                                                    self.steps, self.censored)):
                w.writerow([i, repr(float(t))] + [repr(float(v)) for v in np.atleast_1d(x)]
                           + [repr(float(p)), int(s), int(c)])

    def write_header(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.header(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def em_step(field: ScalarField, x, dt: float, beta: float, noise) -> np.ndarray:
    """One Euler-Maruyama step ``x - grad f(x) dt + sqrt(2 dt/beta) noise``."""
    if dt <= 0 or beta <= 0:
        raise ValueError("dt and beta must be positive")
    x = np.asarray(x, dtype=float)
    P = x.reshape(-1, field.dim)
    out = P - field.gradient_fn(P) * dt + np.sqrt(2.0 * dt / beta) * np.asarray(noise, dtype=float).reshape(P.shape)
    return out.reshape(x.shape)


# ---------------------------------------------------------------------------
# quasi-stationary starts


@dataclass
class QSD:
    """Quasi-stationary density on the nodes of a Dirichlet grid."""

    grid: Grid
    density: np.ndarray
    lambda1: float
    h: float
    u1: np.ndarray


def compute_qsd(field: ScalarField, domain, h: float, spacing: float | None = None) -> QSD:
    """First Dirichlet eigenpair on ``domain`` and the resulting QSD."""
    dx = spacing or default_spacing(field, domain, h)
    grid = build_grid(domain, dx)
    op = assemble_witten0(field, grid, "dirichlet", h, check_mesh=False)
    r = smallest_eigenpairs(op, k=2)
    u1 = r.eigenvectors[:, 0]
    return QSD(grid, qsd_density(field, grid, u1, h), float(r.eigenvalues[0]), h, u1)


def _qsd_cdf_1d(qsd: QSD):
    g = qsd.grid
    x = np.concatenate([g.nodes[:, 0], g.cut_points[:, 0]])
    v = np.concatenate([qsd.density, np.zeros(len(g.cut_points))])
    o = np.argsort(x, kind="stable")
    x, v = x[o], v[o]
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(x))])
    return x, cdf / cdf[-1]


def sample_qsd(qsd: QSD, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from the QSD.

    1D: inverse of the trapezoid CDF, linear within each cell.  2D: rejection
    from a uniform proposal on the bounding box, against the bilinear
    interpolant of the node density with envelope ``1.01 * max``.
    """
    m = 1 if size is None else int(size)
    g = qsd.grid
    if g.dim == 1:
        x, cdf = _qsd_cdf_1d(qsd)
        u = rng.random(m)
        out = np.interp(u, cdf, x)[:, None]
    else:
        interp = _lattice_array(g, qsd.density)
        env = 1.01 * float(np.max(qsd.density))
        lo, hi = g.domain.bbox
        out = np.empty((0, 2))
        while len(out) < m:
            p = lo + (hi - lo) * rng.random((max(2 * (m - len(out)), 8), 2))
            v = interp(p)
            if np.any(v > env):
                raise EnvelopeBust(f"density {float(v.max()):.4g} above envelope {env:.4g}")
            keep = (rng.random(len(p)) * env < v) & g.domain.inside(p)
            out = np.concatenate([out, p[keep]])
        out = out[:m]
    return out[0] if size is None else out


# ---------------------------------------------------------------------------
# exit simulation


def _project(domain, x):
    """Nearest boundary point and its parameter (coordinate in 1D, angle in 2D)."""
    if isinstance(domain, (Interval, IntervalUnion)):
        parts = domain.parts if isinstance(domain, IntervalUnion) else [domain]
        ends = np.array([e for I in parts for e in (I.a, I.b)])
        k = np.argmin(np.abs(x[:, :1] - ends[None, :]), axis=1)
        b = ends[k]
        return b[:, None], b
    if isinstance(domain, Disc):
        c = np.asarray(domain.center, dtype=float)
        y = x - c
        th = np.arctan2(y[:, 1], y[:, 0])
        return c + domain.radius * np.stack([np.cos(th), np.sin(th)], axis=1), th
    raise TypeError(f"exit simulation not supported on {type(domain).__name__}")


def _distance(domain):
    """Signed distance to the boundary, positive inside, on ``(n, d)`` arrays."""
    if isinstance(domain, Interval):
        lo, hi = float(domain.a), float(domain.b)
        return lambda x: np.minimum(x[:, 0] - lo, hi - x[:, 0])
    if isinstance(domain, Disc):
        c, r = np.asarray(domain.center, dtype=float), float(domain.radius)
        return lambda x: r - np.sqrt((x[:, 0] - c[0]) ** 2 + (x[:, 1] - c[1]) ** 2)
    return lambda x: -np.atleast_1d(domain.sdf(x))


class _Streams:
    """Per-sample normal and uniform streams, read in chunks.

    Each chunk holds the scaled noise increments and the Brownian-bridge
    thresholds ``-log(u) sigma^2 dt / 2`` of the active paths.  Drawing from a
    generator in pieces yields the same sequence as drawing at once, so chunk
    sizes do not affect the paths.
    """

    budget = 1 << 22

    def __init__(self, seed, stream, idx, dim, substeps, scale, s2dt):
        self.gn = [rng_stream(seed, stream, i, _NORMAL) for i in idx]
        self.gu = [rng_stream(seed, stream, i, _UNIFORM) for i in idx]
        self.dim, self.sub, self.scale, self.s2dt = dim, substeps, scale, s2dt

    def fill(self, active):
        m = len(active)
        c = int(min(max(self.budget // max(m * self.sub * self.dim, 1), 256), 1 << 16))
        s, d = self.sub, self.dim
        z = np.empty((c, m, d))
        L = np.empty((c, m))
        for j, i in enumerate(active):
            w = self.gn[i].standard_normal((c, s, d))
            z[:, j, :] = (w.sum(axis=1) if s > 1 else w[:, 0, :]) / np.sqrt(s)
            L[:, j] = self.gu[i].random(c)
        z *= self.scale
        # bridge crossing when exp(-2 d0 d1/(sigma^2 dt)) > u, i.e. d0 d1 < L
        L = -np.log1p(-L) * (0.5 * self.s2dt)
        return c, z, L


# bridge crossing probabilities below exp(-40) are smaller than any nonzero
# double drawn by Generator.random(), so those steps never consume a uniform
_BRIDGE_CUT = 40.0


@numba.njit(cache=True, nogil=True)
def _chunk_1d(x, d0, w, u, ui, dc, bumps, lo, hi, dt, scale, s2dt, bridge):
    """Advance one 1D path through a chunk of normals; stop at the first exit event.

    ``w`` holds ``substeps`` standard normals per step; ``u`` is a buffer of
    uniforms read from position ``ui`` only on steps where a bridge crossing
    is possible.  Returns ``(status, t, alpha, x, x_new, d, ui)`` with status
    1 on exit, 0 when the chunk is used up and 2 when ``u`` ran out before
    step ``t`` (which has not been taken).
    """
    sub = w.shape[1]
    rs = 1.0 / np.sqrt(sub)
    for t in range(w.shape[0]):
        g = dc[0]
        for a in dc[1:]:
            g = g * x + a
        for j in range(bumps.shape[0]):
            r = bumps[j, 1]
            y = (x - bumps[j, 0]) / r
            s2 = y * y
            if s2 < 1.0:
                q = 1.0 - s2
                e = bumps[j, 2] * np.exp(1.0 - 1.0 / q)
                g += (2.0 * (-e / q**2) * y) / r
        zs = 0.0
        for k in range(sub):
            zs += w[t, k]
        xn = x - g * dt + (zs * rs) * scale
        dn = min(xn - lo, hi - xn)
        if dn <= 0.0:
            return 1, t, d0 / (d0 - dn), x, xn, dn, ui
        if bridge:
            e2 = 2.0 * d0 * dn / s2dt
            if e2 < _BRIDGE_CUT:
                if ui >= u.shape[0]:
                    return 2, t, 0.0, x, x, d0, ui
                hit = u[ui] < np.exp(-e2)
                ui += 1
                if hit:
                    return 1, t, 0.5, x, xn, dn, ui
        x = xn
        d0 = dn
    return 0, w.shape[0], 0.0, x, x, d0, ui


def _simulate_paths_1d(field, domain, x0, dt, beta, seed, stream, idx, substeps, max_steps, bridge,
                       chunk=8192):
    """Path-by-path integration with the compiled kernel."""
    n = len(idx)
    tau = np.full(n, np.nan)
    loc = np.full((n, 1), np.nan)
    par = np.full(n, np.nan)
    steps = np.zeros(n, dtype=np.int64)
    cens = np.zeros(n, dtype=bool)
    s2dt = (2.0 / beta) * dt
    scale = np.sqrt(s2dt)
    dc, bumps = (np.ascontiguousarray(v, dtype=float) for v in field.kernel)
    lo, hi = float(domain.a), float(domain.b)
    for j, i in enumerate(idx):
        gn = rng_stream(seed, stream, i, _NORMAL)
        gu = rng_stream(seed, stream, i, _UNIFORM)
        u, ui = gu.random(1024), 0
        x = float(x0[j, 0])
        d0 = min(x - lo, hi - x)
        k = 0
        while k < max_steps:
            m = min(chunk, max_steps - k)
            w = gn.standard_normal((m, substeps))
            t0 = 0
            while True:
                st, t, alpha, xa, xb, d0, ui = _chunk_1d(x, d0, w[t0:], u, ui, dc, bumps, lo, hi,
                                                         dt, scale, s2dt, bridge)
                if st == 2:
                    u, ui = gu.random(1024), 0
                    t0 += t
                    x = xa
                    continue
                break
            if st == 1:
                k += t0 + t + 1
                pts, th = _project(domain, np.array([[xa + alpha * (xb - xa)]]))
                tau[j], loc[j], par[j], steps[j] = (k - 1 + alpha) * dt, pts[0], th[0], k
                break
            k += m
            x = xa
        else:
            cens[j], tau[j], steps[j] = True, k * dt, k
    return tau, loc, par, steps, cens


def _simulate_batch(field, domain, x0, dt, beta, seed, stream, idx, substeps, max_steps, bridge):
    if field.kernel is not None and isinstance(domain, Interval):
        return _simulate_paths_1d(field, domain, x0, dt, beta, seed, stream, idx, substeps,
                                  max_steps, bridge)
    n, d = x0.shape
    tau = np.full(n, np.nan)
    loc = np.full((n, d), np.nan)
    par = np.full(n, np.nan)
    steps = np.zeros(n, dtype=np.int64)
    cens = np.zeros(n, dtype=bool)
    s2dt = (2.0 / beta) * dt
    st = _Streams(seed, stream, idx, d, substeps, np.sqrt(s2dt), s2dt)
    dist = _distance(domain)
    grad = field.gradient_fn
    active = np.arange(n)
    x = x0.copy()
    k = 0
    dprev = dist(x)
    while active.size:
        c, z, L = st.fill(active)
        if not bridge:
            L[:] = 0.0
        for t in range(c):
            k += 1
            xn = x - grad(x) * dt + z[t]
            dn = dist(xn)
            ev = dprev * dn < L[t] if bridge else dn <= 0
            if ev.any():
                di = np.flatnonzero(ev)
                out = dn[di] <= 0
                d0, d1 = dprev[di], dn[di]
                alpha = np.where(out, d0 / np.where(out, d0 - d1, 1.0), 0.5)
                cross = x[di] + alpha[:, None] * (xn[di] - x[di])
                pts, th = _project(domain, cross)
                g = active[di]
                tau[g], loc[g], par[g], steps[g] = (k - 1 + alpha) * dt, pts, th, k
                keep = ~ev
                active, x, dprev, z, L = active[keep], xn[keep], dn[keep], z[:, keep], L[:, keep]
                if not active.size:
                    break
            else:
                x, dprev = xn, dn
            if k >= max_steps:
                cens[active] = True
                tau[active] = k * dt
                steps[active] = k
                active = active[:0]
                break
    return tau, loc, par, steps, cens


def simulate_exit(field: ScalarField, omega_plus, x0, dt: float, beta: float, seed: int = 0,
                  index: int = 0, stream: int = 0, max_steps: int = 10_000_000,
                  bridge: bool = True, substeps: int = 1) -> ExitSample:
    """Integrate one path from ``x0`` until it leaves ``omega_plus``.

    The exit time is the linearly interpolated crossing of the last step.
    With ``bridge`` a path that stays inside over a step is also stopped with
    the Brownian-bridge crossing probability ``exp(-2 d0 d1/(sigma^2 dt))``,
    where d0 and d1 are the distances to the boundary before and after the
    step; its exit time is then the middle of the step.  Paths still inside
    after ``max_steps`` are returned censored.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float)).reshape(1, field.dim)
    if not np.all(omega_plus.inside(x0 if field.dim == 2 else x0[:, 0])):
        raise ValueError("x0 must lie inside the domain")
    t, l, p, s, c = _simulate_batch(field, omega_plus, x0, dt, beta, seed, stream, [index],
                                    substeps, max_steps, bridge)
    return ExitSample(float(t[0]), l[0], float(p[0]), int(s[0]), bool(c[0]))


def default_dt(h: float) -> float:
    return min(h * h / 10.0, 1e-3)


def exit_ensemble(field: ScalarField, pair: DomainPair | object, beta: float, dt: float | None = None,
                  n: int = 1000, seed: int = 0, threads: int = 1, qsd: QSD | None = None,
                  stream: int = 0, substeps: int = 1, max_steps: int = 10_000_000,
                  bridge: bool = True, batch: int = 2000, strict: bool = False) -> ExitStatistics:
    """``n`` exits from QSD starts in the outer domain at inverse temperature ``beta``.

    The QSD is computed at ``h = 2/beta`` unless supplied.  Samples are split
    into batches that may run on ``threads`` workers; the result does not
    depend on either.  ``strict`` raises :class:`StepBudgetExceeded` if any
    path is censored.
    """
    omega = pair.plus if isinstance(pair, DomainPair) else pair
    h = 2.0 / beta
    dt = default_dt(h) if dt is None else dt
    cfg = {"beta": beta, "h": h, "dt": dt, "n": n, "seed": seed, "stream": stream,
           "substeps": substeps, "bridge": bridge, "max_steps": max_steps,
           "field": field.name, "field_params": field.params, "domain": omega.to_dict()}
    d = field.dim
    ends = None
    if d == 1:
        ends = np.sort(np.array([e for I in omega.components for e in (I.a, I.b)], dtype=float))
    if n == 0:
        e = np.empty(0)
        return ExitStatistics(e, np.empty((0, d)), e, np.empty(0, dtype=np.int64),
                              np.empty(0, dtype=bool), cfg, ends)
    q = qsd or compute_qsd(field, omega, h)
    cfg["lambda1"] = q.lambda1
    x0 = np.concatenate([sample_qsd(q, rng_stream(seed, stream, i, _START), 1) for i in range(n)])
    blocks = [np.arange(a, min(a + batch, n)) for a in range(0, n, batch)]

    def run(ix):
        return _simulate_batch(field, omega, x0[ix], dt, beta, seed, stream, ix, substeps,
                               max_steps, bridge)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    tau, loc, par, steps, cens = (np.concatenate([p[j] for p in parts]) for j in range(5))
    out = ExitStatistics(tau, loc, par, steps, cens, cfg, ends)
    if strict and cens.any():
        raise StepBudgetExceeded(f"{int(cens.sum())} of {n} paths censored after {max_steps} steps")
    return out


# ---------------------------------------------------------------------------
# tests of the exit law


def ks_exponential(taus, rate: float) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov test against Exp(rate) with the asymptotic p-value."""
    t = np.asarray(taus, dtype=float)
    if rate <= 0:
        raise ValueError("rate must be positive")
    if len(t) < 50:
        raise TooFewSamples(f"{len(t)} samples; need at least 50")
    r = stats.kstest(t, "expon", args=(0.0, 1.0 / rate), method="asymp")
    return float(r.statistic), float(r.pvalue)


def _endpoint_labels(st: ExitStatistics):
    ends = st.endpoints if st.endpoints is not None else np.unique(st.param[st.valid])
    return np.argmin(np.abs(st.param[:, None] - ends[None, :]), axis=1), ends


def _space_labels(st: ExitStatistics, space_bins: int):
    if st.location.shape[1] == 1:
        return _endpoint_labels(st)
    edges = np.linspace(-np.pi, np.pi, space_bins + 1)
    return np.clip(np.digitize(st.param, edges) - 1, 0, space_bins - 1), edges


def _merge_sparse_columns(T):
    """Merge each column with expected counts below 5 into its neighbour."""
    while T.shape[1] > 1:
        E = T.sum(1, keepdims=True) * T.sum(0, keepdims=True) / T.sum()
        bad = np.flatnonzero(E.min(axis=0) < 5)
        if not bad.size:
            break
        j = int(bad[np.argmin(T[:, bad].sum(0))])
        k = j - 1 if j > 0 else j + 1
        T[:, k] += T[:, j]
        T = np.delete(T, j, axis=1)
    return T


def independence_test(st: ExitStatistics, time_bins: int = 4, space_bins: int = 20,
                      return_bins: bool = False):
    """Chi-square test of independence of exit time and exit location.

    Times are binned at empirical quantiles and locations by endpoint (1D) or
    by angle (2D).  Sparse tables are coarsened (location bins merged, then
    fewer time bins) until every expected count is at least 5; the final
    shape is returned with ``return_bins``.
    """
    v = st.valid
    tau = st.tau[v]
    lab, _ = _space_labels(st, space_bins)
    lab = lab[v]
    cats = np.unique(lab)
    if cats.size < 2:
        raise SparseTable("all exits fall in one location bin")
    tb = time_bins
    while tb >= 2:
        q = np.quantile(tau, np.linspace(0, 1, tb + 1)[1:-1])
        ti = np.searchsorted(q, tau, side="right")
        T = np.zeros((tb, cats.size))
        np.add.at(T, (ti, np.searchsorted(cats, lab)), 1)
        T = T[T.sum(1) > 0]
        T = _merge_sparse_columns(T)
        if T.shape[0] >= 2 and T.shape[1] >= 2:
            E = T.sum(1, keepdims=True) * T.sum(0, keepdims=True) / T.sum()
            if E.min() >= 5:
                chi2, p, _, _ = stats.chi2_contingency(T, correction=False)
                return (float(chi2), float(p), T.shape) if return_bins else (float(chi2), float(p))
        tb -= 1
    raise SparseTable("expected counts below 5 for every admissible binning")


def exit_histogram(st: ExitStatistics, bins: int = 20) -> np.ndarray:
    """Fractions of exits per location bin: endpoints in 1D, angle bins in 2D."""
    p = st.param[st.valid]
    if st.location.shape[1] == 1:
        lab, ends = _endpoint_labels(st)
        return np.bincount(lab[st.valid], minlength=len(ends)) / max(len(p), 1)
    h, _ = np.histogram(p, bins=np.linspace(-np.pi, np.pi, bins + 1))
    return h / max(h.sum(), 1)


def density_histogram(dens, bins: int = 20) -> np.ndarray:
    """Masses of a boundary density over the bins of :func:`exit_histogram`."""
    m = dens.masses
    if dens.points.shape[1] == 1:
        out = m[np.argsort(dens.points[:, 0])]
        return out / out.sum()
    th = np.angle(np.exp(1j * dens.param))
    h, _ = np.histogram(th, bins=np.linspace(-np.pi, np.pi, bins + 1), weights=m)
    return h / h.sum()


def total_variation(p, q) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def hyperdyn_compare(stats_f: ExitStatistics, stats_fdf: ExitStatistics, B: float,
                     bins: int = 20, alpha: float = 0.01, tv_max: float = 0.05) -> dict:
    """Compare ``tau`` with ``B tau^{delta f}`` and the two exit-location histograms."""
    a = stats_f.tau[stats_f.valid]
    b = B * stats_fdf.tau[stats_fdf.valid]
    ks = stats.ks_2samp(a, b)
    tv = total_variation(exit_histogram(stats_f, bins), exit_histogram(stats_fdf, bins))
    return {"B": float(B), "ks_statistic": float(ks.statistic), "ks_pvalue": float(ks.pvalue),
            "tv": tv, "ks_pass": bool(ks.pvalue > alpha), "tv_pass": bool(tv <= tv_max),
            "alpha": alpha, "tv_max": tv_max, "n_f": int(len(a)), "n_fdf": int(len(b)),
            "mean_tau_f": float(a.mean()), "mean_scaled_tau_fdf": float(b.mean())}


def dt_halving_check(field: ScalarField, pair, beta: float, n: int, seed: int, dt: float | None = None,
                     threads: int = 1, qsd: QSD | None = None, **kw) -> dict:
    """Mean exit time at ``dt`` and ``dt/2`` driven by the same Brownian increments.

    The coarse run sums pairs of the fine-step normals, so both runs see the
    same noise path.  The shift is compared with the standard error of the
    coarse mean.
    """
    h = 2.0 / beta
    dt = default_dt(h) if dt is None else dt
    omega = pair.plus if isinstance(pair, DomainPair) else pair
    q = qsd or compute_qsd(field, omega, h)
    c = exit_ensemble(field, omega, beta, dt, n, seed, threads, q, substeps=2, **kw)
    f = exit_ensemble(field, omega, beta, dt / 2, n, seed, threads, q, substeps=1, **kw)
    shift = f.mean_tau - c.mean_tau
    se = c.stderr_tau
    v = c.valid & f.valid
    se_diff = float(np.std(f.tau[v] - c.tau[v], ddof=1) / np.sqrt(v.sum()))
    return {"dt": dt, "mean_tau": c.mean_tau, "mean_tau_half": f.mean_tau, "shift": shift,
            "stderr": se, "stderr_shift": se_diff, "pass": bool(abs(shift) < 2 * se),
            "coarse": c, "fine": f}
