"""Config-driven command-line front end.

Every command reads one JSON config, writes ``report.json`` plus CSV tables
into the output directory and exits with 0 (pass), 1 (a hypothesis or
acceptance check failed), 2 (usage or configuration error) or 3 (numerical
failure).  Outputs contain no timestamps, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import __version__
from .agmon import agmon_graph, check_conddag, distance_field, write_distance_csv
from .asymptotics import asymptotic_report, boost_factor, laplace_bracket, slope_fit, write_series_csv
from .errors import ConfigError, HRangeError, SparseTable, WittenExitError
from .mc import (compute_qsd, density_histogram, dt_halving_check, exit_ensemble, exit_histogram,
                 hyperdyn_compare, independence_test, ks_exponential, total_variation)
from .operator import build_grid, default_spacing, h_guard
from .potential.catalog import CATALOG, default_pair, make_field, make_perturbation
from .potential.domains import DomainPair, domain_from_spec
from .potential.hypotheses import Tolerances, _jsonable, check_hypotheses
from .spectra import (exit_density_pde, generator_rate, m_counts, nu_threshold, problem_operator,
                      smallest_eigenpairs)

__all__ = ["ExperimentConfig", "main", "run_command", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1

_MC_DEFAULTS = {"n": 1000, "dt": None, "seed": 0, "bins": 20, "max_steps": 10_000_000,
                "dt_check": False, "alpha": 0.01, "tv_max": 0.05, "censor_max": 1e-3}


@dataclass
class ExperimentConfig:
    potential: str
    params: dict
    h_values: list
    perturbation: dict | None = None
    domains: dict | None = None
    grid_spacing: float | None = None
    k: int = 6
    nu_exponent: float = 1.2
    nu_prefactor: float = 1.0
    mc: dict = dc_field(default_factory=lambda: dict(_MC_DEFAULTS))
    hypotheses: dict = dc_field(default_factory=dict)
    beta_input: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        pot = d.get("potential")
        if not isinstance(pot, dict) or "name" not in pot:
            raise ConfigError("config needs potential.name")
        if pot["name"] not in CATALOG:
            raise ConfigError(f"unknown potential {pot['name']!r}; known: {sorted(CATALOG)}")
        has_h, has_b = "h" in d, "beta" in d
        if has_h and has_b:
            raise ConfigError("give exactly one of 'h' and 'beta'")
        if has_b:
            hs = [2.0 / float(b) for b in _as_list(d["beta"])]
        elif has_h:
            hs = [float(h) for h in _as_list(d["h"])]
        else:
            hs = []
        if any(h <= 0 for h in hs):
            raise ConfigError("h and beta values must be positive")
        mc = dict(_MC_DEFAULTS)
        mc.update(d.get("mc", {}))
        unknown = set(mc) - set(_MC_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown mc keys {sorted(unknown)}")
        cnt = d.get("counting", {})
        return cls(
            potential=pot["name"], params=dict(pot.get("params", {})), h_values=hs,
            perturbation=d.get("perturbation"), domains=d.get("domains"),
            grid_spacing=d.get("grid", {}).get("spacing"),
            k=int(d.get("eigensolver", {}).get("k", 6)),
            nu_exponent=float(cnt.get("nu_exponent", 1.2)),
            nu_prefactor=float(cnt.get("nu_prefactor", 1.0)),
            mc=mc, hypotheses=dict(d.get("hypotheses", {})), beta_input=has_b,
        )

    def to_dict(self) -> dict:
        out = {"potential": {"name": self.potential, "params": self.params},
               "h": self.h_values, "grid": {"spacing": self.grid_spacing},
               "eigensolver": {"k": self.k},
               "counting": {"nu_exponent": self.nu_exponent, "nu_prefactor": self.nu_prefactor},
               "mc": self.mc, "hypotheses": self.hypotheses}
        if self.perturbation:
            out["perturbation"] = self.perturbation
        if self.domains:
            out["domains"] = self.domains
        return out

    def build(self):
        try:
            f = make_field(self.potential, self.params)
            if self.domains:
                pair = DomainPair(domain_from_spec(self.domains["minus"]),
                                  domain_from_spec(self.domains["plus"]))
            else:
                pair = default_pair(self.potential, self.params)
        except (TypeError, KeyError, ValueError) as exc:
            raise ConfigError(f"bad potential or domain settings for {self.potential}: {exc}") from exc
        if pair.dim != f.dim:
            raise ConfigError("domain and potential dimensions differ")
        return f, pair

    def nu(self, h: float) -> float:
        return nu_threshold(h, self.nu_exponent, self.nu_prefactor)


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def _tolerances(cfg: ExperimentConfig) -> Tolerances:
    keys = ("grad_floor", "eig_floor", "separation", "slack")
    return Tolerances(**{k: float(cfg.hypotheses[k]) for k in keys if k in cfg.hypotheses})


def _hyp_spacing(cfg, pair):
    ext = float(np.max(pair.minus.bbox[1] - pair.minus.bbox[0]))
    return float(cfg.hypotheses.get("spacing") or ext / (2000 if pair.dim == 1 else 200))


def _kappa(f, pair):
    from .potential.hypotheses import kappa

    ext = float(np.max(pair.plus.bbox[1] - pair.plus.bbox[0]))
    return kappa(f, pair.plus, ext / (4000 if pair.dim == 1 else 300))


def _map(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _tag(h: float) -> str:
    return f"h{h:.6g}"


def _f(x) -> str:
    return repr(float(x))


def _write_densities(path, items):
    """One table of boundary densities, keyed by ``h``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        dim = next((d.points.shape[1] for _, d in items if d is not None), 1)
        w.writerow(["h", "param"] + ["x", "y"][:dim] + ["density", "weight"])
        for h, d in items:
            if d is None:
                continue
            for p, x, v, wt in zip(d.param, d.points, d.values, d.weights):
                w.writerow([_f(h), _f(p)] + [_f(c) for c in x] + [_f(v), _f(wt)])


def _write_samples(path, items):
    """One table of exit samples; ``items`` are ``(h, label, ExitStatistics)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        dim = items[0][2].location.shape[1] if items else 1
        w.writerow(["h", "ensemble", "index", "tau"] + ["x", "y"][:dim] + ["param", "steps", "censored"])
        for h, lab, st in items:
            for i, (t, x, p, k, c) in enumerate(zip(st.tau, st.location, st.param, st.steps, st.censored)):
                w.writerow([_f(h), lab, i, _f(t)] + [_f(v) for v in x] + [_f(p), int(k), int(c)])


def _need_h(cfg):
    if not cfg.h_values:
        raise ConfigError("this command needs 'h' or 'beta' values")


# ---------------------------------------------------------------------------
# commands


def cmd_check(cfg: ExperimentConfig, out: Path, threads: int = 1):
    f, pair = cfg.build()
    sp = _hyp_spacing(cfg, pair)
    rep = check_hypotheses(f, pair, sp, _tolerances(cfg))
    grid = build_grid(pair.minus, sp, min_nodes=2)
    margin = float(cfg.hypotheses.get("conddag_margin", 0.0))
    cd = check_conddag(f, pair, grid=grid, margin=margin, critical_points=rep.critical_points, report=rep)
    g = agmon_graph(f, grid)
    write_distance_csv(g, distance_field(g, g.boundary_nodes), out / "agmon.csv")
    res = {"hypotheses": rep.to_dict(),
           "conddag": {"ok": cd.ok, "lhs": cd.lhs, "rhs": cd.rhs, "margin": margin,
                       "heuristic": rep.conddag_heuristic}}
    if rep.morse_ok:
        res["pathway"] = "morse"
        passed = rep.hyp0_ok and rep.hyp3_ok and rep.distinctness_ok and cd.ok
    else:
        # flat critical sets: the counting assumptions are checked directly
        res["pathway"] = "non-morse"
        h = cfg.h_values[0] if cfg.h_values else 0.1
        nu = cfg.nu(h)
        sp_h = cfg.grid_spacing or default_spacing(f, pair.plus, h)
        trials = {}
        for lab, fac in (("nu", 1.0), ("nu_x2", 2.0), ("nu_half", 0.5)):
            trials[lab] = m_counts(f, pair, h, fac * nu, spacing=sp_h)[0]
        stable = trials["nu"] == trials["nu_x2"] == trials["nu_half"]
        matched = trials["nu"]["m0N_minus"] == trials["nu"]["m0D_plus"]
        res["counts"] = {"h": h, "nu": nu, "values": trials, "stable": stable,
                         "m0_matched": matched}
        passed = rep.hyp0_ok and rep.hyp3_ok and stable and matched
    return res, bool(passed)


def _spectrum_one(f, pair, cfg, h):
    nu = cfg.nu(h)
    sp = cfg.grid_spacing or default_spacing(f, pair.plus, h)
    counts, results = m_counts(f, pair, h, nu, spacing=sp)
    dres = results["m0D_plus"]
    try:
        dens, note = exit_density_pde(f, dres.grid, dres.eigenvectors[:, 0], h), None
    except WittenExitError as exc:
        dens, note = None, f"{type(exc).__name__}: {exc}"
    lam1 = float(dres.eigenvalues[0])
    return {"h": h, "nu": nu, "spacing": sp, "counts": counts, "exit_density_note": note,
            "lambda1_dirichlet_plus": lam1,
            "lambda1_below_roundoff": bool(lam1 < 1e-12 * float(dres.eigenvalues[-1])),
            "m0_matched": counts["m0N_minus"] == counts["m0D_plus"]}, results, dens


def cmd_spectrum(cfg: ExperimentConfig, out: Path, threads: int = 1):
    _need_h(cfg)
    f, pair = cfg.build()
    runs = _map(lambda h: _spectrum_one(f, pair, cfg, h), cfg.h_values, threads)
    with open(out / "eigenvalues.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["h", "problem", "index", "eigenvalue", "residual"])
        for info, results, _ in runs:
            for key, r in results.items():
                for i, (lam, res) in enumerate(zip(r.eigenvalues, r.residual_norms), start=1):
                    w.writerow([repr(info["h"]), key, i, repr(float(lam)), repr(float(res))])
    for info, results, _ in runs:
        for key, r in results.items():
            _write_vectors(r, out / f"eigenvector_{key}_{_tag(info['h'])}.csv")
    _write_densities(out / "exitdensity.csv", [(i["h"], d) for i, _, d in runs])
    infos = [r[0] for r in runs]
    return {"runs": infos}, all(i["m0_matched"] for i in infos)


def _write_vectors(r, path):
    coords = ["x"] if r.grid.dim == 1 else ["x", "y"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(coords + [f"v{j + 1}" for j in range(r.eigenvectors.shape[1])])
        for x, v in zip(r.grid.nodes, r.eigenvectors):
            w.writerow([repr(float(c)) for c in x] + [repr(float(c)) for c in v])


def cmd_asymptotics(cfg: ExperimentConfig, out: Path, threads: int = 1):
    _need_h(cfg)
    f, pair = cfg.build()
    kap = _kappa(f, pair)
    for h in cfg.h_values:
        h_guard(kap, h)
    df = make_perturbation(cfg.perturbation)

    def one(h):
        sp = cfg.grid_spacing or default_spacing(f, pair.plus, h)
        op = problem_operator(f, pair.plus, "dirichlet", 0, h, sp)
        lam = float(smallest_eigenpairs(op, k=2).eigenvalues[0])
        rep = asymptotic_report(f, pair, h, lambda1_numeric=lam, delta_f=df)
        lo, q, hi = laplace_bracket(f, pair.plus, h)
        return rep, {"lower": lo, "quadrature": q, "upper": hi, "ok": bool(lo <= q <= hi)}

    runs = _map(one, cfg.h_values, threads)
    reports = [r for r, _ in runs]
    write_series_csv(reports, out / "asymptotics.csv")
    res = {"kappa_f": kap, "reports": [r.to_dict() for r in reports],
           "brackets": [b for _, b in runs]}
    passed = all(b["ok"] for _, b in runs)
    if len(cfg.h_values) >= 3:
        slope, limit, r2 = slope_fit(cfg.h_values, [r.lambda1_numeric for r in reports])
        ok = abs(limit / (-2 * kap) - 1) <= 0.1
        res["slope_fit"] = {"slope": slope, "limit": limit, "r2": r2, "target": -2 * kap, "ok": ok}
        passed = passed and ok
    return res, bool(passed)


def _mc_dt(cfg, h):
    return cfg.mc["dt"] if cfg.mc["dt"] is not None else min(h * h / 10.0, 1e-3)


def cmd_mc(cfg: ExperimentConfig, out: Path, threads: int = 1):
    _need_h(cfg)
    f, pair = cfg.build()
    kap = _kappa(f, pair)
    m = cfg.mc
    runs, passed, samples, dens_all = [], True, [], []
    for h in cfg.h_values:
        h_guard(kap, h)
        beta = 2.0 / h
        dt = _mc_dt(cfg, h)
        q = compute_qsd(f, pair.plus, h, spacing=cfg.grid_spacing)
        rate = generator_rate(q.lambda1, h)
        kw = dict(max_steps=int(m["max_steps"]))
        if m["dt_check"]:
            chk = dt_halving_check(f, pair, beta, int(m["n"]), int(m["seed"]), dt=dt, threads=threads, qsd=q, **kw)
            st = chk.pop("coarse")
            chk.pop("fine")
        else:
            chk = None
            st = exit_ensemble(f, pair, beta, dt, int(m["n"]), int(m["seed"]), threads, q, **kw)
        dens = exit_density_pde(f, q.grid, q.u1, h)
        samples.append((h, "f", st))
        dens_all.append((h, dens))
        valid = st.tau[st.valid]
        ks = ks_exponential(valid, rate)
        try:
            chi2, p_ind, shape = independence_test(st, space_bins=int(m["bins"]), return_bins=True)
            ind = {"chi2": chi2, "p_value": p_ind, "table_shape": list(shape), "ok": p_ind > m["alpha"]}
        except SparseTable as exc:
            ind = {"chi2": None, "p_value": None, "note": str(exc), "ok": True}
        tv = total_variation(exit_histogram(st, int(m["bins"])), density_histogram(dens, int(m["bins"])))
        r = {"h": h, "beta": beta, "dt": dt, "lambda1": q.lambda1, "rate": rate,
             "empirical_rate": st.rate, "mean_tau": st.mean_tau, "stderr_tau": st.stderr_tau,
             "ks": {"statistic": ks[0], "p_value": ks[1], "ok": ks[1] > m["alpha"]},
             "independence": ind, "tv_exit": {"value": tv, "ok": tv <= m["tv_max"]},
             "censoring": {"fraction": st.censoring_fraction, "ok": st.censoring_fraction < m["censor_max"]},
             "samples_header": st.header()}
        if chk is not None:
            r["dt_check"] = chk
        ok = r["ks"]["ok"] and ind["ok"] and r["tv_exit"]["ok"] and r["censoring"]["ok"] and \
            (chk is None or chk["pass"])
        r["ok"] = bool(ok)
        passed = passed and ok
        runs.append(r)
    _write_samples(out / "samples.csv", samples)
    _write_densities(out / "exitdensity.csv", dens_all)
    return {"runs": runs}, bool(passed)


def cmd_hyperdyn(cfg: ExperimentConfig, out: Path, threads: int = 1):
    _need_h(cfg)
    if not cfg.perturbation:
        raise ConfigError("hyperdyn needs a 'perturbation'")
    f, pair = cfg.build()
    df = make_perturbation(cfg.perturbation)
    g = f + df
    kap = _kappa(f, pair)
    m = cfg.mc
    runs, passed, samples = [], True, []
    for h in cfg.h_values:
        h_guard(kap, h)
        beta = 2.0 / h
        dt = _mc_dt(cfg, h)
        q1 = compute_qsd(f, pair.plus, h, spacing=cfg.grid_spacing)
        q2 = compute_qsd(g, pair.plus, h, spacing=cfg.grid_spacing)
        B = boost_factor(f, df, pair, h, grid=q1.grid)
        kw = dict(max_steps=int(m["max_steps"]))
        s1 = exit_ensemble(f, pair, beta, dt, int(m["n"]), int(m["seed"]), threads, q1, stream=0, **kw)
        s2 = exit_ensemble(g, pair, beta, dt, int(m["n"]), int(m["seed"]), threads, q2, stream=1, **kw)
        samples += [(h, "f", s1), (h, "f+df", s2)]
        cmp_ = hyperdyn_compare(s1, s2, B, int(m["bins"]), m["alpha"], m["tv_max"])
        neg = hyperdyn_compare(s1, s2, 2 * B, int(m["bins"]), m["alpha"], m["tv_max"])
        r = {"h": h, "beta": beta, "dt": dt, "B": B,
             "lambda1_ratio_over_B": (q2.lambda1 / q1.lambda1) / B,
             "compare": cmp_, "negative_control": {"B": 2 * B, "ks_pvalue": neg["ks_pvalue"],
                                                   "rejects": neg["ks_pvalue"] < m["alpha"]},
             "headers": {"f": s1.header(), "fdf": s2.header()}}
        ok = cmp_["ks_pass"] and cmp_["tv_pass"] and r["negative_control"]["rejects"]
        r["ok"] = bool(ok)
        passed = passed and ok
        runs.append(r)
    _write_samples(out / "samples.csv", samples)
    return {"runs": runs}, bool(passed)


COMMANDS = {"check": cmd_check, "spectrum": cmd_spectrum, "asymptotics": cmd_asymptotics,
            "mc": cmd_mc, "hyperdyn": cmd_hyperdyn}


def run_command(command: str, cfg: ExperimentConfig, out: Path, threads: int = 1) -> tuple[dict, bool]:
    """Run one command, write ``report.json`` into ``out`` and return ``(report, passed)``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    results, passed = COMMANDS[command](cfg, out, threads)
    seed = int(cfg.mc["seed"]) if command in ("mc", "hyperdyn") else None
    report = {"schema_version": SCHEMA_VERSION, "command": command, "version": __version__,
              "seed": seed, "config": cfg.to_dict(), "passed": passed, "results": results}
    report = _jsonable(report)
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report, passed


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wittenexit", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"wittenexit {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, type=Path, help="JSON experiment config")
        s.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        s.add_argument("--seed", type=int, help="override mc.seed")
        s.add_argument("--threads", type=int, default=1)
        g = s.add_mutually_exclusive_group()
        g.add_argument("--h", type=float, nargs="+", help="override the h list")
        g.add_argument("--beta", type=float, nargs="+", help="override with beta values (h = 2/beta)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
        if args.h or args.beta:
            raw = {k: v for k, v in raw.items() if k not in ("h", "beta")}
            raw["h" if args.h else "beta"] = args.h or args.beta
        if args.seed is not None:
            raw.setdefault("mc", {})["seed"] = args.seed
        cfg = ExperimentConfig.from_dict(raw)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        report, passed = run_command(args.command, cfg, args.out, args.threads)
    except (OSError, json.JSONDecodeError, ConfigError, HRangeError, KeyError) as exc:
        print(f"wittenexit: error: {exc}", file=sys.stderr)
        return 2
    except (WittenExitError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"wittenexit: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(f"{args.command}: {'pass' if passed else 'fail'} ({args.out / 'report.json'})")
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
