"""Experiment runners behind the command line.

Grid cells and simulation seeds are independent, so they go through
:func:`parallel_map`, which keeps results in input order.  The pool size
is capped by the ``ATTRIBMKT_THREADS`` environment variable.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, List, Sequence

import numpy as np

from . import design, hetero, pricing, rotation, simulate, welfare
from .config import ExperimentConfig, serialize_config
from .demand import FactorStructure, Preferences
from .io import GridResult, emit_csv, emit_svg, heatmap_svg, write_rows

__all__ = [
    "worker_count",
    "parallel_map",
    "welfare_grid_c_phi",
    "welfare_grid_b_gamma",
    "rho_grid",
    "run_experiment",
    "RUNNERS",
]


def worker_count() -> int:
    cap = os.environ.get("ATTRIBMKT_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"ATTRIBMKT_THREADS must be an integer, got {cap!r}")
    return n


def parallel_map(fn: Callable, items: Sequence, workers: int = None) -> List:
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


# ---------------------------------------------------------------- welfare


def _welfare_task(args):
    taste, c, phi, n, rule = args
    try:
        cell = welfare.welfare_cell(taste, c, phi, n, rule)
        return (cell.t_monopoly, cell.t_competition, cell.cs_monopoly, cell.cs_competition, "")
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        nan = float("nan")
        return (nan, nan, nan, nan, f"B={taste} c={c} phi={phi}: {exc}")


WELFARE_OUTPUTS = ("t_monopoly", "t_competition", "cs_monopoly", "cs_competition")


def _welfare_grid(names, axes, tasks) -> GridResult:
    shape = (len(axes[0]), len(axes[1]))
    results = parallel_map(_welfare_task, tasks)
    outputs = {k: np.empty(shape) for k in WELFARE_OUTPUTS}
    failures = []
    for idx, res in enumerate(results):
        i, j = divmod(idx, shape[1])
        for k, name in enumerate(WELFARE_OUTPUTS):
            outputs[name][i, j] = res[k]
        if res[4]:
            failures.append(res[4])
    outputs["cs_difference"] = outputs["cs_monopoly"] - outputs["cs_competition"]
    return GridResult(names, axes, outputs, failures)


def welfare_grid_c_phi(c_values, phi_values, taste=1.0, n_goods=3, competition="foc") -> GridResult:
    c_values, phi_values = np.asarray(c_values, float), np.asarray(phi_values, float)
    tasks = [(taste, c, p, n_goods, competition) for c in c_values for p in phi_values]
    return _welfare_grid(("c", "phi"), (c_values, phi_values), tasks)


def welfare_grid_b_gamma(b_values, gamma_values, c=0.5, phi=-1.0, n_goods=3,
                         competition="foc") -> GridResult:
    """Sweep over total taste ``B`` and a common weight ``gamma``; cells use ``B / gamma``."""
    b_values, gamma_values = np.asarray(b_values, float), np.asarray(gamma_values, float)
    tasks = [(b / g, c, phi, n_goods, competition) for b in b_values for g in gamma_values]
    return _welfare_grid(("B", "gamma"), (b_values, gamma_values), tasks)


# ---------------------------------------------------------------- rho*


def _rho_task(args):
    regime, rb, rg, phi, weight, model = args
    params = hetero.ratio_parameters(rb, rg)
    try:
        if regime == "monopoly":
            return hetero.rho_star_monopoly(*params, phi=phi, weight=weight, model=model), ""
        return hetero.rho_star_duopoly(*params, phi=phi, weight=weight), ""
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return float("nan"), f"{regime} b_ratio={rb} gamma_ratio={rg}: {exc}"


def rho_grid(b_ratios, gamma_ratios, regime="monopoly", phi=-1.0, weight=0.5,
             model="aggregate") -> GridResult:
    b_ratios, gamma_ratios = np.asarray(b_ratios, float), np.asarray(gamma_ratios, float)
    tasks = [(regime, rb, rg, phi, weight, model) for rb in b_ratios for rg in gamma_ratios]
    results = parallel_map(_rho_task, tasks)
    cells = np.array([r[0] for r in results]).reshape(len(b_ratios), len(gamma_ratios))
    failures = [r[1] for r in results if r[1]]
    return GridResult(("b_ratio", "gamma_ratio"), (b_ratios, gamma_ratios),
                      {"rho_star": cells}, failures)


# ---------------------------------------------------------------- runners


def _as_matrix(rows) -> np.ndarray:
    return np.array(rows, dtype=float)


def _run_price_eq(cfg: ExperimentConfig, out: Path, seed: int, svg: bool) -> List[Path]:
    p = cfg.parameters
    fs = FactorStructure(_as_matrix(p["loadings"]), np.array(p["weights"]), p["baseline"])
    noise = np.array(p["noise"]) if p["noise"] else None
    prefs = Preferences(np.array(p["b"]), p["phi"], noise=noise)
    rows = []
    solvers = [("monopoly", lambda: pricing.monopoly_equilibrium(fs, prefs)),
               ("closed_form", lambda: pricing.single_product_equilibrium(fs, prefs)),
               ("iterative", lambda: pricing.iterative_bertrand(fs, prefs))]
    for name, solve in solvers:
        try:
            eq = solve()
        except pricing.NonViableError:
            continue
        surplus = pricing.consumer_surplus(fs, prefs, eq.prices, eq.active)
        for n in range(fs.n_goods):
            rows.append([name, n, eq.prices[n], eq.quantities[n], eq.profits[n],
                         n in eq.active, eq.flagged, surplus])
    return [write_rows(out / "price_equilibrium.csv",
                       ["regime", "good", "price", "quantity", "profit", "active", "flagged",
                        "consumer_surplus"], rows)]


def _run_design_monopoly(cfg, out, seed, svg):
    p = cfg.parameters
    b, g = np.array(p["b"]), np.array(p["gamma"])
    sol = design.monopoly_design(b, g, p["c"], p["phi"])
    rule = design.orientation_rule(b, g)
    rows = [[k, sol.orientation[k], rule[k], sol.loadings[k]] for k in range(b.size)]
    files = [write_rows(out / "monopoly_design.csv",
                        ["attribute", "orientation", "orientation_rule", "loading"], rows)]
    files.append(write_rows(out / "monopoly_summary.csv",
                            ["effective_taste", "intensity", "net_profit"],
                            [[design.effective_taste(b, g), sol.intensity, sol.net_profit]]))
    return files


def _run_design_competition(cfg, out, seed, svg):
    p = cfg.parameters
    b, g, c, phi = np.array(p["b"]), np.array(p["gamma"]), p["c"], p["phi"]
    rows = []
    for n in range(1, p["max_firms"] + 1):
        rows.append([n, design.symmetric_intensity(b, g, c, phi, n),
                     design.symmetric_nash_intensity(b, g, c, phi, n),
                     design.monopoly_intensity(b, g, c, phi)])
    files = [write_rows(out / "symmetric_intensity.csv",
                        ["n_firms", "t_symmetric_foc", "t_nash", "t_monopoly"], rows)]
    owners = tuple(int(o) for o in p["owners"]) if p["owners"] else tuple(range(b.size))
    part = design.ExclusivityPartition(owners, max(owners) + 1)
    designs, eq = design.exclusivity_equilibrium(part, b, g, c, phi)
    ex_rows = [[n, d.intensity, d.net_profit, eq.prices[n], eq.quantities[n]]
               for n, d in enumerate(designs)]
    files.append(write_rows(out / "exclusivity.csv",
                            ["firm", "intensity", "net_profit", "price", "quantity"], ex_rows))
    return files


def _sim_task(args):
    cfg, record_every = args
    return simulate.run_best_response(cfg, record_every)


def sim_config_from(cfg: ExperimentConfig, seed: int) -> simulate.SimConfig:
    p = cfg.parameters
    if p["cost_matrix"]:
        cost = _as_matrix(p["cost_matrix"])
    elif len(p["cost"]) == 1:
        cost = p["cost"][0]
    else:
        cost = tuple(p["cost"])
    return simulate.SimConfig(
        n_firms=p["n_firms"], n_attrs=p["n_attrs"], b=p["b"], gamma=p["gamma"], phi=p["phi"],
        cost=cost, fd_step=p["fd_step"], ascent_rate=p["ascent_rate"],
        ascent_steps_per_firm=p["ascent_steps_per_firm"], max_rounds=p["max_rounds"],
        design_tol=p["design_tol"], seed=seed, init_scale=p["init_scale"])


def _run_br_sim(cfg, out, seed, svg):
    p = cfg.parameters
    configs = [sim_config_from(cfg, seed + k) for k in range(p["n_seeds"])]
    results = parallel_map(_sim_task, [(c, p["record_every"]) for c in configs])
    files = []
    summary = []
    for sc, res in zip(configs, results):
        traj = []
        for snap in res.trajectory:
            for n in range(sc.n_firms):
                for k in range(sc.n_attrs):
                    traj.append([snap.round, n, k, snap.design[n, k], snap.profits[n],
                                 n in snap.active])
        files.append(write_rows(out / f"trajectory_seed{sc.seed}.csv",
                                ["round", "firm", "attr", "value", "profit", "active"], traj))
        final = [[n, res.alignment[n], res.alignment_exact[n], res.intensities[n], n in res.active]
                 for n in range(sc.n_firms)]
        files.append(write_rows(out / f"final_seed{sc.seed}.csv",
                                ["firm", "alignment_rule", "alignment_exact", "intensity", "active"],
                                final))
        summary.append([sc.seed, res.converged, res.rounds, res.last_delta, len(res.active)])
        if svg:
            scaled = np.abs(res.final_S) * np.sqrt(np.array(sc.gamma))
            text = heatmap_svg(scaled, list(range(sc.n_firms)), list(range(sc.n_attrs)),
                               f"scaled loadings, seed {sc.seed}", "firm", "attribute")
            path = out / f"design_seed{sc.seed}.svg"
            path.write_text(text, encoding="utf-8")
            files.append(path)
    files.append(write_rows(out / "br_summary.csv",
                            ["seed", "converged", "rounds", "last_delta", "n_active"], summary))
    return files


def _run_welfare_grid(cfg, out, seed, svg):
    p = cfg.parameters
    files = []
    grids = []
    if p["grid"] in ("both", "c-phi"):
        cs = np.linspace(p["c_min"], p["c_max"], p["c_points"])
        phis = np.linspace(p["phi_min"], p["phi_max"], p["phi_points"])
        grids.append(("welfare_c_phi", welfare_grid_c_phi(cs, phis, p["taste"], p["n_goods"],
                                                          p["competition"])))
    if p["grid"] in ("both", "b-gamma"):
        bs = np.geomspace(p["b_min"], p["b_max"], p["b_points"])
        gs = np.geomspace(p["gamma_min"], p["gamma_max"], p["gamma_points"])
        grids.append(("welfare_b_gamma", welfare_grid_b_gamma(bs, gs, p["c_fixed"], p["phi_fixed"],
                                                              p["n_goods"], p["competition"])))
    for name, grid in grids:
        files.append(emit_csv(grid, out / f"{name}.csv"))
        if svg:
            for output in ("cs_difference", "t_monopoly", "t_competition"):
                files.append(emit_svg(grid, output, out / f"{name}_{output}.svg"))
        if grid.failures:
            files.append(write_rows(out / f"{name}_failures.csv", ["failure"],
                                    [[f] for f in grid.failures]))
    return files


def _run_rho_grid(cfg, out, seed, svg):
    p = cfg.parameters
    rbs = np.geomspace(p["b_ratio_min"], p["b_ratio_max"], p["b_ratio_points"])
    rgs = np.geomspace(p["gamma_ratio_min"], p["gamma_ratio_max"], p["gamma_ratio_points"])
    regimes = ("monopoly", "duopoly") if p["regimes"] == "both" else (p["regimes"],)
    files = []
    for regime in regimes:
        grid = rho_grid(rbs, rgs, regime, p["phi"], p["weight"], p["model"])
        files.append(emit_csv(grid, out / f"rho_{regime}.csv"))
        if svg:
            files.append(emit_svg(grid, "rho_star", out / f"rho_{regime}.svg",
                                  f"rho* ({regime})", 0.0, 1.0))
    return files


def _run_rotation_demo(cfg, out, seed, svg):
    p = cfg.parameters
    gamma = np.array(p["gamma"])
    k = gamma.size
    n = p["n_goods"]
    if n < k or k < 2:
        raise ValueError("rotation demo needs n_goods >= len(gamma) >= 2")
    rng = np.random.default_rng(seed)
    weights = rotation.ShrinkageWeights.from_gamma(gamma)
    z, _ = np.linalg.qr(rng.normal(size=(n, k)))
    rows = []
    for trial in range(p["trials"]):
        p_idx, q_idx = sorted(rng.choice(k, size=2, replace=False).tolist())
        theta = float(rng.uniform(-0.5 * math.pi, 0.5 * math.pi))
        u = rotation.givens(p_idx, q_idx, -theta, k)
        s_theta = z @ u
        v = rng.normal(size=n)
        h = rotation.minv_apply(weights.alphas, s_theta, v)
        h = h + p["noise"] * rng.normal(size=n)
        v2 = np.array([z[:, p_idx] @ v, z[:, q_idx] @ v])
        h2 = np.array([z[:, p_idx] @ h, z[:, q_idx] @ h])
        betas = weights.betas
        rec = rotation.recover_angle(v2, h2, betas[p_idx], betas[q_idx])
        rows.append([trial, p_idx, q_idx, theta, rec.theta, rec.residual])
    return [write_rows(out / "rotation_recovery.csv",
                       ["trial", "p", "q", "theta_true", "theta_recovered", "residual"], rows)]


RUNNERS = {
    "price-eq": _run_price_eq,
    "design-monopoly": _run_design_monopoly,
    "design-competition": _run_design_competition,
    "br-sim": _run_br_sim,
    "welfare-grid": _run_welfare_grid,
    "rho-grid": _run_rho_grid,
    "rotation-demo": _run_rotation_demo,
}


def run_experiment(cfg: ExperimentConfig, out_dir=None, seed: int = 0, svg: bool = None) -> List[Path]:
    """Run ``cfg`` and write its outputs plus an echo of the full config."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    svg = cfg.emit_svg if svg is None else svg
    files = RUNNERS[cfg.kind](cfg, out, seed, svg)
    echo = out / "config.ini"
    echo.write_text(serialize_config(cfg) + f"\n# seed = {seed}\n", encoding="utf-8")
    return list(files) + [echo]
