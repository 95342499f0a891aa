"""Command-line driver: ``s00lab {run,list,validate}``.

Configs are JSON objects; ``--set key=value`` overrides win over the file.
Every run writes ``results.csv`` (first column ``config_hash``) and
``manifest.json`` into ``<output root>/<experiment>-<hash>/``. The output
root is ``output_dir`` from the config, else ``$S00LAB_OUTPUT_ROOT``, else
``./runs``.

Seeding: the generator of a run is ``numpy.random.default_rng(
SeedSequence([seed, crc32(experiment_id)]))``; the embedding check
derives its own per-embedding streams from ``seed``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import platform
import sys
import time
import zlib
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Callable

import numpy as np
import scipy

from . import __version__
from .errors import LabError, ParameterError
from .lattice import GridSpec, random_band_limited, save_field
from .norms import (EMBEDDINGS, ExponentTuple, as_exponent, bmo_norm, check_embedding, local_hardy_norm,
                    lp_norm, norm_row, weak_lp_norm, wiener_amalgam_norm)

OUTPUT_ENV = "S00LAB_OUTPUT_ROOT"


@dataclass(frozen=True)
class Experiment:
    id: str
    module: str
    description: str
    anchor: str


EXPERIMENTS = {e.id: e for e in [
    Experiment("norm", "function-norms", "quasinorms of a random band-limited field",
               "amalgam, local Hardy and bmo quasinorms"),
    Experiment("operator-apply", "multilinear-op", "apply a bracket multiplier by all available routes",
               "multilinear operator defined by a frequency integral"),
    Experiment("decompose-check", "symbol-kit", "decomposition error against direct quadrature as k-range grows",
               "unit-cube Fourier expansion of the symbol"),
    Experiment("embedding-check", "function-norms", "bounded-ratio test for amalgam embeddings",
               "inclusions between L^p, h^p, bmo and amalgam spaces"),
    Experiment("hilbert-constant", "sharpness-lab", "best constants of discrete Hilbert-type inequalities",
               "weighted lattice convolution and Hilbert-type kernel bounds"),
    Experiment("critical-exponent", "sharpness-lab", "critical order of the symbol class for an exponent tuple",
               "boundedness threshold on products of local Hardy spaces"),
    Experiment("case1", "sharpness-lab", "random-sign lattice family, growth of the square function",
               "Rademacher average over unit-cube multipliers"),
    Experiment("case3", "sharpness-lab", "dyadic annulus family, growth of operator ratios",
               "dyadic multiplier with annular inputs"),
    Experiment("threshold-scan", "sharpness-lab", "growth slopes around the critical order for many tuples",
               "phase table around the threshold"),
    Experiment("master-estimate-probe", "multilinear-op", "two sides of the amalgam estimate over random inputs",
               "amalgam estimate through the families h_mu"),
]}


@dataclass
class RunConfig:
    experiment: str
    n: int = 1
    N: int = 2
    points: int = 128
    scale: float = 4.0
    band: float = 4.0
    p: object = None
    p_list: list | None = None
    m: object = None
    m_list: list | None = None
    L: int = 4
    M: int = 4
    K: int = 8
    K_list: list | None = None
    nu_radius: int = 5
    ell_range: int = 4
    seed: int = 0
    trials: int | None = None
    norm_id: str = "amalgam"
    q: object = 2
    s: float = 0.0
    embedding: str = "W-W"
    radii: list | None = None
    r: object = None
    a_list: list | None = None
    A_list: list | None = None
    L_offset: int | None = None
    k_list: list | None = None
    eps: float = 0.0
    p_grid: list | None = None
    m_offsets: list | None = None
    output_dir: str | None = None

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ParameterError(f"unknown config key(s): {', '.join(unknown)}")
        if "experiment" not in data:
            raise ParameterError("config needs an 'experiment' id")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    # -- validation -------------------------------------------------------
    def grid(self) -> GridSpec:
        return GridSpec.with_scale(self.n, self.points, R=self.scale)

    def exps(self) -> ExponentTuple:
        if self.p is None or self.p_list is None:
            raise ParameterError("p and p_list are required")
        as_exponent(self.p, "p")
        for j, q in enumerate(self.p_list):
            as_exponent(q, f"p_{j + 1}")
        return ExponentTuple(self.p, tuple(self.p_list))

    def validate(self) -> None:
        """Raise :class:`ParameterError` naming the first violated constraint."""
        if self.experiment not in EXPERIMENTS:
            raise ParameterError(f"experiment must be one of {sorted(EXPERIMENTS)}; got {self.experiment!r}")
        if not 1 <= self.n <= 3:
            raise ParameterError("n ∈ {1,2,3} violated")
        if self.N < 1:
            raise ParameterError("N ≥ 1 violated")
        if self.p is not None:
            as_exponent(self.p, "p")
        if self.p_list is not None:
            if len(self.p_list) != self.N:
                raise ParameterError("len(p_list) = N violated")
            for j, q in enumerate(self.p_list):
                as_exponent(q, f"p_{j + 1}")
        e = self.experiment
        if e in ("norm", "operator-apply", "decompose-check", "master-estimate-probe"):
            self.grid()
            if not 0 < self.band < self.grid().max_frequency:
                raise ParameterError("0 < band < grid max frequency violated")
        if e == "norm":
            if self.norm_id not in NORMS:
                raise ParameterError(f"norm_id ∈ {sorted(NORMS)} violated")
            if self.p is None:
                raise ParameterError("p is required for the norm experiment")
        if e in ("critical-exponent", "case1", "case3"):
            self.exps()
        if e in ("case1", "case3") and self.m is None:
            raise ParameterError("m is required")
        if e == "embedding-check" and self.embedding != "all" and self.embedding not in EMBEDDINGS:
            raise ParameterError(f"embedding ∈ {sorted(EMBEDDINGS) + ['all']} violated")
        if e in ("decompose-check", "master-estimate-probe") and (self.L < 1 or self.M < 1):
            raise ParameterError("L ≥ 1 and M ≥ 1 violated")
        if e == "hilbert-constant" and self.r is not None and (self.a_list is None or len(self.a_list) != self.N):
            raise ParameterError("len(a_list) = N violated")
        if self.trials is not None and self.trials < 1:
            raise ParameterError("trials ≥ 1 violated")


def _num(v):
    if v is None:
        return None
    if isinstance(v, str):
        return float(Fraction(v))
    return float(v)


def experiment_rng(cfg: RunConfig) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(cfg.seed), zlib.crc32(cfg.experiment.encode())]))


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "inf" if v == math.inf else repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(str(_fmt(x)) for x in v)
    return v


# -- runners -------------------------------------------------------------------

NORMS = ("lp", "weak_lp", "amalgam", "hardy", "bmo", "local_bmo")


def _run_norm(cfg, out):
    g = cfg.grid()
    rng = experiment_rng(cfg)
    rows = []
    for t in range(cfg.trials or 1):
        f = random_band_limited(g, rng, cfg.band)
        p = as_exponent(cfg.p)
        q = s = None
        tail = False
        if cfg.norm_id == "lp":
            v = lp_norm(f, p)
        elif cfg.norm_id == "weak_lp":
            v = weak_lp_norm(f, p)
        elif cfg.norm_id == "amalgam":
            q, s = as_exponent(cfg.q, "q"), float(cfg.s)
            res = wiener_amalgam_norm(f, p, q, s, full_output=True)
            v, tail = res.value, res.tail_warning
        elif cfg.norm_id == "hardy":
            v = local_hardy_norm(f, p)
        else:
            v = bmo_norm(f, local=cfg.norm_id == "local_bmo")
        row = norm_row(cfg.norm_id, g, v, p, q, s, tail)
        row["trial"] = t
        rows.append(row)
    return rows


def _bracket_symbol(cfg):
    from .symbols import bracket_symbol
    ms = cfg.m_list if cfg.m_list is not None else [-0.5] * cfg.N
    if len(ms) != cfg.N:
        raise ParameterError("len(m_list) = N violated")
    return bracket_symbol(cfg.n, [_num(m) for m in ms])


def _inputs(cfg, rng):
    g = cfg.grid()
    return [random_band_limited(g, rng, cfg.band) for _ in range(cfg.N)]


def _run_operator(cfg, out):
    from .errors import BudgetError
    from .operators import apply_direct, apply_multiplier_fft, apply_via_decomposition
    from .symbols import PartitionSet, decompose
    sigma = _bracket_symbol(cfg)
    fs = _inputs(cfg, experiment_rng(cfg))
    results = {}
    try:
        results["direct_quadrature"] = apply_direct(sigma, fs)
    except BudgetError:
        pass
    results["multiplier_fft"] = apply_multiplier_fft(sigma, fs)
    parts = PartitionSet(cfg.n, cfg.M)
    radius = int(math.ceil(cfg.band)) + 1
    d = decompose(sigma, parts, radius, L=cfg.L, M=cfg.M, K=cfg.K)
    results["decomposition_sum"] = apply_via_decomposition(d, parts, fs)
    ref = results.get("direct_quadrature", results["multiplier_fft"]).output
    rows = []
    reports = {}
    for name, res in results.items():
        save_field(res.output, out / f"output_{name}.csv")
        reports[name] = res.truncation_report
        rows.append({"method": name, "l2_norm": float(np.linalg.norm(res.output.values)),
                     "rel_diff_vs_reference": res.output.l2_distance(ref)})
    (out / "truncation_report.json").write_text(json.dumps(reports, indent=1, sort_keys=True, default=float))
    return rows


def _run_decompose(cfg, out):
    from .operators import apply_direct, apply_via_decomposition
    from .symbols import PartitionSet, decompose
    sigma = _bracket_symbol(cfg)
    fs = _inputs(cfg, experiment_rng(cfg))
    ref = apply_direct(sigma, fs).output
    parts = PartitionSet(cfg.n, cfg.M)
    radius = int(math.ceil(cfg.band)) + 1
    rows, prev = [], None
    for K in cfg.K_list or [4, 8, 16]:
        d = decompose(sigma, parts, radius, L=cfg.L, M=cfg.M, K=int(K))
        res = apply_via_decomposition(d, parts, fs)
        err = float(np.max(np.abs(res.output.values - ref.values)))
        rows.append({"K": int(K), "sup_error": err, "rel_l2_error": res.output.l2_distance(ref),
                     "tail_bound": res.truncation_report["tail_bound"],
                     "reduction_vs_previous": "" if prev is None else prev / err,
                     "parseval_defect": d.parseval_defect, "quad_points": d.quad_points})
        prev = err
    return rows


def _run_embedding(cfg, out):
    ids = sorted(EMBEDDINGS) if cfg.embedding == "all" else [cfg.embedding]
    rows = []
    for eid in ids:
        st = check_embedding(eid, trials=cfg.trials or 100, seed=cfg.seed)
        rows.append({"embedding": eid, "trials": st.trials, "max_ratio": st.max_ratio,
                     "max_ratio_doubled": st.max_ratio_doubled, "min_ratio": st.min_ratio,
                     "skipped": st.skipped, "stable": st.stable})
    return rows


def _run_hilbert(cfg, out):
    from .sharpness import hilbert_sweep
    radii = cfg.radii or [16, 32, 64]
    r = None if cfg.r is None else as_exponent(cfg.r, "r", allow_inf=False)
    a = None if cfg.a_list is None else [_num(x) for x in cfg.a_list]
    ests = hilbert_sweep(radii, N=cfg.N, n=cfg.n, r=r, a_list=a)
    return [{"radius": R, "value": e.value, "residual": e.residual, "iterations": e.iterations}
            for R, e in zip(sorted(radii), ests)]


def _run_critical(cfg, out):
    from .sharpness import critical_exponent, bilinear_closed_form
    from .norms import recip
    ex = cfg.exps()
    val = critical_exponent(cfg.n, ex)
    row = {"n": cfg.n, "N": cfg.N, "p": str(ex.p), "p_list": " ".join(str(q) for q in ex.p_list),
           "value": str(val) if isinstance(val, Fraction) else repr(float(val)),
           "value_float": float(val), "bilinear_formula": ""}
    if ex.N == 2 and recip(ex.p) == ex.inv_p0:
        row["bilinear_formula"] = str(bilinear_closed_form(cfg.n, ex))
    return [row]


def _report_rows(rep, key):
    rows = []
    for s, v in rep.points:
        rows.append({key: s, "value": v, "fitted_slope": rep.fitted_slope,
                     "theory_slope": rep.theory_slope, "residual": rep.residual})
    return rows


def _run_case1(cfg, out):
    from .sharpness import case1_random_sign_experiment
    rep = case1_random_sign_experiment(cfg.n, cfg.N, cfg.exps(), _num(cfg.m), cfg.A_list or [6, 7, 8, 9, 10],
                                       L_offset=cfg.L_offset, trials=cfg.trials or 0, seed=cfg.seed,
                                       a_list=cfg.a_list, eps=float(cfg.eps))
    rows = _report_rows(rep, "A")
    kr = rep.extra["khintchine_ratios"]
    for row in rows:
        row["khintchine_ratio"] = kr.get(row["A"], "")
        row["containment_failures"] = len(rep.extra["containment_failures"].get(row["A"], []))
    return rows


def _run_case3(cfg, out):
    from .sharpness import case3_dyadic_experiment, case3_grid
    ks = cfg.k_list or list(range(2, 9))
    g = case3_grid(cfg.N, max(ks), cfg.points, n=cfg.n)
    rep = case3_dyadic_experiment(cfg.n, cfg.N, cfg.exps(), _num(cfg.m), ks, g)
    return _report_rows(rep, "k")


def _run_scan(cfg, out):
    from .sharpness import SCAN_COLUMNS, threshold_scan
    grid = [(p, tuple(pl)) for p, pl in (cfg.p_grid or [])]
    rows = threshold_scan(cfg.n, cfg.N, grid, [_num(o) for o in (cfg.m_offsets or [-0.5, 0.0, 0.5])],
                          eps=float(cfg.eps), seed=cfg.seed)
    return [{c: r[c] for c in SCAN_COLUMNS} for r in rows]


def _run_probe(cfg, out):
    from .operators import master_estimate_probe
    from .symbols import PartitionSet, decompose
    sigma = _bracket_symbol(cfg)
    parts = PartitionSet(cfg.n, cfg.M)
    d = decompose(sigma, parts, int(math.ceil(cfg.band)) + 1, L=cfg.L, M=cfg.M, K=min(cfg.K, 2))
    rng = experiment_rng(cfg)
    rows = []
    s = cfg.p if cfg.p is not None else 2
    for t in range(cfg.trials or 10):
        pr = master_estimate_probe(d, parts, _inputs(cfg, rng), s, cfg.q)
        rows.append({"trial": t, "left": pr.left, "right": pr.right, "ratio": pr.ratio})
    return rows


RUNNERS: dict[str, Callable] = {
    "norm": _run_norm, "operator-apply": _run_operator, "decompose-check": _run_decompose,
    "embedding-check": _run_embedding, "hilbert-constant": _run_hilbert,
    "critical-exponent": _run_critical, "case1": _run_case1, "case3": _run_case3,
    "threshold-scan": _run_scan, "master-estimate-probe": _run_probe,
}


# -- driver ----------------------------------------------------------------------


def write_rows(rows: list, path: Path, config_hash: str) -> None:
    cols = ["config_hash"]
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n", restval="")
        w.writeheader()
        for r in rows:
            w.writerow({"config_hash": config_hash, **{k: _fmt(v) for k, v in r.items()}})


def output_root(cfg: RunConfig) -> Path:
    return Path(cfg.output_dir or os.environ.get(OUTPUT_ENV) or "runs")


def run(cfg: RunConfig) -> tuple:
    """Execute one experiment; returns ``(exit_status, run_directory)``."""
    cfg.validate()
    h = cfg.hash()
    out = output_root(cfg) / f"{cfg.experiment}-{h}"
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": cfg.to_dict(), "config_hash": h, "seed": cfg.seed,
        "seed_derivation": "SeedSequence([seed, crc32(experiment)])",
        "versions": {"s00lab": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "status": "incomplete", "artifacts": [],
    }
    t0 = time.perf_counter()
    status = 0
    try:
        rows = RUNNERS[cfg.experiment](cfg, out)
        write_rows(rows, out / "results.csv", h)
        manifest["status"] = "complete"
    except LabError as exc:
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        status = 1
    manifest["wall_time_s"] = time.perf_counter() - t0
    manifest["artifacts"] = sorted(p.name for p in out.iterdir() if p.name != "manifest.json")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=str))
    if status:
        print(manifest["error"], file=sys.stderr)
    return status, out


def list_experiments() -> str:
    lines = [f"{e.id:<22} [{e.module}] {e.description} (anchor: {e.anchor})" for e in EXPERIMENTS.values()]
    return "\n".join(lines)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: str | None, overrides: list) -> RunConfig:
    data = {}
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ParameterError(f"config is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ParameterError("config must be a JSON object")
    for item in overrides or []:
        if "=" not in item:
            raise ParameterError(f"override {item!r} must have the form key=value")
        k, v = item.split("=", 1)
        data[k.strip()] = _parse_value(v)
    return RunConfig.from_mapping(data)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="s00lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="print the experiment catalogue")
    for name in ("run", "validate"):
        sp = sub.add_parser(name, help=f"{name} a JSON config")
        sp.add_argument("config", nargs="?", help="JSON config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable; wins over the file)")
        if name == "run":
            sp.add_argument("--out", help="output root (overrides config and environment)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        print(list_experiments())
        return 0
    try:
        cfg = load_config(args.config, args.set)
        if getattr(args, "out", None):
            cfg.output_dir = args.out
        cfg.validate()
    except (LabError, OSError, TypeError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate":
        print(f"ok: {cfg.experiment} (config hash {cfg.hash()})")
        return 0
    status, out = run(cfg)
    if status == 0:
        print(out)
    return status


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
