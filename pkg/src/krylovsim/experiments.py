"""Experiment drivers behind the command line: basis census, access depths,
operator-size maps, layer and Pauli synthesis sweeps, and the XXZ study.

Every command writes into its own directory under ``out`` together with a
``manifest.json`` recording the full configuration, seed, tool version,
timestamps and SHA-256 digests of inputs and outputs.  Data files are
written atomically (temp file then rename).
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__
from .grape import GrapeConfig, SynthesisCurve, target_unitary, warm_start_sweep
from .krylov import (
    BlockKrylovBasis,
    NotContainedError,
    access_depth,
    build_basis,
    complexity_profile,
    load_basis,
    s_min_map,
    sample_from_block,
    save_basis,
    universality_check,
)
from .models import ModelSpec, build_native_set, build_target, enumerate_lowweight_set, single_pauli
from .pauli import to_dense
from .svg import Figure

logger = logging.getLogger(__name__)

DEFAULT_SCHEDULE = [1, 2, 4, 8, 12, 16, 24, 32, 48, 64, 96, 128, 192, 256, 300]

DEFAULTS = {
    "model": "ising",
    "L": 4,
    "seed": 0,
    "jobs": 1,
    "rank_tol": 1e-10,
    "ortho_tol": 1e-8,
    "containment_tol": 1e-8,
    "max_depth": 256,
    "schedule": DEFAULT_SCHEDULE,
    "layers": None,
    "samples": 5,
    "delta": 1.5,
    "sweep_L": None,
    "stop_at_threshold": True,
    "grape": {f.name: f.default for f in fields(GrapeConfig)},
}


class ExperimentError(Exception):
    """Raised for bad input; the CLI maps it to exit code 2."""


def merge_config(base: dict, override: dict) -> dict:
    """Recursive dict merge; ``None`` values in ``override`` are ignored."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if v is None:
            continue
        if k not in base:
            raise ExperimentError(f"unknown config key {k!r}")
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ExperimentError(f"config key {k!r} must be an object")
            out[k] = merge_config(base[k], v)
        else:
            out[k] = v
    return out


def grape_config(cfg: dict) -> GrapeConfig:
    g = dict(cfg["grape"])
    g.setdefault("seed", cfg["seed"])
    try:
        return GrapeConfig(**g)
    except (TypeError, ValueError) as exc:
        raise ExperimentError(f"bad grape config: {exc}") from exc


def model_spec(cfg: dict, L: int | None = None) -> ModelSpec:
    try:
        return ModelSpec.parse(cfg["model"], cfg["L"] if L is None else L)
    except ValueError as exc:
        raise ExperimentError(str(exc)) from exc


# -- file plumbing ----------------------------------------------------------

def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path: Path, data: str | bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path: Path, header: list[str], rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else _cell(v) for v in r])
    return atomic_write(path, buf.getvalue())


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


@dataclass
class Run:
    """One command invocation: output directory plus manifest bookkeeping."""

    command: str
    cfg: dict
    out: Path

    def __post_init__(self):
        self.out = Path(self.out) / self.command
        self.out.mkdir(parents=True, exist_ok=True)
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        self.inputs: dict[str, str] = {}
        self.outputs: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def add_input(self, path: Path):
        path = Path(path)
        if path.is_dir():
            for f in sorted(path.iterdir()):
                if f.is_file():
                    self.inputs[str(f)] = sha256_file(f)
        else:
            self.inputs[str(path)] = sha256_file(path)

    def finish(self, summary: dict) -> Path:
        outputs = {}
        for p in self.outputs:
            if p.is_dir():
                for f in sorted(p.iterdir()):
                    if f.is_file():
                        outputs[str(f.relative_to(self.out))] = sha256_file(f)
            elif p.exists():
                outputs[p.name] = sha256_file(p)
        manifest = {
            "command": self.command,
            "config": self.cfg,
            "seed": self.cfg["seed"],
            "version": __version__,
            "started": self.started,
            "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "inputs": self.inputs,
            "outputs": outputs,
            "summary": summary,
        }
        return atomic_write(self.out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True, default=_json) + "\n")


def _json(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


# -- basis helpers ----------------------------------------------------------

def _basis_kwargs(cfg: dict) -> dict:
    return dict(ortho_tol=cfg["ortho_tol"], rank_tol=cfg["rank_tol"], max_depth=cfg["max_depth"])


def basis_dirname(spec: ModelSpec) -> str:
    return f"{spec.label.replace(':', '_')}_L{spec.L}"


def obtain_basis(cfg: dict, out: Path, spec: ModelSpec | None = None) -> tuple[BlockKrylovBasis, Path]:
    """Load the basis stored under ``out/basis/<model>_L<L>`` or build and save it."""
    spec = spec or model_spec(cfg)
    d = Path(out) / "basis" / basis_dirname(spec)
    meta = d / "meta.json"
    if meta.exists():
        m = json.loads(meta.read_text())
        if (m.get("L"), m.get("model"), m.get("rank_tol"), m.get("ortho_tol")) == (
            spec.L, spec.label, cfg["rank_tol"], cfg["ortho_tol"]
        ) and not m.get("truncated"):
            return load_basis(d), d
    basis = build_basis(build_native_set(spec), **_basis_kwargs(cfg))
    save_basis(basis, d)
    return basis, d


def _parse_range(text: str) -> list[int]:
    try:
        if ".." in text:
            a, b = text.split("..")
            return list(range(int(a), int(b) + 1))
        return [int(x) for x in text.split(",")]
    except ValueError as exc:
        raise ExperimentError(f"bad range {text!r}; expected a..b or a,b,c") from exc


# -- synthesis fan-out ------------------------------------------------------

def _sweep_job(args):
    key, op_dense, natives_dense, schedule, gcfg, tau, stop = args
    target = target_unitary(op_dense, tau)
    curve = warm_start_sweep(target, schedule, gcfg, natives_dense, stop_at_threshold=stop)
    return key, curve.steps, curve.losses


def run_sweeps(jobs: list[tuple], natives_dense, cfg: dict, gcfg: GrapeConfig) -> dict:
    """Synthesis curves for ``(key, operator)`` jobs, keyed and in input order.

    Targets are ``exp(-i A tau)`` for each operator ``A``.  Jobs fan out
    over ``cfg["jobs"]`` worker processes; results do not depend on
    completion order.
    """
    schedule = list(cfg["schedule"])
    if cfg["stop_at_threshold"] and gcfg.stop_below is None:
        # n_c is unchanged: no earlier step count went below the threshold
        gcfg = replace(gcfg, stop_below=gcfg.threshold)
    work = [
        (key, to_dense(op), natives_dense, schedule, gcfg, gcfg.tau, cfg["stop_at_threshold"])
        for key, op in jobs
    ]
    results = {}
    workers = max(1, int(cfg["jobs"]))
    if workers == 1 or len(work) <= 1:
        done = map(_sweep_job, work)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        done = pool.map(_sweep_job, work)
    try:
        for key, steps, losses in done:
            c = SynthesisCurve(steps=list(steps), losses=list(losses), threshold=gcfg.threshold)
            results[key] = c
            logger.info("%s: n_c=%s (%d steps run)", key, c.n_c, len(steps))
    finally:
        if workers > 1 and len(work) > 1:
            pool.shutdown()
    return results


# -- commands -----------------------------------------------------------------

@dataclass(frozen=True)
class FitResult:
    gamma: float
    intercept: float
    residual: float
    points: int


def fit_exponential(J, n_c) -> FitResult | None:
    """Least-squares fit ``ln n_c = gamma J + b``; ``None`` with fewer than 3 points."""
    J = np.asarray(J, dtype=float)
    y = np.log(np.asarray(n_c, dtype=float))
    if J.size < 3:
        return None
    (gamma, b), res, *_ = np.polyfit(J, y, 1, full=True)
    return FitResult(float(gamma), float(b), float(res[0]) if res.size else 0.0, int(J.size))


def cmd_basis(cfg: dict, out: Path, echo=print) -> int:
    summary = {}
    if cfg["sweep_L"]:
        run = Run("basis-sweep", cfg, out)
        Ls = _parse_range(cfg["sweep_L"])
        rows = []
        for L in Ls:
            row = [L]
            for kind in ("ising", "heisenberg"):
                spec = ModelSpec(L, kind)
                b = build_basis(build_native_set(spec), **_basis_kwargs(cfg))
                if b.truncated:
                    echo(f"error: {kind} L={L} basis truncated at max_depth={cfg['max_depth']}")
                    return 1
                ok, dim = universality_check(b)
                row += [b.M, dim, ok]
                echo(f"L={L} {kind:10s} M={b.M:3d} dim={dim} universal={ok}")
            rows.append(row)
        write_csv(
            run.path("depth_vs_L.csv"),
            ["L", "M_ising", "dim_ising", "universal_ising", "M_heisenberg", "dim_heisenberg", "universal_heisenberg"],
            rows,
        )
        fig = Figure("Krylov depth versus system size", "L", "M")
        fig.add([r[0] for r in rows], [r[1] for r in rows], "Ising")
        fig.add([r[0] for r in rows], [r[4] for r in rows], "Heisenberg")
        fig.save(run.path("depth_vs_L.svg"))
        summary["sweep"] = rows
        run.finish(summary)
        return 0

    run = Run("basis", cfg, out)
    spec = model_spec(cfg)
    basis = build_basis(build_native_set(spec), **_basis_kwargs(cfg))
    d = run.path(basis_dirname(spec))
    save_basis(basis, d)
    if basis.truncated:
        echo(f"error: basis truncated at max_depth={cfg['max_depth']} (M >= {basis.M})")
        run.finish({"truncated": True, "M": basis.M})
        return 1
    ok, dim = universality_check(basis)
    echo(f"model={spec.label} L={spec.L} M={basis.M} dim={dim}/{4**spec.L - 1}")
    echo("n_J = " + " ".join(str(x) for x in basis.dims))
    echo("universal" if ok else "NOT universal")
    write_csv(run.path("blocks.csv"), ["J", "n_J"], enumerate(basis.dims))
    summary.update(M=basis.M, n_J=basis.dims, dimension=dim, universal=ok, rank_method=basis.rank_method)
    run.finish(summary)
    return 0


def cmd_access(cfg: dict, out: Path, echo=print) -> int:
    run = Run("access", cfg, out)
    basis, bdir = obtain_basis(cfg, out)
    run.add_input(bdir / "meta.json")
    rows = []
    for site in range(basis.n_qubits):
        for axis in "XYZ":
            op = single_pauli(basis.n_qubits, axis, site)
            flag = ""
            try:
                jc = access_depth(basis, op, cfg["containment_tol"], "containment")
            except NotContainedError as exc:
                jc, flag = None, f"not contained (residual {exc.residual:.3g})"
            try:
                jo = access_depth(basis, op, cfg["containment_tol"], "overlap")
            except NotContainedError:
                jo = None
            rows.append([site, axis, jc, jo, flag])
    write_csv(run.path("access.csv"), ["site", "axis", "J_containment", "J_first_overlap", "flag"], rows)
    fig = Figure("Access depth of single-site Paulis", "site", "J")
    for axis in "XYZ":
        pts = [(r[0], r[2]) for r in rows if r[1] == axis and r[2] is not None]
        fig.add([p[0] for p in pts], [p[1] for p in pts], axis)
    fig.save(run.path("access.svg"))
    for r in rows:
        echo(f"site {r[0]} {r[1]}: containment J={r[2]} overlap J={r[3]} {r[4]}".rstrip())
    run.finish({"M": basis.M, "max_depth": max((r[2] for r in rows if r[2] is not None), default=None)})
    return 0


def cmd_smin(cfg: dict, out: Path, echo=print) -> int:
    run = Run("smin", cfg, out)
    basis, bdir = obtain_basis(cfg, out)
    run.add_input(bdir / "meta.json")
    smap = s_min_map(basis)
    write_csv(run.path("smin.csv"), ["J", "m", "S_min"], smap.rows())
    write_csv(run.path("smin_frontier.csv"), ["S_min", "first_J"], smap.frontier.items())
    fig = Figure("Minimum operator size per basis vector", "J", "m")
    by_s: dict[int, list] = {}
    for J, m, s in smap.rows():
        by_s.setdefault(s, []).append((J, m))
    for s in sorted(by_s):
        pts = by_s[s]
        fig.add([p[0] for p in pts], [p[1] for p in pts], f"S_min={s}", kind="scatter")
    fig.save(run.path("smin.svg"))
    for s, J in smap.frontier.items():
        echo(f"S_min={s} first appears at J={J}")
    run.finish({"frontier": smap.frontier})
    return 0


def _aggregate_nc(curves: dict, keys, n_max: int):
    ncs = [curves[k].n_c for k in keys]
    ok = [n for n in ncs if n is not None]
    cens = len(ncs) - len(ok)
    mean = float(np.mean(ok)) if ok else None
    std = float(np.std(ok)) if ok else None
    return ok, cens, mean, std


def seed_for(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def cmd_layer_sweep(cfg: dict, out: Path, echo=print) -> int:
    run = Run("layer-sweep", cfg, out)
    basis, bdir = obtain_basis(cfg, out)
    run.add_input(bdir / "meta.json")
    gcfg = grape_config(cfg)
    layers = cfg["layers"]
    if layers is None:
        layers = list(range(min(5, basis.M)))
    elif isinstance(layers, str):
        layers = _parse_range(layers)
    if any(not 0 <= J < basis.M for J in layers):
        raise ExperimentError(f"layers must lie in [0, {basis.M})")
    if cfg["samples"] < 1:
        raise ExperimentError("samples must be >= 1")
    jobs = [
        ((J, k), sample_from_block(basis, J, seed_for(cfg["seed"], J, k)))
        for J in layers
        for k in range(cfg["samples"])
    ]
    curves = run_sweeps(jobs, basis.natives.dense(), cfg, gcfg)
    n_max = max(cfg["schedule"])
    write_csv(
        run.path("layer_curves.csv"),
        ["J", "sample", "n", "loss"],
        ([J, k, n, l] for (J, k), c in curves.items() for n, l in c.rows()),
    )
    agg_rows, fit_J, fit_n = [], [], []
    for J in layers:
        keys = [(J, k) for k in range(cfg["samples"])]
        ok, cens, mean, std = _aggregate_nc(curves, keys, n_max)
        flag = f"{cens} censored at n>{n_max}" if cens else ""
        agg_rows.append([J, len(keys), len(ok), cens, mean, std, flag])
        if ok and cens <= len(keys) / 2:
            fit_J.append(J)
            fit_n.append(mean)
        elif ok or cens:
            logger.warning("layer %d dropped from fit (%d of %d censored)", J, cens, len(keys))
    write_csv(
        run.path("layer_nc.csv"),
        ["J", "samples", "uncensored", "censored", "mean_n_c", "std_n_c", "flag"],
        agg_rows,
    )
    fit = fit_exponential(fit_J, fit_n)
    write_csv(
        run.path("layer_fit.csv"),
        ["gamma", "intercept", "residual", "points"],
        [[fit.gamma, fit.intercept, fit.residual, fit.points]] if fit else [],
    )
    means = [r[4] for r in agg_rows if r[4] is not None]
    if any(b < a for a, b in zip(means, means[1:])):
        logger.warning("mean n_c is not non-decreasing in J")
    fa = Figure("Loss versus control steps", "n", "loss", logx=True, logy=True)
    for (J, k), c in curves.items():
        if k == 0:
            fa.add(c.steps, c.losses, f"J={J}")
    fa.save(run.path("layer_curves.svg"))
    fb = Figure("Critical steps versus Krylov depth", "J", "n_c", logy=True)
    pts = [(r[0], r[4], r[5]) for r in agg_rows if r[4] is not None]
    fb.add([p[0] for p in pts], [p[1] for p in pts], "mean n_c", kind="scatter", yerr=[p[2] for p in pts])
    if fit:
        xs = [min(fit_J), max(fit_J)]
        fb.add(xs, [math.exp(fit.intercept + fit.gamma * x) for x in xs], f"gamma={fit.gamma:.3f}", dashed=True)
    fb.save(run.path("layer_nc.svg"))
    for r in agg_rows:
        echo(f"J={r[0]} n_c mean={r[4]} std={r[5]} censored={r[3]}/{r[1]}")
    echo(f"gamma={fit.gamma:.4f}" if fit else "gamma: fewer than 3 uncensored layers")
    run.finish({
        "layers": agg_rows,
        "fit": None if fit is None else fit.__dict__,
        "grape_config_digest": gcfg.digest(),
    })
    return 0


def spearman_censored(K, n_c, n_max: int) -> tuple[float, float]:
    """Spearman correlation with censored ``n_c`` (``None``) ranked above ``n_max``.

    Right-censored values exceed every observed one, so their ranks are
    known up to ties among themselves.  Returns ``(rho_all, rho_uncensored)``.
    """
    y = np.array([n_max + 1 if v is None else v for v in n_c], dtype=float)
    rho_all = float(stats.spearmanr(K, y).statistic)
    mask = np.array([v is not None for v in n_c])
    rho_unc = float(stats.spearmanr(np.asarray(K)[mask], y[mask]).statistic) if mask.sum() >= 3 else float("nan")
    return rho_all, rho_unc


def cmd_pauli_sweep(cfg: dict, out: Path, echo=print) -> int:
    run = Run("pauli-sweep", cfg, out)
    spec = model_spec(cfg)
    basis, bdir = obtain_basis(cfg, out, spec)
    run.add_input(bdir / "meta.json")
    gcfg = grape_config(cfg)
    targets = enumerate_lowweight_set(spec)
    curves = run_sweeps(targets, basis.natives.dense(), cfg, gcfg)
    n_max = max(cfg["schedule"])
    rows, Ks, ncs = [], [], []
    for name, op in targets:
        prof = complexity_profile(basis, op)
        c = curves[name]
        Ks.append(prof.K)
        ncs.append(c.n_c)
        rows.append([name, prof.K, c.n_c, c.n_c is None, c.losses[-1], "censored" if c.n_c is None else ""])
    rho, rho_unc = spearman_censored(Ks, ncs, n_max)
    frac = sum(v is not None for v in ncs) / len(ncs)
    write_csv(run.path("pauli.csv"), ["target", "K", "n_c", "censored", "final_loss", "flag"], rows)
    write_csv(
        run.path("pauli_curves.csv"),
        ["target", "n", "loss"],
        ([name, n, l] for name, _ in targets for n, l in curves[name].rows()),
    )
    fig = Figure("Critical steps versus Krylov complexity", "K", "n_c", logx=True, logy=True)
    unc = [(k, n) for k, n in zip(Ks, ncs) if n is not None]
    cen = [(k, n_max) for k, n in zip(Ks, ncs) if n is None]
    fig.add([p[0] for p in unc], [p[1] for p in unc], "n_c", kind="scatter")
    if cen:
        fig.add([p[0] for p in cen], [p[1] for p in cen], f"censored (> {n_max})", kind="scatter")
    fig.save(run.path("pauli.svg"))
    for r in rows:
        echo(f"{r[0]:6s} K={r[1]:9.3f} n_c={r[2]} {r[5]}".rstrip())
    echo(f"spearman rho={rho:.4f} (uncensored only {rho_unc:.4f}); uncensored fraction {frac:.2f}")
    run.finish({"spearman_rho": rho, "spearman_rho_uncensored": rho_unc, "uncensored_fraction": frac,
                "grape_config_digest": gcfg.digest()})
    return 0


def cmd_xxz(cfg: dict, out: Path, echo=print) -> int:
    run = Run("xxz", cfg, out)
    spec = model_spec(cfg)
    delta = float(cfg["delta"])
    if not math.isfinite(delta):
        raise ExperimentError("delta must be finite")
    basis, bdir = obtain_basis(cfg, out, spec)
    run.add_input(bdir / "meta.json")
    gcfg = grape_config(cfg)
    target = build_target(f"xxz:{delta!r}", spec)
    prof = complexity_profile(basis, target)
    n_max = max(cfg["schedule"])
    j_star = int(math.floor(math.log2(n_max)))
    write_csv(
        run.path("xxz_residual.csv"),
        ["J", "P_J", "R_J"],
        ([J, p, r] for J, (p, r) in enumerate(zip(prof.P, prof.R))),
    )
    sub = dict(cfg, stop_at_threshold=False)
    curves = run_sweeps([("xxz", target)], basis.natives.dense(), sub, gcfg)
    curve = curves["xxz"]
    write_csv(run.path("xxz_curve.csv"), ["n", "loss"], curve.rows())
    fa = Figure(f"XXZ synthesis on the {spec.label} simulator", "n", "loss", logx=True, logy=True)
    fa.add(curve.steps, [max(l, 1e-16) for l in curve.losses], f"delta={delta:g}")
    fa.save(run.path("xxz_loss.svg"))
    fb = Figure("Residual weight beyond depth J", "J", "R_J", logy=True)
    fb.add(list(range(basis.M)), [max(r, 1e-16) for r in prof.R], "R_J", kind="step")
    fb.vlines.append((j_star, f"J*={j_star}"))
    fb.save(run.path("xxz_residual.svg"))
    echo(f"P_0={prof.P[0]:.6f} K={prof.K:.4f} out_of_span={prof.out_of_span:.3g} J*={j_star}")
    echo(f"n_c={curve.n_c} final loss={curve.losses[-1]:.3e}")
    run.finish({"K": prof.K, "P_0": prof.P[0], "J_star": j_star, "n_c": curve.n_c,
                "grape_config_digest": gcfg.digest()})
    return 0
