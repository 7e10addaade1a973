"""Refinement studies and their CSV reports.

Each study builds a sequence of structured meshes, runs the requested
solver or injection arms on every level, and collects metrics into a
single result object.  The CSV layout is versioned: one ``data`` row per
(level, metric) pair, followed by a trailing block of fitted ``rate``
rows.  Wall-clock timings go to a sidecar file so the main report is
bitwise reproducible for a fixed configuration.
"""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field as dc_field, replace

import numpy as np

from .cases import ManufacturedCase, get_case
from .field import Discretization, GlobalField
from .linalg import LinearSystem, cond_interior_estimate, solve_system
from .mesh import (Mesh, Topology, build_structured_tri_mesh, compute_topology,
                   cross2, perturb_interior_nodes)
from .norms import error_norms, max_errors
from .patches import compact_layer_depth, default_layer_depth
from .recon import admissibility_report, build_all_patch_maps
from .smoothness import compute_jumps, fit_rate
from .strong import (METHODS as STRONG_METHODS, ProblemSpec, assemble,
                     boundary_flux_residual, build_discretization)
from .weak import WeakOptions, assemble_galerkin, solve_weak

CSV_SCHEMA = "migfem-study-v1"

STUDY_NAMES = (
    "patch-test",
    "jump-study",
    "elasticity-bench",
    "biharmonic-bench",
    "injection-diag",
    "conditioning",
    "ablation-ba-penalty",
)

# Per-study defaults, applied wherever the config leaves a field empty.
_DEFAULTS: dict[str, dict] = {
    "patch-test": dict(case="poly-elasticity", method="", bc_mode="ba",
                       p=4, levels=(11,)),
    "jump-study": dict(case="trig-jump", method="", bc_mode="",
                       p=4, levels=(11, 21, 41, 81)),
    "elasticity-bench": dict(case="trig-elasticity", method="sd", bc_mode="",
                             p=4, levels=(11, 21, 41, 81)),
    "biharmonic-bench": dict(case="sinsin-biharmonic", method="nc", bc_mode="ba",
                             p=4, levels=(21, 41, 81)),
    "injection-diag": dict(case="sinsin-biharmonic", method="", bc_mode="",
                           p=4, levels=(11, 21, 41, 81)),
    "conditioning": dict(case="trig-elasticity", method="", bc_mode="ba",
                         p=4, levels=(11, 21, 41)),
    "ablation-ba-penalty": dict(case="sinsin-biharmonic", method="nc", bc_mode="",
                                p=4, levels=(21, 41, 81, 161)),
}


@dataclass(frozen=True)
class StudyConfig:
    """Everything a study run depends on.

    Empty-string or zero fields mean "use the study's default".  ``s=0``
    selects the default layer depth for the chosen degree.
    """

    study: str
    case: str = ""
    method: str = ""
    bc_mode: str = ""
    p: int = 0
    s: int = 0
    levels: tuple[int, ...] = ()
    delta: float = 0.0
    seed: int = 0
    out: str = ""

    def to_json(self) -> str:
        d = asdict(self)
        d["levels"] = list(self.levels)
        return json.dumps(d, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "StudyConfig":
        d = json.loads(text)
        if "levels" in d:
            d["levels"] = tuple(int(n) for n in d["levels"])
        return StudyConfig(**d)


def normalize_config(cfg: StudyConfig) -> StudyConfig:
    """Fill study defaults and validate the combination."""
    if cfg.study not in STUDY_NAMES:
        raise ValueError(f"unknown study {cfg.study!r}; choose from {STUDY_NAMES}")
    base = _DEFAULTS[cfg.study]
    case = cfg.case or base["case"]
    p = cfg.p if cfg.p > 0 else base["p"]
    if cfg.s < 0:
        raise ValueError("layer depth must be nonnegative")
    s = cfg.s
    if s == 0:
        s = compact_layer_depth(p) if cfg.study == "jump-study" else default_layer_depth(p)
    levels = tuple(int(n) for n in (cfg.levels or base["levels"]))
    if not levels or any(n < 2 for n in levels):
        raise ValueError("levels must be node counts >= 2")
    method = cfg.method or base["method"]
    bc_mode = cfg.bc_mode or base["bc_mode"]
    if method and method not in STRONG_METHODS + ("wg", "all"):
        raise ValueError(f"unknown method {method!r}")
    op = get_case(case, p=p).operator
    if method == "wg" and op == "biharmonic":
        raise ValueError("the weak-form solver does not cover the fourth-order operator")
    if cfg.delta < 0:
        raise ValueError("perturbation fraction must be nonnegative")
    return replace(cfg, case=case, method=method, bc_mode=bc_mode,
                   p=p, s=s, levels=levels)


@dataclass
class StudyResult:
    config: StudyConfig
    rows: list[tuple[int, int, float, str, float]] = dc_field(default_factory=list)
    rates: list[tuple[str, float]] = dc_field(default_factory=list)
    timings: list[tuple[int, str, float]] = dc_field(default_factory=list)

    def series(self, metric: str) -> np.ndarray:
        return np.array([v for (_, _, _, m, v) in self.rows if m == metric])

    def value(self, level: int, metric: str) -> float:
        for (lvl, _, _, m, v) in self.rows:
            if lvl == level and m == metric:
                return v
        raise KeyError(f"no value for level {level}, metric {metric!r}")

    def rate(self, metric: str) -> float:
        for m, v in self.rates:
            if m == metric:
                return v
        raise KeyError(f"no fitted rate for metric {metric!r}")

    @property
    def hs(self) -> np.ndarray:
        seen: dict[int, float] = {}
        for (lvl, _, h, _, _) in self.rows:
            seen.setdefault(lvl, h)
        return np.array([seen[k] for k in sorted(seen)])


class _Recorder:
    """Accumulates rows and phase timings for one study run."""

    def __init__(self, cfg: StudyConfig):
        self.cfg = cfg
        self.rows: list[tuple[int, int, float, str, float]] = []
        self.rates: list[tuple[str, float]] = []
        self.timings: list[tuple[int, str, float]] = []

    def add(self, level: int, n: int, h: float, metric: str, value) -> None:
        if value is None:
            return
        self.rows.append((level, n, h, metric, float(value)))

    def add_rate(self, metric: str, value: float) -> None:
        self.rates.append((metric, float(value)))

    def fit(self, metric: str, last: int | None = None, name: str | None = None) -> None:
        """Fit log(value) vs log(h) for one metric and record the slope."""
        vals = [v for (_, _, _, m, v) in self.rows if m == metric]
        hs = [h for (_, _, h, m, _) in self.rows if m == metric]
        if len(vals) < 2 or any(v <= 0.0 for v in vals):
            return
        self.add_rate(name or metric, fit_rate(hs, vals, last=last))

    @contextmanager
    def phase(self, level: int, name: str):
        t0 = time.perf_counter()
        yield
        self.timings.append((level, name, time.perf_counter() - t0))

    def result(self) -> StudyResult:
        return StudyResult(config=self.cfg, rows=self.rows,
                           rates=self.rates, timings=self.timings)


def _level_mesh(cfg: StudyConfig, case: ManufacturedCase, n: int
                ) -> tuple[Mesh, Topology, float]:
    box = case.domain_box
    mesh = build_structured_tri_mesh(n, n, box)
    h = (box[1] - box[0]) / (n - 1)
    if cfg.delta > 0.0:
        mesh = perturb_interior_nodes(mesh, cfg.delta, cfg.seed + n)
    return mesh, compute_topology(mesh), h


def min_signed_area(mesh: Mesh) -> float:
    a = mesh.nodes[mesh.triangles[:, 0]]
    b = mesh.nodes[mesh.triangles[:, 1]]
    c = mesh.nodes[mesh.triangles[:, 2]]
    return float(0.5 * cross2(b - a, c - a).min())


def inject_exact(case: ManufacturedCase, disc: Discretization,
                 g: list | None = None) -> GlobalField:
    """Field whose nodal vector is the exact solution sampled at the nodes.

    No solve happens; this isolates the reconstruction and blending error
    from everything the discrete operator adds on top.
    """
    return GlobalField(disc=disc, u=case.u(disc.mesh.nodes), g=g)


def _injected_field(cfg: StudyConfig, case: ManufacturedCase, mesh: Mesh,
                    topo: Topology) -> GlobalField:
    patches, maps = build_all_patch_maps(mesh, topo, cfg.p, depth=cfg.s,
                                         ncomp=case.ncomp)
    disc = Discretization(mesh=mesh, topo=topo, patches=patches, maps=maps,
                          p=cfg.p, ncomp=case.ncomp)
    return inject_exact(case, disc)


def _solve_strong_arm(rec: _Recorder, label: str, level: int, n: int, h: float,
                      mesh: Mesh, topo: Topology, spec: ProblemSpec,
                      method: str, with_norms: bool = True):
    cfg = rec.cfg
    with rec.phase(level, f"{label}_build"):
        disc, g, bsets = build_discretization(mesh, topo, cfg.p, s=cfg.s, spec=spec)
    with rec.phase(level, f"{label}_assemble"):
        system = assemble(method, disc, spec, bsets, g)
    with rec.phase(level, f"{label}_solve"):
        report = solve_system(system)
    nodal = report.u.reshape(disc.ncomp, mesh.n_nodes).T.copy()
    field = GlobalField(disc=disc, u=nodal, g=g)

    rec.add(level, n, h, f"{label}_kappa_diag", report.kappa_diag)
    if bsets.flux_edges.size:
        rms, mx = boundary_flux_residual(field, spec, bsets)
        rec.add(level, n, h, f"{label}_epsbc_rms", rms)
        rec.add(level, n, h, f"{label}_epsbc_max", mx)
    if with_norms:
        with rec.phase(level, f"{label}_norms"):
            rpt = error_norms(field, spec.case)
        rec.add(level, n, h, f"{label}_l2", rpt.l2)
        rec.add(level, n, h, f"{label}_h1", rpt.h1)
        rec.add(level, n, h, f"{label}_energy", rpt.energy)
        rec.add(level, n, h, f"{label}_l2h", rpt.l2_h)
        rec.add(level, n, h, f"{label}_h2h", rpt.h2_h)
    return field, disc, bsets, system


def _solve_weak_arm(rec: _Recorder, label: str, level: int, n: int, h: float,
                    mesh: Mesh, topo: Topology, case: ManufacturedCase,
                    dirichlet_sides: str):
    cfg = rec.cfg
    with rec.phase(level, f"{label}_total"):
        field, report, disc, system = solve_weak(mesh, topo, cfg.p, cfg.s, case,
                                                 dirichlet_sides=dirichlet_sides)
    rec.add(level, n, h, f"{label}_kappa_diag", report.kappa_diag)
    with rec.phase(level, f"{label}_norms"):
        rpt = error_norms(field, case)
    rec.add(level, n, h, f"{label}_l2", rpt.l2)
    rec.add(level, n, h, f"{label}_h1", rpt.h1)
    rec.add(level, n, h, f"{label}_energy", rpt.energy)
    rec.add(level, n, h, f"{label}_l2h", rpt.l2_h)
    return field, disc, system


# ---------------------------------------------------------------------------
# study runners

def run_patch_test(cfg: StudyConfig) -> StudyResult:
    """Solve a polynomial case whose degree matches the reconstruction degree.

    Every arm must reproduce the data to solver precision; the report
    carries max-norm errors of the value and of the highest derivatives.
    """
    cfg = normalize_config(cfg)
    rec = _Recorder(cfg)
    case = get_case(cfg.case, p=cfg.p)
    if case.degree is not None and case.degree > cfg.p:
        raise ValueError("patch-test data must lie in the reconstruction space")
    if cfg.method and cfg.method != "all":
        methods = [cfg.method]
    elif case.operator == "biharmonic":
        methods = ["nc", "cc", "sd"]
    else:
        methods = ["nc", "cc", "sd", "wg"]

    for level, n in enumerate(cfg.levels):
        mesh, topo, h = _level_mesh(cfg, case, n)
        for method in methods:
            if method == "wg":
                field, _, _ = _solve_weak_arm(rec, "wg", level, n, h, mesh, topo,
                                              case, "all")
                label = "wg"
            else:
                spec = ProblemSpec(case=case, bc_mode=cfg.bc_mode or "ba")
                field, _, _, _ = _solve_strong_arm(
                    rec, method, level, n, h, mesh, topo, spec, method,
                    with_norms=True)
                label = method
            errs = max_errors(field, case, max_order=4)
            rec.add(level, n, h, f"{label}_einf", errs[0])
            top = min(4, cfg.p)
            rec.add(level, n, h, f"{label}_d{top}max", errs[top])
    return rec.result()


def run_jump_study(cfg: StudyConfig) -> StudyResult:
    """Inter-element derivative jumps of the injected exact field."""
    cfg = normalize_config(cfg)
    rec = _Recorder(cfg)
    case = get_case(cfg.case, p=cfg.p)
    m_max = min(cfg.p, 4)
    for level, n in enumerate(cfg.levels):
        mesh, topo, h = _level_mesh(cfg, case, n)
        with rec.phase(level, "inject"):
            field = _injected_field(cfg, case, mesh, topo)
        with rec.phase(level, "jumps"):
            jr = compute_jumps(field, m_max)
        for m in range(m_max + 1):
            rec.add(level, n, h, f"J{m}", jr.J[m])
            rec.add(level, n, h, f"Jhat{m}", jr.J_hat[m])
    for m in range(1, m_max + 1):
        rec.fit(f"J{m}")
    return rec.result()


def run_elasticity_bench(cfg: StudyConfig) -> StudyResult:
    """Mixed-boundary plane-stress benchmark.

    Runs the chosen strong-form method with both flux treatments (absorbed
    constraints and appended scaled rows) plus the weak-form arm, so the
    report carries the cross-arm slope comparison directly.
    """
    cfg = normalize_config(cfg)
    rec = _Recorder(cfg)
    case = get_case(cfg.case, p=cfg.p)
    method = cfg.method or "nc"
    bc_arms = (cfg.bc_mode,) if cfg.bc_mode else ("ba", "qr")

    for level, n in enumerate(cfg.levels):
        mesh, topo, h = _level_mesh(cfg, case, n)
        for bc in bc_arms:
            spec = ProblemSpec(case=case, bc_mode=bc, dirichlet_sides="lower-left")
            _solve_strong_arm(rec, f"{method}_{bc}", level, n, h, mesh, topo,
                              spec, method)
        _solve_weak_arm(rec, "wg", level, n, h, mesh, topo, case, "lower-left")

    for bc in bc_arms:
        for metric in ("l2", "h1", "energy"):
            rec.fit(f"{method}_{bc}_{metric}", last=3)
    for metric in ("l2", "h1", "energy"):
        rec.fit(f"wg_{metric}", last=3)
    return rec.result()


def run_biharmonic_bench(cfg: StudyConfig) -> StudyResult:
    """Clamped fourth-order solves over a refinement sweep."""
    cfg = normalize_config(cfg)
    rec = _Recorder(cfg)
    case = get_case(cfg.case, p=cfg.p)
    if case.operator != "biharmonic":
        raise ValueError("this study needs a fourth-order case")
    method = cfg.method or "nc"
    bc = cfg.bc_mode or "ba"
    for level, n in enumerate(cfg.levels):
        mesh, topo, h = _level_mesh(cfg, case, n)
        if cfg.delta > 0.0:
            rec.add(level, n, h, "min_signed_area", min_signed_area(mesh))
        spec = ProblemSpec(case=case, bc_mode=bc)
        _solve_strong_arm(rec, method, level, n, h, mesh, topo, spec, method)
    for metric in ("l2", "l2h", "h2h"):
        rec.fit(f"{method}_{metric}", last=3)
    return rec.result()


def run_injection_diag(cfg: StudyConfig) -> StudyResult:
    """Reconstruction-only error decay: exact nodal data, no solve."""
    cfg = normalize_config(cfg)
    rec = _Recorder(cfg)
    case = get_case(cfg.case, p=cfg.p)
    for level, n in enumerate(cfg.levels):
        mesh, topo, h = _level_mesh(cfg, case, n)
        if cfg.delta > 0.0:
            rec.add(level, n, h, "min_signed_area", min_signed_area(mesh))
        with rec.phase(level, "inject"):
            field = _injected_field(cfg, case, mesh, topo)
        with rec.phase(level, "norms"):
            rpt = error_norms(field, case)
        rec.add(level, n, h, "l2", rpt.l2)
        rec.add(level, n, h, "h1", rpt.h1)
        rec.add(level, n, h, "energy", rpt.energy)
        rec.add(level, n, h, "l2h", rpt.l2_h)
        rec.add(level, n, h, "h2h", rpt.h2_h)
    for metric in ("l2", "h1", "l2h", "h2h"):
        rec.fit(metric)
    return rec.result()


def run_conditioning(cfg: StudyConfig) -> StudyResult:
    """Interior-block spectral condition numbers across refinement.

    The fitted slope is taken against the free unknown count rather than
    h, since that is the axis the growth law is stated in.
    """
    cfg = normalize_config(cfg)
    rec = _Recorder(cfg)
    case = get_case(cfg.case, p=cfg.p)
    methods = [cfg.method] if cfg.method and cfg.method != "all" else \
        ["nc", "cc", "sd", "wg"]

    for level, n in enumerate(cfg.levels):
        mesh, topo, h = _level_mesh(cfg, case, n)
        for method in methods:
            if method == "wg":
                _, _, system = _solve_weak_arm(rec, "wg", level, n, h, mesh,
                                               topo, case, "all")
                mask = system.dirichlet_mask
                if mask is None:
                    mask = np.zeros(system.matrix.shape[1], dtype=bool)
                symmetric = bool(system.symmetric)
            else:
                spec = ProblemSpec(case=case, bc_mode=cfg.bc_mode or "ba")
                _, _, _, system = _solve_strong_arm(
                    rec, method, level, n, h, mesh, topo, spec, method,
                    with_norms=False)
                mask = system.dirichlet_mask
                symmetric = False
            with rec.phase(level, f"{method}_kappa2"):
                kappa = cond_interior_estimate(system.matrix, mask,
                                               symmetric=symmetric)
            ndof = int(np.count_nonzero(~mask))
            rec.add(level, n, h, f"{method}_kappa2", kappa)
            rec.add(level, n, h, f"{method}_ndof", ndof)

    for method in methods:
        ks = rec.result().series(f"{method}_kappa2")
        ns = rec.result().series(f"{method}_ndof")
        if len(ks) >= 2 and np.all(ks > 0):
            slope = float(np.polyfit(np.log(ns), np.log(ks), 1)[0])
            rec.add_rate(f"{method}_kappa2_vs_ndof", slope)
    return rec.result()


def run_ablation_ba_penalty(cfg: StudyConfig) -> StudyResult:
    """Absorbed flux constraints against the global penalty, same geometry.

    Emits errors, diagonal-scaled condition proxies, post-solve boundary
    residuals, and the admissibility indicators of the absorbed maps.
    """
    cfg = normalize_config(cfg)
    rec = _Recorder(cfg)
    case = get_case(cfg.case, p=cfg.p)
    if case.operator != "biharmonic":
        raise ValueError("the ablation compares flux treatments on the clamped problem")
    method = cfg.method or "nc"

    for level, n in enumerate(cfg.levels):
        mesh, topo, h = _level_mesh(cfg, case, n)
        for bc, label in (("ba", "ba"), ("penalty", "pen")):
            spec = ProblemSpec(case=case, bc_mode=bc)
            field, disc, bsets, _ = _solve_strong_arm(
                rec, label, level, n, h, mesh, topo, spec, method)
            if bc != "ba":
                continue
            etas, polys, kkts = [], [], []
            for patch, rmap in zip(disc.patches, disc.maps):
                if not patch.is_boundary or rmap.n_extra == 0:
                    continue
                rep = admissibility_report(patch, rmap, mesh, seed=cfg.seed)
                etas.append(rep.eta)
                polys.append(rep.eps_poly)
                kkts.append(rep.kkt_condition)
            if etas:
                rec.add(level, n, h, "ba_eta_mean", float(np.mean(etas)))
                rec.add(level, n, h, "ba_eps_poly_rms",
                        float(np.sqrt(np.mean(np.square(polys)))))
                rec.add(level, n, h, "ba_eps_poly_max", float(np.max(polys)))
                rec.add(level, n, h, "ba_kkt_cond_max", float(np.max(kkts)))

    for label in ("ba", "pen"):
        rec.fit(f"{label}_l2h", last=3)
        rec.fit(f"{label}_h2h", last=3)
        # condition proxies grow as h shrinks; report the positive exponent
        ks = [v for (_, _, _, m, v) in rec.rows if m == f"{label}_kappa_diag"]
        hs = [hh for (_, _, hh, m, _) in rec.rows if m == f"{label}_kappa_diag"]
        if len(ks) >= 2 and all(k > 0 for k in ks):
            rec.add_rate(f"{label}_kappa_exponent", -fit_rate(hs, ks))
    return rec.result()


_RUNNERS = {
    "patch-test": run_patch_test,
    "jump-study": run_jump_study,
    "elasticity-bench": run_elasticity_bench,
    "biharmonic-bench": run_biharmonic_bench,
    "injection-diag": run_injection_diag,
    "conditioning": run_conditioning,
    "ablation-ba-penalty": run_ablation_ba_penalty,
}


def run_study(cfg: StudyConfig) -> StudyResult:
    cfg = normalize_config(cfg)
    result = _RUNNERS[cfg.study](cfg)
    if cfg.out:
        write_study_csv(result, cfg.out)
    return result


# ---------------------------------------------------------------------------
# CSV output

def _fmt(v: float) -> str:
    return f"{v:.12e}"


def _header_line(cfg: StudyConfig) -> str:
    levels = "|".join(str(n) for n in cfg.levels)
    return (f"# study={cfg.study} case={cfg.case} method={cfg.method or '-'} "
            f"bc={cfg.bc_mode or '-'} p={cfg.p} s={cfg.s} "
            f"delta={cfg.delta:g} seed={cfg.seed} levels={levels}")


def format_study_csv(result: StudyResult) -> str:
    lines = [f"# schema={CSV_SCHEMA}", _header_line(result.config),
             "kind,level,n,h,metric,value"]
    for (level, n, h, metric, value) in result.rows:
        lines.append(f"data,{level},{n},{_fmt(h)},{metric},{_fmt(value)}")
    for (metric, value) in result.rates:
        lines.append(f"rate,,,,{metric},{_fmt(value)}")
    return "\n".join(lines) + "\n"


def timings_sidecar_path(out_path: str) -> str:
    stem = out_path[:-4] if out_path.endswith(".csv") else out_path
    return stem + ".timings.csv"


def write_study_csv(result: StudyResult, out_path: str) -> tuple[str, str]:
    """Write the report plus a timings sidecar; returns both paths."""
    with open(out_path, "w") as fh:
        fh.write(format_study_csv(result))
    side = timings_sidecar_path(out_path)
    with open(side, "w") as fh:
        fh.write(f"# schema={CSV_SCHEMA}-timings\n")
        fh.write("level,phase,seconds\n")
        for (level, phase, dt) in result.timings:
            fh.write(f"{level},{phase},{dt:.6f}\n")
    return out_path, side
