"""Declarative experiment specs, the runner, and figure-data reproduction.

A spec is a JSON file validated against the published schema
(``schema/experiment.json``).  Numbers may be written as decimal strings so
that spec files state exact decimal values.  Running a spec writes
deterministic CSV artifacts plus a ``manifest.json`` carrying the spec digest;
re-running an identical spec reproduces byte-identical CSVs.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from importlib import resources

from .errors import ValidationError
from .limits import (
    convergence_study_micro_macro,
    convergence_study_nonlocal_local,
)
from .model import (
    ModelParams,
    SubcaseReport,
    classify,
    classify_from_fbar,
    critical_density,
    flux,
)
from .profiles import build_profile
from .simulate import Trajectory, integrate, riemann_init
from .tables import ResultTable

KINDS = (
    "simulate",
    "profile",
    "limits-micro-macro",
    "limits-nonlocal-local",
    "classify",
    "reproduce-figure",
)


def _num(v):
    # decimal strings are allowed everywhere a number is
    return None if v is None else float(v)


def load_schema() -> dict:
    text = resources.files("ftls_lab").joinpath("schema/experiment.json").read_text()
    return json.loads(text)


@dataclass
class ExperimentSpec:
    """One fully validated experiment description."""

    name: str
    kind: str
    params: ModelParams
    rho_minus: float = None
    rho_plus: float = None
    fbar: float = None
    subcase: str = None
    anchors: tuple = None
    dz: float = None
    X_min: float = None
    X_max: float = None
    t_final: float = 4.0
    dt: float = None
    band_periods: float = 1.0
    sample_times: tuple = None
    shift: float = 0.0
    N_left: int = None
    N_right: int = None
    model: str = "main"
    ell_sequence: tuple = None
    h_sequence: tuple = None
    figure: str = None
    output_dir: str = "out"
    digest: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    def report(self) -> SubcaseReport:
        if self.rho_minus is not None:
            return classify(self.params, self.rho_minus, self.rho_plus)
        return classify_from_fbar(self.params, self.fbar, self.subcase)


def parse_spec(path) -> ExperimentSpec:
    """Read, schema-check, and semantically validate a spec file.

    All validation problems are collected and reported at once.
    """
    import jsonschema

    with open(path, "rb") as f:
        blob = f.read()
    digest = hashlib.sha256(blob).hexdigest()
    try:
        raw = json.loads(blob.decode("utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError([f"{path}: line {e.lineno} column {e.colno}: {e.msg}"])

    validator = jsonschema.Draft7Validator(load_schema())
    problems = [
        "/".join(str(p) for p in err.absolute_path) + ": " + err.message
        if err.absolute_path else err.message
        for err in sorted(validator.iter_errors(raw), key=str)
    ]
    if problems:
        raise ValidationError(problems)

    p = raw["params"]
    try:
        params = ModelParams.paper_defaults(
            ell=_num(p["ell"]), h=_num(p["h"]),
            V_minus=_num(p["V_minus"]), V_plus=_num(p["V_plus"]),
        )
    except ValidationError as e:
        raise ValidationError([f"params: {e}"])

    kind = raw["kind"]
    rho_minus = _num(raw.get("rho_minus"))
    rho_plus = _num(raw.get("rho_plus"))
    fbar = _num(raw.get("fbar"))
    subcase = raw.get("subcase")

    have_pair = rho_minus is not None and rho_plus is not None
    have_flux = fbar is not None and subcase is not None
    needs_asymptotes = kind in (
        "simulate", "profile", "limits-micro-macro", "limits-nonlocal-local",
        "classify",
    )
    if needs_asymptotes and not (have_pair or have_flux):
        problems.append(
            "either (rho_minus, rho_plus) or (fbar, subcase) must be given"
        )
    if fbar is not None:
        V_slow = min(params.road.V_minus, params.road.V_plus)
        bound = V_slow * flux(critical_density(params.law), params.law)
        if not 0.0 < fbar < bound:
            problems.append(
                f"fbar: must lie in (0, {bound}), the range admitting "
                f"asymptotic densities on both sides of the jump; got {fbar}"
            )
    if kind == "reproduce-figure" and not raw.get("figure"):
        problems.append("figure: required for kind reproduce-figure")
    if raw.get("figure") and raw["figure"] not in REPRODUCE_TARGETS:
        problems.append(
            f"figure: unknown target {raw['figure']!r}; "
            f"known: {', '.join(sorted(REPRODUCE_TARGETS))}"
        )
    if problems:
        raise ValidationError(problems)

    grid = raw.get("grid", {})
    tspec = raw.get("time", {})
    return ExperimentSpec(
        name=raw["name"],
        kind=kind,
        params=params,
        rho_minus=rho_minus,
        rho_plus=rho_plus,
        fbar=fbar,
        subcase=subcase,
        anchors=tuple(_num(a) for a in raw["anchors"]) if "anchors" in raw else None,
        dz=_num(grid.get("dz")),
        X_min=_num(grid.get("X_min")),
        X_max=_num(grid.get("X_max")),
        t_final=_num(tspec.get("t_final", 4.0)),
        dt=_num(tspec.get("dt")),
        band_periods=_num(tspec.get("band_periods", 1.0)),
        sample_times=tuple(_num(t) for t in tspec["sample_times"])
        if "sample_times" in tspec else None,
        shift=_num(raw.get("shift", 0.0)),
        N_left=raw.get("N_left"),
        N_right=raw.get("N_right"),
        model=raw.get("model", "main"),
        ell_sequence=tuple(_num(v) for v in raw["ell_sequence"])
        if "ell_sequence" in raw else None,
        h_sequence=tuple(_num(v) for v in raw["h_sequence"])
        if "h_sequence" in raw else None,
        figure=raw.get("figure"),
        output_dir=raw.get("output_dir", "out"),
        digest=digest,
        raw=raw,
    )


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------
def write_profile_csv(P, out_dir, stem) -> list:
    """Profile CSV (x, P) with a JSON metadata sidecar."""
    out_dir.mkdir(parents=True, exist_ok=True)
    table = ResultTable(columns=("x", "P"))
    for x, v in zip(P.x, P.values):
        table.add_row(x=float(x), P=float(v))
    csv_path = out_dir / f"{stem}.csv"
    table.write_csv(csv_path)
    meta_path = out_dir / f"{stem}.json"
    with open(meta_path, "w", encoding="utf-8") as f:
        json.dump(P.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return [csv_path, meta_path]


def write_band_csv(traj: Trajectory, out_dir, stem, t_min=None) -> list:
    """Trajectory snapshots as rows (t, i, z, rho), ordered by (t, i)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    table = ResultTable(columns=("t", "i", "z", "rho"))
    for t, z, rho in zip(traj.times, traj.positions, traj.densities):
        if t_min is not None and t < t_min - 1e-12:
            continue
        for k in range(len(rho)):
            table.add_row(t=float(t), i=traj.i_min + k,
                          z=float(z[k]), rho=float(rho[k]))
    path = out_dir / f"{stem}.csv"
    table.write_csv(path)
    return [path]


def write_crashes_csv(traj: Trajectory, out_dir, stem) -> list:
    out_dir.mkdir(parents=True, exist_ok=True)
    table = ResultTable(columns=("t", "i", "rho"))
    for t, i, rho in traj.crashes:
        table.add_row(t=float(t), i=int(i), rho=float(rho))
    path = out_dir / f"{stem}.csv"
    table.write_csv(path)
    return [path]


def _band_start(spec, fbar):
    return spec.t_final - spec.band_periods * spec.params.ell / fbar


# ---------------------------------------------------------------------------
# kind runners
# ---------------------------------------------------------------------------
def _run_classify(spec, out_dir):
    report = spec.report()
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "verdict.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return [path], {"verdict": report.verdict.value,
                    "subcase": report.subcase.value}


def _run_profile(spec, out_dir):
    report = spec.report()
    anchors = spec.anchors if spec.anchors is not None else (report.rho_plus,)
    artifacts = []
    kwargs = {}
    if spec.dz is not None:
        kwargs["dz"] = spec.dz
    for k, anchor in enumerate(anchors):
        P = build_profile(report, anchor, X_min=spec.X_min, X_max=spec.X_max,
                          **kwargs)
        artifacts += write_profile_csv(P, out_dir, f"profile-{k}")
    return artifacts, {"anchors": list(anchors),
                       "subcase": report.subcase.value}


def _run_simulate(spec, out_dir):
    report = spec.report()
    state = riemann_init(spec.params, report.rho_minus, report.rho_plus,
                         c0=spec.shift, N_left=spec.N_left,
                         N_right=spec.N_right)
    band_start = _band_start(spec, report.fbar)
    samples = list(spec.sample_times) if spec.sample_times else [0.0, spec.t_final]
    traj = integrate(state, model=spec.model, dt=spec.dt,
                     t_final=spec.t_final, sample_times=samples,
                     band_start=band_start)
    artifacts = write_band_csv(traj, out_dir, "band", t_min=band_start)
    artifacts += write_band_csv(traj, out_dir, "snapshots")
    extra = {"subcase": report.subcase.value,
             "max_density": traj.max_density()}
    if spec.model == "alternative":
        artifacts += write_crashes_csv(traj, out_dir, "crashes")
        extra["crash_count"] = len(traj.crashes)
    return artifacts, extra


def _run_limits(spec, out_dir, which):
    report = spec.report()
    anchor = spec.anchors[0] if spec.anchors else report.rho_plus
    kwargs = dict(X_min=spec.X_min, X_max=spec.X_max)
    if spec.dz is not None:
        kwargs["dz"] = spec.dz
    if which == "micro-macro":
        seq = spec.ell_sequence
        table = convergence_study_micro_macro(
            report, anchor, **({"ell_sequence": seq} if seq else {}), **kwargs)
    else:
        seq = spec.h_sequence
        table = convergence_study_nonlocal_local(
            report, anchor, **({"h_sequence": seq} if seq else {}), **kwargs)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "convergence.csv"
    table.write_csv(path)
    return [path], {"sup_errors": table.column("sup_error")}


def run(spec: ExperimentSpec, out_dir=None, overrides=None) -> dict:
    """Execute a spec; write artifacts and a manifest; return the manifest."""
    from pathlib import Path

    t0 = time.perf_counter()
    out_dir = Path(out_dir if out_dir is not None else spec.output_dir)
    if spec.kind == "classify":
        artifacts, extra = _run_classify(spec, out_dir)
    elif spec.kind == "profile":
        artifacts, extra = _run_profile(spec, out_dir)
    elif spec.kind == "simulate":
        artifacts, extra = _run_simulate(spec, out_dir)
    elif spec.kind == "limits-micro-macro":
        artifacts, extra = _run_limits(spec, out_dir, "micro-macro")
    elif spec.kind == "limits-nonlocal-local":
        artifacts, extra = _run_limits(spec, out_dir, "nonlocal-local")
    elif spec.kind == "reproduce-figure":
        artifacts, extra = reproduce(spec.figure, out_dir,
                                     overrides=overrides)
    else:
        raise ValidationError([f"unknown kind {spec.kind!r}"])

    from . import __version__

    manifest = {
        "name": spec.name,
        "kind": spec.kind,
        "tool_version": __version__,
        "spec_digest": spec.digest,
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "artifacts": sorted(str(a) for a in artifacts),
    }
    manifest.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


# ---------------------------------------------------------------------------
# figure-data reproduction at paper parameters
# ---------------------------------------------------------------------------
PAPER_FBAR = 3.0 / 16.0


def _paper_spec(kind, name, subcase, case, **kw):
    V_minus, V_plus = (2.0, 1.0) if case == 1 else (1.0, 2.0)
    return ExperimentSpec(
        name=name, kind=kind,
        params=ModelParams.paper_defaults(V_minus=V_minus, V_plus=V_plus),
        fbar=PAPER_FBAR, subcase=subcase, **kw)


def _apply_overrides(spec, overrides):
    if not overrides:
        return spec
    from dataclasses import replace

    fields = {k: v for k, v in overrides.items() if v is not None}
    return replace(spec, **fields)


def _fig_profile_and_band(subcase, case, out_dir, overrides, anchors=None):
    spec = _paper_spec("profile", f"fig-{subcase.lower()}", subcase, case,
                       anchors=anchors, dz=0.0002, X_min=-10.0, X_max=10.0)
    spec = _apply_overrides(spec, overrides)
    artifacts, _ = _run_profile(spec, out_dir)
    sim = _paper_spec("simulate", f"fig-{subcase.lower()}-sim", subcase, case,
                      t_final=4.0)
    sim = _apply_overrides(sim, {k: v for k, v in (overrides or {}).items()
                                 if k in ("t_final", "N_left", "N_right",
                                          "dt", "shift")})
    more, extra = _run_simulate(sim, out_dir)
    return artifacts + more, extra


def _fig_sim_pair(name, subcases, case, out_dir, overrides):
    artifacts = []
    extra = {}
    for sub in subcases:
        sim = _paper_spec("simulate", f"{name}-{sub.lower()}", sub, case,
                          t_final=4.0)
        sim = _apply_overrides(sim, overrides)
        report = sim.report()
        state = riemann_init(sim.params, report.rho_minus, report.rho_plus,
                             c0=sim.shift, N_left=sim.N_left,
                             N_right=sim.N_right)
        band_start = _band_start(sim, report.fbar)
        traj = integrate(state, model="main", dt=sim.dt, t_final=sim.t_final,
                         sample_times=[0.0, sim.t_final],
                         band_start=band_start)
        artifacts += write_band_csv(traj, out_dir, f"band-{sub.lower()}",
                                    t_min=band_start)
        extra[f"max_density_{sub.lower()}"] = traj.max_density()
    return artifacts, extra


def fig_1a(out_dir, overrides=None):
    return _fig_profile_and_band("1A", 1, out_dir, overrides)


def fig_1b_left(out_dir, overrides=None):
    spec = _paper_spec("profile", "fig-1b-left", "1B", 1,
                       anchors=(0.3, 0.45, 0.6, 0.75), dz=0.0002,
                       X_min=-10.0, X_max=10.0)
    spec = _apply_overrides(spec, overrides)
    return _run_profile(spec, out_dir)


def fig_1b_right(out_dir, overrides=None):
    spec = _paper_spec("simulate", "fig-1b-right", "1B", 1, t_final=4.0)
    # paper shifts the jump car half a headway into the left state
    spec.shift = 0.5 * spec.params.ell / classify_from_fbar(
        spec.params, spec.fbar, "1B").rho_minus
    spec = _apply_overrides(spec, overrides)
    return _run_simulate(spec, out_dir)


def fig_1c1d(out_dir, overrides=None):
    return _fig_sim_pair("fig-1c1d", ("1C", "1D"), 1, out_dir, overrides)


def fig_2a(out_dir, overrides=None):
    return _fig_profile_and_band("2A", 2, out_dir, overrides)


def fig_2b(out_dir, overrides=None):
    # the right-asymptote anchor blows up for an upward speed jump, so the
    # sample family stays inside the admissible anchor range
    artifacts, extra = _fig_profile_and_band(
        "2B", 2, out_dir, overrides, anchors=(0.3, 0.5, 0.7))
    return artifacts, extra


def fig_2c2d(out_dir, overrides=None):
    return _fig_sim_pair("fig-2c2d", ("2C", "2D"), 2, out_dir, overrides)


def fig_crashes(out_dir, overrides=None):
    params = ModelParams.paper_defaults()   # V- = 2 > V+ = 1
    artifacts = []
    extra = {}
    t_final = (overrides or {}).get("t_final") or 1.0
    for tag, rho_plus in (("a", 0.75), ("b", 0.25)):
        state = riemann_init(params, 0.9, rho_plus,
                             N_left=(overrides or {}).get("N_left"),
                             N_right=(overrides or {}).get("N_right"))
        traj = integrate(state, model="alternative", t_final=t_final,
                         sample_times=[0.0, t_final])
        artifacts += write_band_csv(traj, out_dir, f"snapshot-{tag}")
        artifacts += write_crashes_csv(traj, out_dir, f"crashes-{tag}")
        extra[f"max_density_{tag}"] = traj.max_density()
    return artifacts, extra


REPRODUCE_TARGETS = {
    "fig-1a": fig_1a,
    "fig-1b-left": fig_1b_left,
    "fig-1b-right": fig_1b_right,
    "fig-1c1d": fig_1c1d,
    "fig-2a": fig_2a,
    "fig-2b": fig_2b,
    "fig-2c2d": fig_2c2d,
    "fig-crashes": fig_crashes,
}


def reproduce(target, out_dir, overrides=None):
    """Regenerate the data behind one named figure."""
    from pathlib import Path

    if target not in REPRODUCE_TARGETS:
        raise ValidationError(
            [f"unknown reproduce target {target!r}; "
             f"known: {', '.join(sorted(REPRODUCE_TARGETS))}"]
        )
    return REPRODUCE_TARGETS[target](Path(out_dir), overrides=overrides)
