"""Experiment runner: config in, deterministic result artifacts out.

execute_run turns a validated RunConfig into named artifact texts plus
a manifest carrying the resolved config, package version, and artifact
digests.  Every artifact, the manifest included, is a pure function of
the config, so reruns (any thread count) are byte identical and the
manifest digests prove it.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from . import __version__
from .config import (
    DetectorConfig,
    GridConfig,
    RunConfig,
    StateConfig,
)
from .errors import NoFringeError, PhysicsError
from .lattice import Grid, State, load_state, make_grid
from .loss import LossParams, loss_sweep, sweep_to_csv
from .measurement import (
    Distribution,
    align_for_comparison,
    conditional_centroid,
    distribution_to_csv,
    distribution_to_json_dict,
    fringe_metrics,
    marginal_centroid,
    max_abs_deviation,
    mphoton_absorption,
    parse_distribution,
    spectral_support,
    total_variation,
)
from .sampler import CentroidHistogram, DetectorModel, centroid_of_event, run_histogram, shift_experiment
from .states import (
    GaussianBeamSpec,
    PhotonSuperposition,
    classical_product,
    correlated_biphoton,
    gaussian_beam,
    gaussian_profile,
    noon_state,
    superpose_photon_numbers,
)

_HISTOGRAM_FORMAT = "ocmsim.histogram.v1"


@dataclass
class RunResult:
    artifacts: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)


def build_grid(gc: GridConfig) -> Grid:
    return make_grid(gc.m, gc.dx, gc.sin_theta)


def build_state(sc: StateConfig, grid: Grid, cap: int) -> State | PhotonSuperposition:
    kind = sc.kind
    if kind == "noon":
        return noon_state(sc.n, grid, sigma_env=sc.sigma_env)
    if kind == "gaussian-beam":
        return gaussian_beam(GaussianBeamSpec(sc.n0, sc.delta_k, sc.rho), grid, cap=cap)
    if kind == "correlated-biphoton":
        return correlated_biphoton(grid, sc.sigma_sum, sc.sigma_diff, cap=cap)
    if kind == "classical-product":
        return classical_product(sc.n, grid, gaussian_profile(grid, sc.sigma_x, sc.center))
    if kind == "file":
        st = load_state(sc.path)
        if (st.grid.m, st.grid.dx, st.grid.k0) != (grid.m, grid.dx, grid.k0):
            raise PhysicsError(
                f"state file {sc.path} was built on a different lattice "
                f"(m={st.grid.m}, dx={st.grid.dx}, k0={st.grid.k0})"
            )
        return st
    if kind == "superposition":
        comps: list[tuple[complex, State | None]] = []
        if sc.vacuum_amplitude:
            comps.append((sc.vacuum_amplitude, None))
        for c in sc.components:
            comps.append((c.amplitude, build_state(c.state, grid, cap)))
        return superpose_photon_numbers(comps)
    raise PhysicsError(f"unknown state kind {kind!r}")


def detector_from(dc: DetectorConfig) -> DetectorModel:
    return DetectorModel(
        pixel_factor=dc.pixel_factor,
        eta=dc.eta,
        number_resolving=dc.number_resolving,
        keep_saturated=dc.keep_saturated,
    )


def _beam_parameters(sc: StateConfig) -> GaussianBeamSpec:
    """Loss predictions need the beam the state was built from."""
    if sc.kind == "gaussian-beam":
        return GaussianBeamSpec(sc.n0, sc.delta_k, sc.rho)
    if sc.kind == "classical-product":
        return GaussianBeamSpec(sc.n, 1.0 / (2.0 * sc.sigma_x), 0.0)
    raise PhysicsError(
        "loss sweeps need a gaussian-beam or classical-product state; "
        f"got {sc.kind!r}"
    )


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _fringe_summary(d: Distribution) -> dict | None:
    try:
        fm = fringe_metrics(d)
    except NoFringeError:
        return None
    return {"period": fm.period, "visibility": fm.visibility,
            "frequency": fm.frequency, "peak_to_floor": fm.peak_to_floor}


def _distribution_artifacts(res: RunResult, stem: str, d: Distribution,
                            formats: list[str]) -> None:
    if "csv" in formats:
        res.artifacts[f"{stem}.csv"] = distribution_to_csv(d)
    if "json" in formats:
        res.artifacts[f"{stem}.json"] = _json_text(distribution_to_json_dict(d))


def _histogram_csv(hist: CentroidHistogram) -> str:
    lines = [
        f"# format={_HISTOGRAM_FORMAT}",
        f"# trials={hist.trials}",
        f"# seed={hist.seed}",
        f"# discarded_empty={hist.discarded_empty}",
        f"# saturated_discarded={hist.saturated_discarded}",
        "X,count",
    ]
    for x, c in hist.pooled_rows():
        lines.append(f"{x!r},{c}")
    return "\n".join(lines) + "\n"


def _histogram_summary(hist: CentroidHistogram) -> dict:
    rep = hist.variance_report()
    return {
        "trials": hist.trials,
        "seed": hist.seed,
        "retained": hist.retained,
        "discarded_empty": hist.discarded_empty,
        "saturated_seen": hist.saturated_seen,
        "saturated_discarded": hist.saturated_discarded,
        "per_m_counts": {str(m): int(hist.per_m[m].sum()) for m in sorted(hist.per_m)},
        "mean": rep.mean,
        "variance": rep.variance,
        "variance_ci_95": [rep.ci_low, rep.ci_high],
    }


def _events_ndjson(events, grid: Grid, det: DetectorModel) -> str:
    lines = []
    for ev in events:
        x = centroid_of_event(ev, grid, det)
        lines.append(json.dumps({
            "trial": ev.trial,
            "m": ev.m,
            "pixels": list(ev.pixels),
            "counts": list(ev.counts),
            "saturated": ev.saturated,
            "X": x,
        }, sort_keys=True))
    return "\n".join(lines) + "\n"


def execute_run(cfg: RunConfig) -> RunResult:
    res = RunResult()
    grid = build_grid(cfg.grid)
    state = build_state(cfg.state, grid, cfg.amp_cap)
    exp = cfg.experiment
    formats = cfg.output.formats
    kind = exp.kind

    if kind in ("exact-marginal", "exact-conditional"):
        d = (marginal_centroid(state, cap=cfg.amp_cap) if kind == "exact-marginal"
             else conditional_centroid(state, cap=cfg.amp_cap))
        stem = "marginal" if kind == "exact-marginal" else "conditional"
        _distribution_artifacts(res, stem, d, formats)
        res.summary = {"kind": kind, "mean": d.mean(), "variance": d.variance()}
        if exp.report_fringe:
            res.summary["fringe"] = _fringe_summary(d)
    elif kind == "mphoton":
        d = mphoton_absorption(state, exp.order, cap=cfg.amp_cap)
        _distribution_artifacts(res, "absorption", d, formats)
        res.summary = {"kind": kind, "order": exp.order,
                       "mean": d.mean(), "variance": d.variance()}
    elif kind == "spectral-check":
        d = marginal_centroid(state, cap=cfg.amp_cap)
        n = max(c.n for _, c in state.components) if isinstance(state, PhotonSuperposition) else state.n
        bound = 2.0 * n * grid.k0 + grid.dk
        reach = spectral_support(d, rel_tol=exp.rel_tol)
        res.summary = {
            "kind": kind, "n": n, "k0": grid.k0,
            "bound": bound, "max_active_frequency": reach,
            "within_bound": bool(reach <= bound), "rel_tol": exp.rel_tol,
        }
        res.artifacts["spectral.json"] = _json_text(res.summary)
    elif kind == "sample":
        det = detector_from(exp.detector)
        hist, events = run_histogram(state, det, exp.trials, exp.seed,
                                     threads=cfg.threads, collect_events=exp.events,
                                     cap=cfg.amp_cap)
        res.artifacts["histogram.csv"] = _histogram_csv(hist)
        res.summary = {"kind": kind, **_histogram_summary(hist)}
        res.artifacts["summary.json"] = _json_text(res.summary)
        if exp.events:
            res.artifacts["events.ndjson"] = _events_ndjson(events, grid, det)
    elif kind == "shift":
        det = detector_from(exp.detector)
        report, hist = shift_experiment(state, exp.displacement, det,
                                        exp.trials, exp.seed,
                                        threads=cfg.threads, cap=cfg.amp_cap)
        res.artifacts["histogram.csv"] = _histogram_csv(hist)
        res.summary = {
            "kind": kind,
            "displacement": report.displacement,
            "mean": report.mean,
            "variance": report.variance,
            "variance_ci_95": [report.ci_low, report.ci_high],
            "trials": report.trials,
            "retained": report.retained,
        }
        res.artifacts["shift.json"] = _json_text(res.summary)
    elif kind == "loss-sweep":
        spec = _beam_parameters(cfg.state)
        params = [LossParams(s.eta_det, s.alpha_z) for s in exp.settings]
        rows = loss_sweep(state, spec, params, exp.trials, exp.seed,
                          pixel_factor=exp.pixel_factor,
                          threads=cfg.threads, cap=cfg.amp_cap)
        res.artifacts["sweep.csv"] = sweep_to_csv(rows)
        res.summary = {"kind": kind, "rows": [vars(r) for r in rows]}
        res.artifacts["sweep.json"] = _json_text(res.summary)
    else:
        raise PhysicsError(f"unknown experiment kind {kind!r}")

    cfg_dump = cfg.model_dump(mode="json")
    # The worker count is execution detail, not experiment identity; leaving
    # it out keeps reruns byte-identical across any thread count.
    cfg_dump.pop("threads", None)
    res.manifest = {
        "format": "ocmsim.manifest.v1",
        "version": __version__,
        "config": cfg_dump,
        "state_digest": hashlib.sha256(
            json.dumps(cfg_dump["state"], sort_keys=True).encode()
        ).hexdigest(),
        "artifacts": {
            name: hashlib.sha256(text.encode()).hexdigest()
            for name, text in sorted(res.artifacts.items())
        },
    }
    res.artifacts["manifest.json"] = _json_text(res.manifest)
    return res


def compare_distributions(text_a: str, text_b: str) -> dict:
    """Deviation report between two serialized distributions.

    Supports one being an exact refinement of the other; reports total
    variation, max abs deviation, and fringe metrics for each side with
    deltas when both carry a fringe.
    """
    da = parse_distribution(text_a)
    db = parse_distribution(text_b)
    a, b = align_for_comparison(da, db)
    report = {
        "total_variation": total_variation(a, b),
        "max_abs_deviation": max_abs_deviation(a, b),
        "mean_delta": b.mean() - a.mean(),
        "variance_delta": b.variance() - a.variance(),
        "fringe_a": _fringe_summary(a),
        "fringe_b": _fringe_summary(b),
    }
    fa, fb = report["fringe_a"], report["fringe_b"]
    if fa and fb:
        report["fringe_deltas"] = {k: fb[k] - fa[k] for k in fa}
    return report
