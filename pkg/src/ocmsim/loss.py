"""Photon loss: thinning channel, exact small-N oracle, analytic formulas.

Uniform loss (a beamsplitter to an unobserved environment acting
identically on every spatial mode) removes photons at random,
independently of position.  Because the centroid measurement is
position-diagonal, channel transmission and detector efficiency
compose into a single per-photon Bernoulli survival probability

    p = eta_det * exp(-alpha_z),

and the sampler's thinning stage realizes the whole channel.  The
partial-trace oracle here validates that model exactly at small N.

For quantum Gaussian beams the lossy centroid variance and the
classical beam width have closed forms; they are implemented verbatim
as analytic functions and checked against the Monte Carlo sweep in the
regimes where they are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PhysicsError
from .lattice import (
    DEFAULT_AMP_CAP,
    POSITION,
    ProductSum,
    State,
    change_basis,
    check_amp_cap,
    densify,
)
from .measurement import Distribution, _clean_probabilities, _index_sum_marginal
from .sampler import DetectorModel, VarianceReport, run_histogram
from .states import GaussianBeamSpec


@dataclass(frozen=True)
class LossParams:
    """Channel and detector loss for one propagation distance.

    eta_det is the detector quantum efficiency; alpha_z is the
    dimensionless propagation loss exponent (power loss coefficient
    times distance).
    """

    eta_det: float = 1.0
    alpha_z: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.eta_det <= 1.0:
            raise PhysicsError(f"eta_det must lie in (0, 1], got {self.eta_det}")
        if not self.alpha_z >= 0.0:
            raise PhysicsError(f"alpha_z must be >= 0, got {self.alpha_z}")

    @property
    def transmission(self) -> float:
        """Channel power transmission exp(-alpha_z)."""
        return math.exp(-self.alpha_z)

    @property
    def survival(self) -> float:
        """Per-photon probability of being transmitted and detected."""
        return self.eta_det * self.transmission

    def reduced_number(self, n0: float) -> float:
        """Mean photon number surviving the channel (before the detector)."""
        return n0 * self.transmission


def thin_positions(positions: np.ndarray, p: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Keep each arrival independently with probability p."""
    if not 0.0 < p <= 1.0:
        raise PhysicsError(f"survival probability must lie in (0, 1], got {p}")
    positions = np.asarray(positions, dtype=np.float64)
    return positions[rng.random(positions.size) < p]


def reduced_position_density(state: State, m: int,
                             cap: int = DEFAULT_AMP_CAP) -> np.ndarray:
    """Joint position density of m photons surviving uniform loss.

    Tracing N - m photons out of an exchange-symmetric pure state in
    the position basis needs only the diagonal of the density operator,
    so the result is the |psi|^2 tensor summed over N - m coordinates.
    Returns an (M,)*m probability tensor normalized to 1.
    """
    n = state.n
    if not 1 <= m <= n:
        raise PhysicsError(f"survivor count {m} not in 1..{n}")
    check_amp_cap(state.grid.m, n, cap)
    pos = change_basis(state, POSITION)
    if isinstance(pos, ProductSum):
        pos = densify(pos, cap)
    pmf = np.abs(pos.amp) ** 2
    pmf /= pmf.sum()
    if m < n:
        pmf = pmf.sum(axis=tuple(range(m, n)))
    return pmf


def reduced_centroid(state: State, m: int,
                     cap: int = DEFAULT_AMP_CAP) -> Distribution:
    """Exact centroid distribution of the m-survivor sector.

    This is the oracle the Bernoulli-thinning sampler must agree with:
    conditioning a thinned run on m detected photons and histogramming
    their centroid converges to this distribution.
    """
    pmf = reduced_position_density(state, m, cap)
    w = _index_sum_marginal(pmf)
    g = state.grid
    return Distribution(
        offset=float(g.positions[0]),
        spacing=g.dx / m,
        p=_clean_probabilities(w, "reduced centroid distribution"),
        fold_bins=g.m,
        meta={"kind": "reduced", "n": state.n, "m": m},
    )


def classical_width_sq(spec: GaussianBeamSpec) -> float:
    """Squared classical beam width of a quantum Gaussian beam.

    In units of the centroid-variance ratio r0 and photon number n0:

        width^2 = (1 / 4 delta_k^2) [r0/n0 + (1 - 1/n0)^2 / (1 - 1/(n0 r0))]

    At r0 = 1 this is the single-photon value 1/(4 delta_k^2) for any
    n0.  The expression diverges as n0 r0 -> 1 (all the beam's spatial
    extent migrates into centroid uncertainty), so that limit is an
    error rather than a huge number.
    """
    n0, r0 = spec.n0, spec.r0
    if n0 == 1:
        # No relative coordinates to diverge; the width is the photon's.
        return 1.0 / (4.0 * spec.delta_k ** 2)
    if n0 * r0 <= 1.0 + 1e-12:
        raise PhysicsError(
            f"beam width diverges at or below the Heisenberg limit: n0*r0 = {n0 * r0:.6g} <= 1"
        )
    return (r0 / n0 + (1.0 - 1.0 / n0) ** 2 / (1.0 - 1.0 / (n0 * r0))) / (
        4.0 * spec.delta_k ** 2
    )


def lossy_centroid_variance(spec: GaussianBeamSpec, lp: LossParams,
                            var0: float | None = None) -> float:
    """Centroid variance of a Gaussian beam after loss.

        var_z = var_0 + width^2 / (eta N_z) * (1 - eta exp(-alpha z))

    where N_z is the reduced photon number and width^2 the classical
    beam width from classical_width_sq.  var0 defaults to the exact
    lossless value r0 / (4 n0 delta_k^2); pass a measured value to
    predict from data instead.  At r0 = 1 the result collapses to
    width^2 / (eta N_z) identically: a classical beam stays at the
    standard quantum limit for the detected photon number.
    """
    if var0 is None:
        var0 = spec.r0 / (4.0 * spec.n0 * spec.delta_k ** 2)
    n_z = lp.reduced_number(spec.n0)
    width_sq = classical_width_sq(spec)
    return var0 + width_sq / (lp.eta_det * n_z) * (1.0 - lp.survival)


@dataclass(frozen=True)
class SweepRow:
    """One loss setting: measured centroid variance next to the prediction."""

    eta: float
    alpha_z: float
    p: float
    n_z: float
    measured_var: float
    ci_lo: float
    ci_hi: float
    predicted_var: float
    rel_dev: float


def loss_sweep(state: State, spec: GaussianBeamSpec, params: list[LossParams],
               trials: int, seed: int, *, pixel_factor: int = 1,
               threads: int = 1, cap: int = DEFAULT_AMP_CAP) -> list[SweepRow]:
    """Monte Carlo lossy centroid variance across loss settings.

    Each setting thins photons with its survival probability, pools all
    trials with at least one detected photon, and reports the pooled
    centroid variance with a bootstrap 95% interval next to the
    analytic prediction.  The caller supplies the beam parameters the
    state was built from; the state itself can be any sampleable
    representation of that beam.
    """
    rows: list[SweepRow] = []
    for lp in params:
        det = DetectorModel(pixel_factor=pixel_factor, eta=lp.survival)
        hist, _ = run_histogram(state, det, trials, seed, threads=threads, cap=cap)
        rep: VarianceReport = hist.variance_report()
        pred = lossy_centroid_variance(spec, lp)
        rows.append(SweepRow(
            eta=lp.eta_det,
            alpha_z=lp.alpha_z,
            p=lp.survival,
            n_z=lp.reduced_number(spec.n0),
            measured_var=rep.variance,
            ci_lo=rep.ci_low,
            ci_hi=rep.ci_high,
            predicted_var=pred,
            rel_dev=(rep.variance - pred) / pred,
        ))
    return rows


_SWEEP_FORMAT = "ocmsim.sweep.v1"
_SWEEP_COLUMNS = ("eta", "alpha_z", "p", "n_z", "measured_var",
                  "ci_lo", "ci_hi", "predicted_var", "rel_dev")


def sweep_to_csv(rows: list[SweepRow]) -> str:
    lines = [f"# format={_SWEEP_FORMAT}", ",".join(_SWEEP_COLUMNS)]
    for row in rows:
        lines.append(",".join(repr(float(getattr(row, c))) for c in _SWEEP_COLUMNS))
    return "\n".join(lines) + "\n"
