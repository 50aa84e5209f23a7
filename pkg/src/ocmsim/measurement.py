"""Centroid distributions and their spectral diagnostics.

Two observables matter here.  The conditional distribution is the
probability profile of all N photons arriving at the same point,
p_c(x) ~ |psi(x, ..., x)|^2.  The marginal distribution is the law of
the intensity centroid X = (x_1 + ... + x_N) / N with the individual
arrival points integrated out.  On the lattice the centroid lives on a
refined lattice of pitch dx / N with N (M - 1) + 1 bins.

All distributions are probability vectors (they sum to one).  Spectral
quantities are computed after folding onto the centroid torus: moving
one photon across the periodic extent L advances the centroid by L / N,
so any state-derived centroid law is periodic with L / N, which is M
bins at every refinement.  Folding makes the band-limit statement exact
on the lattice: a state with per-photon momenta inside |k| <= k0 has
folded spectral content confined to |f| <= 2 N k0 up to rounding dust,
provided k0 <= pi / (2 dx) so that no alias folds back into range.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import FormatError, NoFringeError, PhysicsError
from .lattice import (
    DEFAULT_AMP_CAP,
    POSITION,
    ProductSum,
    State,
    WaveTensor,
    change_basis,
    check_amp_cap,
    densify,
)
from .states import PhotonSuperposition


@dataclass(frozen=True, eq=False)
class Distribution:
    """Probability vector on a uniform lattice of real positions."""

    offset: float
    spacing: float
    p: np.ndarray
    fold_bins: int | None = None
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self) -> None:
        p = np.ascontiguousarray(self.p, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise PhysicsError("distribution needs a nonempty 1-d probability vector")
        object.__setattr__(self, "p", p)

    @property
    def support(self) -> np.ndarray:
        return self.offset + self.spacing * np.arange(self.p.size)

    def mean(self) -> float:
        return float(np.dot(self.p, self.support))

    def variance(self) -> float:
        x = self.support
        mu = float(np.dot(self.p, x))
        return float(np.dot(self.p, (x - mu) ** 2))

    def fold(self, center: float = 0.0) -> "Distribution":
        """Collapse the support onto one period around `center`.

        Centroid distributions of lattice states are periodic with
        fold_bins lattice steps; support points beyond one period are
        images of the same physical values.  Folding maps every bin
        into the window [center - C/2, center + C/2) of circumference
        C = fold_bins * spacing, which makes moments meaningful when
        the mass is concentrated away from the window edges.
        """
        if self.fold_bins is None:
            raise PhysicsError("distribution carries no period to fold on")
        c = self.fold_bins
        start = center - 0.5 * c * self.spacing
        shift = (self.offset - start) / self.spacing
        if abs(shift - round(shift)) > 1e-9:
            raise PhysicsError("fold center is not on the support lattice")
        idx = (np.arange(self.p.size) + int(round(shift))) % c
        folded = np.zeros(c)
        np.add.at(folded, idx, self.p)
        meta = dict(self.meta)
        meta["folded"] = True
        return Distribution(offset=start, spacing=self.spacing, p=folded,
                            fold_bins=c, meta=meta)


@dataclass(frozen=True)
class FringeMetrics:
    period: float
    visibility: float
    frequency: float
    peak_to_floor: float


def _clean_probabilities(p: np.ndarray, what: str) -> np.ndarray:
    peak = float(np.max(p)) if p.size else 0.0
    if peak <= 0.0:
        raise PhysicsError(f"{what} is identically zero")
    if float(np.min(p)) < -1e-9 * peak:
        raise PhysicsError(f"{what} has significantly negative entries; numerical failure")
    p = np.clip(p, 0.0, None)
    return p / p.sum()


# ---------------------------------------------------------------------------
# Conditional distribution
# ---------------------------------------------------------------------------

def conditional_centroid(state: State | PhotonSuperposition,
                         cap: int = DEFAULT_AMP_CAP) -> Distribution:
    """Coincident-arrival profile |psi(x, ..., x)|^2, normalized.

    Low-rank states evaluate the diagonal directly from the factors, so
    no dense expansion is needed.  A state whose diagonal vanishes
    everywhere (perfectly anti-bunched) has no conditional distribution.
    """
    if isinstance(state, PhotonSuperposition):
        raise PhysicsError(
            "conditional distribution of a photon-number superposition is "
            "undefined; use mphoton_absorption per order instead"
        )
    pos = change_basis(state, POSITION)
    if isinstance(pos, ProductSum):
        diag = pos.coeffs @ np.prod(pos.factors, axis=1)
    else:
        check_amp_cap(pos.grid.m, pos.n, cap)
        sub = "".join(["i"] * pos.n) + "->i" if pos.n > 1 else "i->i"
        diag = np.einsum(sub, pos.amp)
    p = _clean_probabilities(np.abs(diag) ** 2, "conditional distribution")
    g = pos.grid
    return Distribution(
        offset=float(g.positions[0]), spacing=g.dx, p=p, fold_bins=g.m,
        meta={"kind": "conditional", "n": pos.n},
    )


# ---------------------------------------------------------------------------
# Marginal distribution
# ---------------------------------------------------------------------------

def _index_sum_marginal(pt: np.ndarray) -> np.ndarray:
    """Sum a nonnegative tensor over index-sum classes.

    Returns w with w[b] = sum of pt over all index tuples summing to b.
    Partitioned over the leading axis so each bincount stays in memory.
    """
    n, m = pt.ndim, pt.shape[0]
    if n == 1:
        return pt.astype(np.float64, copy=True)
    idx = np.zeros((m,) * (n - 1), dtype=np.int64)
    for axis in range(n - 1):
        shape = [m if a == axis else 1 for a in range(n - 1)]
        idx += np.arange(m).reshape(shape)
    flat = idx.ravel()
    sub_len = (n - 1) * (m - 1) + 1
    out = np.zeros(n * (m - 1) + 1)
    for lead in range(m):
        out[lead:lead + sub_len] += np.bincount(
            flat, weights=pt[lead].ravel(), minlength=sub_len
        )
    return out


def _dense_marginal(state: WaveTensor, cap: int) -> np.ndarray:
    check_amp_cap(state.grid.m, state.n, cap)
    pos = change_basis(state, POSITION)
    return _index_sum_marginal(np.abs(pos.amp) ** 2)


def _product_sum_marginal(ps: ProductSum) -> np.ndarray:
    # The centroid law of a product term pair (r, s) is the convolution
    # across photons of the per-photon cross densities u_{r,n} u*_{s,n}.
    # One FFT of length N M per (r, s, n) does all of it; rank stays
    # small so the R^2 cost is negligible.
    pos = change_basis(ps, POSITION)
    r, n, m = pos.factors.shape
    length = n * (m - 1) + 1
    nfft = n * m
    w = pos.factors[:, None, :, :] * pos.factors[None, :, :, :].conj()
    w *= pos.grid.dx
    spec = np.fft.fft(w, n=nfft, axis=-1)
    spec = np.prod(spec, axis=2)
    cc = pos.coeffs[:, None] * pos.coeffs[None, :].conj()
    total = np.einsum("rs,rsf->f", cc, spec)
    return np.fft.ifft(total).real[:length]


def marginal_centroid(state: State | PhotonSuperposition,
                      cap: int = DEFAULT_AMP_CAP) -> Distribution:
    """Distribution of the intensity centroid (x_1 + ... + x_N) / N.

    Dense states are reduced by exact index-sum accumulation; low-rank
    states go through per-photon FFT convolution and never densify.
    A photon-number superposition yields the post-selected mixture of
    the per-component marginals, weighted by |C_N|^2 and renormalized
    over the non-vacuum sector; it lives on the common refinement
    lattice of pitch dx / lcm(N_i).
    """
    if isinstance(state, PhotonSuperposition):
        return _superposition_marginal(state, cap)
    g = state.grid
    n = state.n
    if isinstance(state, ProductSum):
        raw = _product_sum_marginal(state)
    else:
        raw = _dense_marginal(state, cap)
    p = _clean_probabilities(raw, "marginal distribution")
    return Distribution(
        offset=float(g.positions[0]), spacing=g.dx / n, p=p, fold_bins=g.m,
        meta={"kind": "marginal", "n": n},
    )


def _superposition_marginal(sup: PhotonSuperposition, cap: int) -> Distribution:
    if not sup.components:
        raise PhysicsError("superposition is vacuum only; nothing to post-select on")
    keep = 1.0 - sup.vacuum_probability
    if keep <= 1e-300:
        raise PhysicsError("superposition is vacuum only; nothing to post-select on")
    g = sup.grid
    ns = [s.n for _, s in sup.components]
    ref = math.lcm(*ns)
    length = ref * (g.m - 1) + 1
    p = np.zeros(length)
    for amp, component in sup.components:
        part = marginal_centroid(component, cap)
        step = ref // component.n
        p[::step] += (abs(amp) ** 2 / keep) * part.p
    return Distribution(
        offset=float(g.positions[0]), spacing=g.dx / ref, p=p, fold_bins=g.m,
        meta={"kind": "marginal", "n": max(ns), "post_selected": 1},
    )


# ---------------------------------------------------------------------------
# M-photon absorption profiles
# ---------------------------------------------------------------------------

def _mphoton_component(state: State, order: int, cap: int) -> np.ndarray:
    """Unnormalized profile of `order` coincident photons, rest summed out."""
    pos = change_basis(state, POSITION)
    g = pos.grid
    if isinstance(pos, ProductSum):
        head = np.prod(
            pos.factors[:, None, :order, :] * pos.factors[None, :, :order, :].conj(),
            axis=2,
        )
        if order < pos.n:
            tail_g = np.einsum(
                "rnm,snm->rsn",
                pos.factors[:, order:, :],
                pos.factors[:, order:, :].conj(),
            ) * g.dx
            tail = np.prod(tail_g, axis=2)
        else:
            tail = np.ones((pos.rank, pos.rank), dtype=np.complex128)
        cc = pos.coeffs[:, None] * pos.coeffs[None, :].conj()
        return np.einsum("rs,rsm->m", cc * tail, head).real
    check_amp_cap(g.m, pos.n, cap)
    rest = pos.n - order
    letters = "abcdefgh"[:rest]
    sub = "x" * order + letters + "->x" + letters
    pinned = np.einsum(sub, pos.amp)
    prof = np.abs(pinned) ** 2
    if rest:
        prof = prof.reshape(g.m, -1).sum(axis=1) * g.dx ** rest
    return prof


def mphoton_absorption(state: State | PhotonSuperposition, order: int,
                       cap: int = DEFAULT_AMP_CAP) -> Distribution:
    """Profile recorded by an `order`-photon absorber at one point.

    For a photon-number superposition the components contribute with
    combinatorial weights binom(N, order) |C_N|^2; components with fewer
    than `order` photons cannot fire the absorber and drop out.  With
    order == N (single Fock component) this reduces exactly to the
    conditional distribution.
    """
    if order < 1:
        raise PhysicsError(f"absorption order must be >= 1, got {order}")
    if isinstance(state, PhotonSuperposition):
        parts = [(amp, comp) for amp, comp in state.components]
        grid = state.grid
    else:
        parts = [(1.0 + 0.0j, state)]
        grid = state.grid
    total = np.zeros(grid.m)
    fired = False
    for amp, comp in parts:
        if comp.n < order:
            continue
        fired = True
        weight = math.comb(comp.n, order) * abs(amp) ** 2
        total += weight * _mphoton_component(comp, order, cap)
    if not fired:
        raise PhysicsError(
            f"no component carries {order} or more photons; the "
            f"{order}-photon absorption profile is identically zero"
        )
    p = _clean_probabilities(total, f"{order}-photon absorption profile")
    return Distribution(
        offset=float(grid.positions[0]), spacing=grid.dx, p=p, fold_bins=grid.m,
        meta={"kind": "mphoton", "order": order},
    )


# ---------------------------------------------------------------------------
# Spectral diagnostics
# ---------------------------------------------------------------------------

def _folded(d: Distribution) -> np.ndarray:
    bins = d.fold_bins or d.p.size
    if bins == d.p.size:
        return d.p
    q = np.zeros(bins)
    np.add.at(q, np.arange(d.p.size) % bins, d.p)
    return q


def spectral_support(d: Distribution, rel_tol: float = 1e-10) -> float:
    """Largest |frequency| whose spectral power exceeds rel_tol of total.

    Computed on the folded (torus) distribution, so for state-derived
    centroid laws the result respects the 2 N k0 bandwidth bound exactly.
    Distributions built directly from data (no fold_bins) are analyzed
    on their full support and can reach the lattice Nyquist frequency.
    """
    q = _folded(d)
    power = np.abs(np.fft.fft(q)) ** 2
    total = float(power.sum())
    if total <= 0.0:
        raise PhysicsError("cannot analyze an all-zero distribution")
    freqs = 2.0 * math.pi * np.fft.fftfreq(q.size, d=d.spacing)
    above = power > rel_tol * total
    return float(np.max(np.abs(freqs[above]), initial=0.0))


def fringe_metrics(d: Distribution) -> FringeMetrics:
    """Dominant fringe period and visibility of a distribution.

    The period comes from the strongest nonzero peak of the folded power
    spectrum, refined by quadratic interpolation of log power.  A peak
    must rise at least 5x above the median nonzero-frequency floor;
    otherwise there is no fringe to speak of.  Visibility is
    (max - min) / (max + min) over the central half of the unfolded
    support, which keeps envelope edges out of the contrast estimate.
    """
    q = _folded(d)
    nbins = q.size
    half = nbins // 2
    if half < 2:
        raise NoFringeError("distribution too short for spectral analysis")
    power = np.abs(np.fft.fft(q)) ** 2
    band = power[1:half + 1]
    floor = float(np.median(band))
    # A fringe is a local maximum strictly above its left neighbor, which
    # excludes the shoulder of the zero-frequency envelope lobe.
    peaks = [
        j for j in range(2, half + 1)
        if power[j] > power[j - 1]
        and (j == half or power[j] >= power[j + 1])
    ]
    if not peaks:
        raise NoFringeError("no fringe detected: spectrum decays from zero frequency")
    j = max(peaks, key=lambda jj: power[jj])
    if power[j] < 5.0 * floor:
        raise NoFringeError(
            f"no fringe detected: strongest peak is {power[j]:.3g} "
            f"against a floor of {floor:.3g}"
        )
    lo, mid, hi = power[j - 1], power[j], power[min(j + 1, nbins - 1)]
    delta = 0.0
    if lo > 0.0 and hi > 0.0:
        llo, lmid, lhi = math.log(lo), math.log(mid), math.log(hi)
        den = llo - 2.0 * lmid + lhi
        if den < 0.0:
            delta = max(-0.5, min(0.5, 0.5 * (llo - lhi) / den))
    freq = (j + delta) * 2.0 * math.pi / (nbins * d.spacing)
    x = d.support
    center = d.offset + 0.5 * d.spacing * (d.p.size - 1)
    span = d.spacing * (d.p.size - 1)
    window = (x >= center - span / 4.0) & (x <= center + span / 4.0)
    seg = d.p[window]
    top, bot = float(seg.max()), float(seg.min())
    if top + bot <= 0.0:
        raise NoFringeError("central window carries no probability")
    return FringeMetrics(
        period=2.0 * math.pi / freq,
        visibility=(top - bot) / (top + bot),
        frequency=freq,
        peak_to_floor=float(band[j - 1] / floor) if floor > 0 else math.inf,
    )


# ---------------------------------------------------------------------------
# Comparisons
# ---------------------------------------------------------------------------

def restrict_to(d: Distribution, offset: float, spacing: float) -> Distribution:
    """Restrict to the sublattice with the given offset and spacing.

    Keeps every bin that lands on the coarser lattice and renormalizes.
    For a state whose photons are independent given the centroid (any
    separable product state), this restriction of the marginal equals
    the conditional distribution exactly.
    """
    ratio = spacing / d.spacing
    factor = round(ratio)
    if factor < 1 or abs(ratio - factor) > 1e-9:
        raise PhysicsError(f"spacing {spacing} is not a multiple of {d.spacing}")
    shift = (offset - d.offset) / d.spacing
    start = round(shift)
    if abs(shift - start) > 1e-6 or not 0 <= start < factor:
        raise PhysicsError("target lattice does not align with the distribution")
    p = d.p[start::factor]
    fold = None
    if d.fold_bins is not None and d.fold_bins % factor == 0:
        fold = d.fold_bins // factor
    return Distribution(
        offset=offset, spacing=spacing, p=p / p.sum(), fold_bins=fold,
        meta=dict(d.meta),
    )


def _check_same_support(a: Distribution, b: Distribution) -> None:
    scale = max(abs(a.spacing), 1e-300)
    if (
        a.p.size != b.p.size
        or abs(a.spacing - b.spacing) > 1e-9 * scale
        or abs(a.offset - b.offset) > 1e-6 * scale
    ):
        raise PhysicsError(
            "distributions live on different supports; restrict one first"
        )


def total_variation(a: Distribution, b: Distribution) -> float:
    _check_same_support(a, b)
    return 0.5 * float(np.abs(a.p - b.p).sum())


def max_abs_deviation(a: Distribution, b: Distribution) -> float:
    _check_same_support(a, b)
    return float(np.max(np.abs(a.p - b.p)))


def align_for_comparison(a: Distribution, b: Distribution) -> tuple[Distribution, Distribution]:
    """Bring two distributions onto a common support if possible.

    If one lattice refines the other by an integer factor, the finer
    distribution is restricted (and renormalized) onto the coarser one.
    """
    if a.spacing > b.spacing * (1 + 1e-9):
        return a, restrict_to(b, a.offset, a.spacing)
    if b.spacing > a.spacing * (1 + 1e-9):
        return restrict_to(a, b.offset, b.spacing), b
    _check_same_support(a, b)
    return a, b


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_CSV_FORMAT = "ocmsim.distribution.v1"


def _fmt(x: float) -> str:
    return repr(float(x))


def distribution_to_csv(d: Distribution) -> str:
    """Render as CSV with '#' header lines carrying support and metadata."""
    out = io.StringIO()
    out.write(f"# format={_CSV_FORMAT}\n")
    out.write(f"# offset={_fmt(d.offset)}\n")
    out.write(f"# spacing={_fmt(d.spacing)}\n")
    out.write(f"# count={d.p.size}\n")
    out.write(f"# fold_bins={d.fold_bins if d.fold_bins is not None else ''}\n")
    for key in sorted(d.meta):
        out.write(f"# meta.{key}={d.meta[key]}\n")
    out.write("X,p\n")
    for j, pj in enumerate(d.p):
        out.write(f"{_fmt(d.offset + j * d.spacing)},{_fmt(pj)}\n")
    return out.getvalue()


def distribution_to_json_dict(d: Distribution) -> dict:
    return {
        "format": _CSV_FORMAT,
        "support": {
            "offset": d.offset,
            "spacing": d.spacing,
            "count": int(d.p.size),
            "fold_bins": d.fold_bins,
        },
        "p": [float(v) for v in d.p],
        "meta": {str(k): d.meta[k] for k in sorted(d.meta)},
    }


def distribution_from_json_dict(obj: dict) -> Distribution:
    try:
        if obj.get("format") != _CSV_FORMAT:
            raise FormatError(f"unknown distribution format {obj.get('format')!r}")
        sup = obj["support"]
        fold = sup.get("fold_bins")
        return Distribution(
            offset=float(sup["offset"]),
            spacing=float(sup["spacing"]),
            p=np.asarray(obj["p"], dtype=np.float64),
            fold_bins=int(fold) if fold is not None else None,
            meta=dict(obj.get("meta", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed distribution JSON: {exc}") from exc


def distribution_from_csv(text: str) -> Distribution:
    header: dict[str, str] = {}
    values: list[float] = []
    saw_columns = False
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, val = body.partition("=")
                header[key.strip()] = val.strip()
            continue
        if not saw_columns:
            if line != "X,p":
                raise FormatError(f"unexpected CSV column line {line!r}")
            saw_columns = True
            continue
        cells = line.split(",")
        if len(cells) != 2:
            raise FormatError(f"malformed CSV row {line!r}")
        values.append(float(cells[1]))
    if header.get("format") != _CSV_FORMAT:
        raise FormatError(f"unknown distribution format {header.get('format')!r}")
    try:
        offset = float(header["offset"])
        spacing = float(header["spacing"])
        count = int(header["count"])
        fold_raw = header.get("fold_bins", "")
        fold = int(fold_raw) if fold_raw else None
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed distribution CSV header: {exc}") from exc
    if count != len(values):
        raise FormatError(f"CSV declares {count} rows but carries {len(values)}")
    meta = {k[5:]: v for k, v in header.items() if k.startswith("meta.")}
    return Distribution(offset=offset, spacing=spacing,
                        p=np.asarray(values), fold_bins=fold, meta=meta)


def parse_distribution(text: str) -> Distribution:
    """Accept either the JSON or the CSV rendering of a distribution."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc}") from exc
        return distribution_from_json_dict(obj)
    return distribution_from_csv(text)
