"""Monte Carlo photon counting on a pixelated detector array.

Every trial prepares one copy of the state, samples N arrival positions
from |psi|^2, applies detector efficiency as Bernoulli thinning, bins
survivors into pixels of width pixel_factor * dx, and reports the
photon-weighted pixel centroid.

Reproducibility contract
------------------------
Trial t of a run with seed s consumes exactly the uniform variates
produced by a Philox counter generator keyed with s, advanced to
t * stride, where stride depends only on the state shape and detector.
Batching and worker threads change neither the mapping from (s, t) to
an event nor any output; they only decide which trials are evaluated
together.  The per-trial word layout is:

    [0]                  component choice (superpositions only)
    [... path words ...] position draws (1 word for a dense joint draw,
                         N words for per-photon chain draws)
    [next n_max words]   Bernoulli thinning, one word per photon slot
    [padding]            stride is rounded up to a multiple of 4 words
                         (one Philox counter block)

Unused words (eta = 1, dense draw, padding) are reserved but never read.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import PhysicsError
from .lattice import (
    DEFAULT_AMP_CAP,
    POSITION,
    Grid,
    ProductSum,
    State,
    WaveTensor,
    change_basis,
    check_amp_cap,
    densify,
    translate,
)
from .measurement import Distribution
from .states import PhotonSuperposition

_WORD_BUDGET = 1 << 22  # uniforms held in memory per batch


@dataclass(frozen=True)
class DetectorModel:
    """Pixelated photon counter.

    pixel_factor groups that many grid sites into one pixel; eta is the
    per-photon detection probability; a detector that is not number
    resolving cannot distinguish multiple photons on one pixel and flags
    such events as saturated, which are then kept (collapsed to one
    count per pixel) or discarded according to keep_saturated.
    """

    pixel_factor: int = 1
    eta: float = 1.0
    number_resolving: bool = True
    keep_saturated: bool = True

    def __post_init__(self) -> None:
        if self.pixel_factor < 1 or int(self.pixel_factor) != self.pixel_factor:
            raise PhysicsError(f"pixel_factor must be a positive integer, got {self.pixel_factor}")
        if not 0.0 < self.eta <= 1.0:
            raise PhysicsError(f"eta must lie in (0, 1], got {self.eta}")

    def validate_against(self, grid: Grid) -> None:
        if grid.m % self.pixel_factor != 0:
            raise PhysicsError(
                f"pixel_factor {self.pixel_factor} does not divide the grid size {grid.m}"
            )
        # Centroid features live on the single-photon diffraction scale
        # pi/k0 regardless of N, so the pixel pitch is held against that.
        a = self.pixel_factor * grid.dx
        spot = math.pi / grid.k0
        if a > 0.25 * spot:
            warnings.warn(
                f"pixel size {a:.4g} exceeds a quarter of the diffraction "
                f"scale {spot:.4g}; centroid fringes will wash out",
                stacklevel=2,
            )


@dataclass(frozen=True)
class EventRecord:
    trial: int
    pixels: tuple[int, ...]
    counts: tuple[int, ...]
    saturated: bool

    @property
    def m(self) -> int:
        return int(sum(self.counts))


def centroid_of_event(event: EventRecord, grid: Grid, det: DetectorModel) -> float | None:
    """Photon-weighted pixel-center centroid, or None for a discard."""
    if event.saturated and not det.keep_saturated:
        return None
    if event.m == 0:
        return None
    a = det.pixel_factor * grid.dx
    first = float(grid.positions[0]) + 0.5 * (det.pixel_factor - 1) * grid.dx
    acc = sum(c * (first + p * a) for p, c in zip(event.pixels, event.counts))
    return acc / event.m


# ---------------------------------------------------------------------------
# Per-state sampling contexts
# ---------------------------------------------------------------------------

class _DenseCtx:
    """Single joint draw from the flat |psi|^2 CDF."""

    def __init__(self, state: WaveTensor, cap: int):
        check_amp_cap(state.grid.m, state.n, cap)
        pos = change_basis(state, POSITION)
        pmf = np.abs(pos.amp) ** 2
        flat = pmf.ravel()
        total = flat.sum()
        if total <= 0.0:
            raise PhysicsError("state has zero probability mass")
        cdf = np.cumsum(flat / total)
        cdf[-1] = 1.0
        self.cdf = cdf
        self.n = state.n
        self.m = state.grid.m
        self.words = 1

    def draw(self, u: np.ndarray) -> np.ndarray:
        flat_idx = np.searchsorted(self.cdf, u[:, 0], side="right")
        idx = np.empty((u.shape[0], self.n), dtype=np.int64)
        rem = flat_idx
        for axis in range(self.n - 1, -1, -1):
            idx[:, axis] = rem % self.m
            rem = rem // self.m
        return idx


class _ProductCtx:
    """Chain-rule draws for low-rank states; rank 1 degenerates to iid."""

    def __init__(self, state: ProductSum, cap_unused: int):
        pos = change_basis(state, POSITION)
        self.n = pos.n
        self.m = pos.grid.m
        self.rank = pos.rank
        self.words = self.n
        self.factors = pos.factors  # (R, N, M)
        self.coeffs = pos.coeffs
        if self.rank == 1:
            pmf = np.abs(pos.factors[0]) ** 2  # (N, M)
            pmf /= pmf.sum(axis=1, keepdims=True)
            cdfs = np.cumsum(pmf, axis=1)
            cdfs[:, -1] = 1.0
            self.cdfs = cdfs
            return
        # Suffix Gram products S[n, r, s] = prod_{t > n} <u_{s,t}|u_{r,t}> dx.
        du = pos.grid.dx
        gram = np.einsum("rtm,stm->trs", pos.factors, pos.factors.conj()) * du
        suffix = np.empty((self.n, self.rank, self.rank), dtype=np.complex128)
        acc = np.ones((self.rank, self.rank), dtype=np.complex128)
        for t in range(self.n - 1, -1, -1):
            suffix[t] = acc
            acc = acc * gram[t]
        self.suffix = suffix
        # Pair products u_{r,t}(x) u_{s,t}*(x), flattened to (N, R^2, M) so
        # each chain step is one matmul against the prefix-pair weights.
        f = pos.factors.transpose(1, 0, 2)  # (N, R, M)
        self.pair = (f[:, :, None, :] * f.conj()[:, None, :, :]).reshape(
            self.n, self.rank * self.rank, self.m
        )

    def draw(self, u: np.ndarray) -> np.ndarray:
        b = u.shape[0]
        idx = np.empty((b, self.n), dtype=np.int64)
        if self.rank == 1:
            for t in range(self.n):
                idx[:, t] = np.searchsorted(self.cdfs[t], u[:, t], side="right")
            return idx
        # First photon: the prefix is the same for every row, so one
        # shared CDF serves the whole batch.
        pw0 = np.outer(self.coeffs, self.coeffs.conj()) * self.suffix[0]
        q0 = (pw0.reshape(-1) @ self.pair[0]).real
        np.clip(q0, 0.0, None, out=q0)
        cdf0 = np.cumsum(q0)
        if cdf0[-1] <= 0.0:
            raise PhysicsError("chain-rule conditional collapsed to zero")
        pick = np.searchsorted(cdf0, u[:, 0] * cdf0[-1], side="left")
        pick = np.minimum(pick, self.m - 1)
        idx[:, 0] = pick
        alpha = self.coeffs[None, :] * self.factors[:, 0, :].T[pick]  # (B, R)
        for t in range(1, self.n):
            pw = alpha[:, :, None] * alpha.conj()[:, None, :] * self.suffix[t][None]
            q = (pw.reshape(b, -1) @ self.pair[t]).real
            np.clip(q, 0.0, None, out=q)
            cdf = np.cumsum(q, axis=1)
            norm = cdf[:, -1]
            if np.any(norm <= 0.0):
                raise PhysicsError("chain-rule conditional collapsed to zero")
            # row-wise inverse CDF: count thresholds below u * norm
            pick = (cdf < (u[:, t] * norm)[:, None]).sum(axis=1)
            pick = np.minimum(pick, self.m - 1)
            idx[:, t] = pick
            alpha = alpha * self.factors[:, t, :].T[pick]
        return idx


class _SuperpositionCtx:
    def __init__(self, sup: PhotonSuperposition, cap: int, method: str = "auto"):
        self.grid = sup.grid
        self.subs = []
        probs = [sup.vacuum_probability]
        ns = [0]
        for amp, comp in sup.components:
            probs.append(abs(amp) ** 2)
            ns.append(comp.n)
            self.subs.append(_make_ctx(comp, cap, method))
        cdf = np.cumsum(np.asarray(probs))
        cdf /= cdf[-1]
        cdf[-1] = 1.0
        self.cdf = cdf
        self.ns = np.asarray(ns, dtype=np.int64)
        self.n = int(self.ns.max())
        self.words = 1 + max(s.words for s in self.subs)

    def draw(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        b = u.shape[0]
        comp = np.searchsorted(self.cdf, u[:, 0], side="right")
        idx = np.zeros((b, self.n), dtype=np.int64)
        n_of = self.ns[comp]
        for ci, sub in enumerate(self.subs, start=1):
            rows = np.nonzero(comp == ci)[0]
            if rows.size == 0:
                continue
            idx[rows[:, None], np.arange(sub.n)[None, :]] = sub.draw(u[rows, 1:1 + sub.words])
        return idx, n_of


# Above this many joint amplitudes, low-rank states are sampled by the
# chain rule instead of materializing the full tensor.
_DENSE_SAMPLING_CUTOFF = 1 << 20


def _make_ctx(state: State, cap: int, method: str = "auto"):
    if method not in ("auto", "dense", "chain"):
        raise PhysicsError(f"unknown sampling method {method!r}")
    if isinstance(state, WaveTensor):
        if method == "chain":
            raise PhysicsError("chain-rule sampling needs a low-rank factored state")
        return _DenseCtx(state, cap)
    if isinstance(state, ProductSum):
        if method == "chain":
            return _ProductCtx(state, cap)
        small = state.grid.m ** state.n <= min(cap, _DENSE_SAMPLING_CUTOFF)
        if method == "dense" or (state.rank > 1 and small):
            return _DenseCtx(densify(state, cap), cap)
        return _ProductCtx(state, cap)
    raise PhysicsError(f"cannot sample from {type(state).__name__}")


def _context(state: State | PhotonSuperposition, cap: int, method: str = "auto"):
    if isinstance(state, PhotonSuperposition):
        if not state.components:
            raise PhysicsError("superposition is vacuum only; nothing to sample")
        return _SuperpositionCtx(state, cap, method)
    return _make_ctx(state, cap, method)


def _stride(ctx) -> int:
    # Position words plus one thinning word per photon slot, rounded up
    # to a whole number of 4-word Philox blocks so each trial's window
    # starts on a counter boundary and can be addressed by advance().
    raw = ctx.words + ctx.n
    return -(-raw // 4) * 4


def _uniform_window(seed: int, first_trial: int, count: int, stride: int) -> np.ndarray:
    # Philox advance() counts 4-word blocks; stride is a multiple of 4.
    bit = np.random.Philox(key=seed)
    if first_trial:
        bit.advance(first_trial * stride // 4)
    return np.random.Generator(bit).random((count, stride))


def sample_positions(state: State | PhotonSuperposition, rng: np.random.Generator,
                     cap: int = DEFAULT_AMP_CAP, method: str = "auto") -> np.ndarray:
    """Draw one trial's arrival positions (before any detection loss).

    Consumes exactly the position words of the per-trial layout from
    `rng`, so feeding a generator positioned at a trial's stream window
    reproduces that trial's positions.
    """
    ctx = _context(state, cap, method)
    u = rng.random(ctx.words)[None, :]
    if isinstance(ctx, _SuperpositionCtx):
        idx, n_of = ctx.draw(u)
        count = int(n_of[0])
        grid = state.grid
        return grid.positions[idx[0, :count]]
    idx = ctx.draw(u)
    return state.grid.positions[idx[0]]


def detect(positions: np.ndarray, grid: Grid, det: DetectorModel,
           rng: np.random.Generator, trial: int = 0) -> EventRecord:
    """Thin arrivals by eta and bin the survivors into pixels."""
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.size
    u = rng.random(n)
    kept = u < det.eta
    sites = np.round(positions / grid.dx).astype(np.int64) + grid.m // 2
    if np.any((sites < 0) | (sites >= grid.m)):
        raise PhysicsError("arrival position outside the grid")
    pix = sites[kept] // det.pixel_factor
    if pix.size == 0:
        return EventRecord(trial=trial, pixels=(), counts=(), saturated=False)
    uniq, counts = np.unique(pix, return_counts=True)
    saturated = bool(np.any(counts > 1)) and not det.number_resolving
    if saturated:
        counts = np.ones_like(counts)
    return EventRecord(
        trial=trial,
        pixels=tuple(int(p) for p in uniq),
        counts=tuple(int(c) for c in counts),
        saturated=saturated,
    )


# ---------------------------------------------------------------------------
# Histogram accumulation
# ---------------------------------------------------------------------------

@dataclass
class CentroidHistogram:
    """Integer per-m histograms of pixel-centroid sums.

    Events with m surviving photons have centroids on the lattice
    first_pixel_center + (a / m) * key, where key is the integer sum of
    the m pixel indices; per_m[m][key] counts them exactly, so merging
    and statistics stay integer-exact.
    """

    grid: Grid
    detector: DetectorModel
    trials: int
    seed: int
    pixel_count: int
    discarded_empty: int = 0
    saturated_seen: int = 0
    saturated_discarded: int = 0
    per_m: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def pixel_width(self) -> float:
        return self.detector.pixel_factor * self.grid.dx

    @property
    def first_pixel_center(self) -> float:
        return float(self.grid.positions[0]) + 0.5 * (self.detector.pixel_factor - 1) * self.grid.dx

    @property
    def retained(self) -> int:
        return int(sum(int(c.sum()) for c in self.per_m.values()))

    def values_counts(self) -> tuple[np.ndarray, np.ndarray]:
        """All retained centroid values with their exact counts."""
        vals: list[np.ndarray] = []
        cnts: list[np.ndarray] = []
        for m in sorted(self.per_m):
            c = self.per_m[m]
            nz = np.nonzero(c)[0]
            vals.append(self.first_pixel_center + (self.pixel_width / m) * nz)
            cnts.append(c[nz])
        if not vals:
            raise PhysicsError("all trials were discarded; no centroid statistics")
        return np.concatenate(vals), np.concatenate(cnts)

    def pooled_rows(self) -> list[tuple[float, int]]:
        """(X, count) rows pooled across m classes, merged on exact values."""
        vals, cnts = self.values_counts()
        order = np.argsort(vals, kind="stable")
        rows: list[tuple[float, int]] = []
        for v, c in zip(vals[order], cnts[order]):
            if rows and rows[-1][0] == v:
                rows[-1] = (v, rows[-1][1] + int(c))
            else:
                rows.append((float(v), int(c)))
        return rows

    def distribution(self, m: int) -> Distribution:
        """Normalized centroid distribution of the m-survivor class."""
        if m not in self.per_m:
            raise PhysicsError(f"no events with {m} surviving photons")
        c = self.per_m[m].astype(np.float64)
        return Distribution(
            offset=self.first_pixel_center,
            spacing=self.pixel_width / m,
            p=c / c.sum(),
            fold_bins=self.pixel_count,
            meta={"kind": "sampled", "m": m},
        )

    def mean(self) -> float:
        vals, cnts = self.values_counts()
        return float(np.dot(vals, cnts) / cnts.sum())

    def variance(self) -> float:
        vals, cnts = self.values_counts()
        n = cnts.sum()
        if n < 2:
            raise PhysicsError("need at least two retained trials for a variance")
        mu = np.dot(vals, cnts) / n
        return float(np.dot(cnts, (vals - mu) ** 2) / (n - 1))

    def variance_report(self, n_boot: int = 2000, boot_seed: int | None = None) -> "VarianceReport":
        vals, cnts = self.values_counts()
        seed = self.seed if boot_seed is None else boot_seed
        return variance_with_ci(vals, cnts, n_boot=n_boot, seed=seed)


@dataclass(frozen=True)
class VarianceReport:
    mean: float
    variance: float
    ci_low: float
    ci_high: float
    n: int
    n_boot: int


def variance_with_ci(values: np.ndarray, counts: np.ndarray | None = None,
                     n_boot: int = 2000, seed: int = 0) -> VarianceReport:
    """Sample variance with a percentile-bootstrap 95% interval.

    The bootstrap resamples the exact value histogram multinomially,
    which is equivalent to resampling the underlying trials but stays
    cheap even for 1e7 of them.
    """
    values = np.asarray(values, dtype=np.float64)
    if counts is None:
        values, counts = np.unique(values, return_counts=True)
    counts = np.asarray(counts, dtype=np.int64)
    n = int(counts.sum())
    if n < 2:
        raise PhysicsError("need at least two observations for a variance")
    mu = float(np.dot(values, counts) / n)
    var = float(np.dot(counts, (values - mu) ** 2) / (n - 1))
    rng = np.random.default_rng([seed, 0xB00757])
    w = rng.multinomial(n, counts / n, size=n_boot).astype(np.float64)
    m1 = w @ values / n
    m2 = w @ (values ** 2) / n
    boots = (m2 - m1 ** 2) * (n / (n - 1))
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return VarianceReport(mean=mu, variance=var, ci_low=float(lo), ci_high=float(hi),
                          n=n, n_boot=n_boot)


# ---------------------------------------------------------------------------
# The main sampling loop
# ---------------------------------------------------------------------------

def _process_batch(ctx, grid: Grid, det: DetectorModel, seed: int, first: int,
                   count: int, collect: bool):
    stride = _stride(ctx)
    u = _uniform_window(seed, first, count, stride)
    if isinstance(ctx, _SuperpositionCtx):
        idx, n_of = ctx.draw(u[:, :ctx.words])
    else:
        idx = ctx.draw(u[:, :ctx.words])
        n_of = np.full(count, ctx.n, dtype=np.int64)
    n_max = ctx.n
    slot = np.arange(n_max)[None, :]
    alive = slot < n_of[:, None]
    kept = (u[:, ctx.words:ctx.words + n_max] < det.eta) & alive
    pix = idx // det.pixel_factor

    if det.number_resolving:
        m_eff = kept.sum(axis=1)
        pixsum = np.where(kept, pix, 0).sum(axis=1)
        saturated = np.zeros(count, dtype=bool)
    else:
        # Saturation: several photons on one pixel read as one count.
        big = np.iinfo(np.int64).max
        masked = np.where(kept, pix, big)
        masked.sort(axis=1)
        dup = np.zeros_like(kept)
        dup[:, 1:] = (masked[:, 1:] == masked[:, :-1]) & (masked[:, 1:] != big)
        saturated = dup.any(axis=1)
        valid = (masked != big) & ~dup
        m_eff = valid.sum(axis=1)
        pixsum = np.where(valid, masked, 0).sum(axis=1)

    keep_event = m_eff > 0
    if not det.keep_saturated:
        keep_event &= ~saturated
    sat_seen = int(saturated.sum())
    sat_dropped = int((saturated & (m_eff > 0)).sum()) if not det.keep_saturated else 0
    empty = int((m_eff == 0).sum())

    pcount = grid.m // det.pixel_factor
    partial: dict[int, np.ndarray] = {}
    for m in np.unique(m_eff[keep_event]):
        m = int(m)
        rows = keep_event & (m_eff == m)
        partial[m] = np.bincount(pixsum[rows], minlength=m * (pcount - 1) + 1)

    events: list[EventRecord] = []
    if collect:
        for row in range(count):
            hit = pix[row][kept[row]]
            uniq, cnt = (np.unique(hit, return_counts=True) if hit.size else
                         (np.array([], dtype=np.int64), np.array([], dtype=np.int64)))
            sat = bool(np.any(cnt > 1)) and not det.number_resolving
            if sat:
                cnt = np.ones_like(cnt)
            events.append(EventRecord(
                trial=first + row,
                pixels=tuple(int(x) for x in uniq),
                counts=tuple(int(x) for x in cnt),
                saturated=sat,
            ))
    return partial, empty, sat_seen, sat_dropped, events


def run_histogram(state: State | PhotonSuperposition, det: DetectorModel,
                  trials: int, seed: int, threads: int = 1,
                  collect_events: bool = False, cap: int = DEFAULT_AMP_CAP,
                  method: str = "auto",
                  ) -> tuple[CentroidHistogram, list[EventRecord]]:
    """Accumulate per-m centroid histograms over `trials` trials.

    Outputs are a pure function of (state, det, trials, seed, method);
    `threads` only parallelizes batches.  method picks how positions are
    drawn: "dense" materializes the joint tensor, "chain" runs photon by
    photon conditional draws on the factored form, "auto" chooses by
    size.
    """
    if trials < 1:
        raise PhysicsError(f"trials must be >= 1, got {trials}")
    grid = state.grid
    ctx = _context(state, cap, method)
    det.validate_against(grid)
    stride = _stride(ctx)
    batch = max(256, min(65536, _WORD_BUDGET // stride))
    starts = list(range(0, trials, batch))
    jobs = [(first, min(batch, trials - first)) for first in starts]

    def work(job):
        first, count = job
        return _process_batch(ctx, grid, det, seed, first, count, collect_events)

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(job) for job in jobs]

    hist = CentroidHistogram(
        grid=grid, detector=det, trials=trials, seed=seed,
        pixel_count=grid.m // det.pixel_factor,
    )
    events: list[EventRecord] = []
    for partial, empty, sat_seen, sat_dropped, ev in results:
        hist.discarded_empty += empty
        hist.saturated_seen += sat_seen
        hist.saturated_discarded += sat_dropped
        for m, counts in partial.items():
            if m in hist.per_m:
                hist.per_m[m] += counts
            else:
                hist.per_m[m] = counts.copy()
        events.extend(ev)
    return hist, events


@dataclass(frozen=True)
class ShiftReport:
    displacement: float
    mean: float
    variance: float
    ci_low: float
    ci_high: float
    trials: int
    retained: int


def shift_experiment(state: State | PhotonSuperposition, displacement: float,
                     det: DetectorModel, trials: int, seed: int,
                     threads: int = 1, cap: int = DEFAULT_AMP_CAP,
                     method: str = "auto",
                     ) -> tuple[ShiftReport, CentroidHistogram]:
    """Displace the state, then estimate the displacement by centroids.

    The mean centroid estimates the displacement (for a state centered
    at zero beforehand); the variance is the single-shot estimator
    variance whose scaling with N separates standard quantum limit from
    Heisenberg behavior.
    """
    shifted = translate(state, displacement) if not isinstance(state, PhotonSuperposition) \
        else PhotonSuperposition(
            state.vacuum_amplitude,
            tuple((amp, translate(comp, displacement)) for amp, comp in state.components),
        )
    hist, _ = run_histogram(shifted, det, trials, seed, threads=threads, cap=cap,
                            method=method)
    report = hist.variance_report()
    return ShiftReport(
        displacement=displacement,
        mean=report.mean,
        variance=report.variance,
        ci_low=report.ci_low,
        ci_high=report.ci_high,
        trials=trials,
        retained=hist.retained,
    ), hist
