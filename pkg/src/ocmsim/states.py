"""Constructors for the N-photon states the simulator cares about.

All momentum-space Gaussians below use amplitude profiles of the form
exp(-q^2 / (4 sigma^2)), so `sigma` is always the rms width of the
corresponding |amplitude|^2 distribution.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import PhysicsError
from .lattice import (
    DEFAULT_AMP_CAP,
    MOMENTUM,
    POSITION,
    Grid,
    ProductSum,
    State,
    WaveTensor,
    bandlimit_project,
    change_basis,
    check_amp_cap,
    norm,
    normalize,
)

log = logging.getLogger(__name__)

# Fraction of k0 used for the NOON envelope width when none is given.
DEFAULT_NOON_ENVELOPE_FRACTION = 0.125


def noon_state(n: int, grid: Grid, sigma_env: float | None = None) -> ProductSum:
    """N-photon NOON state: (|N at +k0> + |N at -k0>) / sqrt(2).

    Each arm is a product of identical Gaussian envelopes centered on
    one band edge, g_pm(k) ~ exp(-(k -+ k0)^2 / (4 sigma_env^2)).  The
    envelopes are evaluated on the grid without clipping at |k| = k0,
    which keeps them exactly symmetric about their centers; that
    symmetry is what pins the centroid fringe period to pi / (n k0).
    The amplitude weight this leaves outside the band is of order
    erfc(k0 / (sigma_env sqrt(2))) and is negligible for the allowed
    envelope widths (sigma_env <= k0 / 4).

    Cross terms between the arms carry per-photon overlaps
    exp(-k0^2 / (2 sigma_env^2)), so the two product terms are
    effectively orthogonal for narrow envelopes.
    """
    if n < 1:
        raise PhysicsError(f"photon number must be >= 1, got {n}")
    k0 = grid.k0
    if sigma_env is None:
        sigma_env = DEFAULT_NOON_ENVELOPE_FRACTION * k0
    if not 0.0 < sigma_env <= k0 / 4.0:
        raise PhysicsError(
            f"NOON envelope width {sigma_env:.6g} outside (0, k0/4]; "
            f"wider envelopes leave non-negligible weight outside the band"
        )
    if k0 + 3.0 * sigma_env > grid.nyquist:
        raise PhysicsError(
            "NOON envelope would be truncated at the grid Nyquist edge; "
            "decrease dx or the envelope width"
        )
    # Envelope position spread 1/(2 sigma_env) must sit well inside the
    # periodic extent or the fringe pattern wraps onto itself.
    if 3.0 / (2.0 * sigma_env) > grid.extent / 2.0:
        warnings.warn(
            "NOON envelope spans the periodic extent; centroid envelope "
            "will wrap around",
            stacklevel=2,
        )
    k = grid.momenta
    g_plus = np.exp(-((k - k0) ** 2) / (4.0 * sigma_env ** 2)).astype(np.complex128)
    g_minus = np.exp(-((k + k0) ** 2) / (4.0 * sigma_env ** 2)).astype(np.complex128)
    for g in (g_plus, g_minus):
        g /= math.sqrt(float(np.sum(np.abs(g) ** 2)) * grid.dk)
    factors = np.stack(
        [np.tile(g_plus, (n, 1)), np.tile(g_minus, (n, 1))]
    )
    state = ProductSum(grid, MOMENTUM, np.array([1.0, 1.0], dtype=np.complex128), factors)
    return normalize(state)


@dataclass(frozen=True)
class GaussianBeamSpec:
    """Parameters of a momentum-correlated Gaussian beam.

    n0 photons with joint momentum covariance
    Sigma = delta_k^2 [(1 - rho) I + rho J], i.e. each photon has rms
    momentum width delta_k and photon pairs have correlation rho.  The
    centroid-variance reduction factor relative to an uncorrelated beam
    of the same width follows directly:

        r0 = 1 / (1 + (n0 - 1) rho)

    and the exact centroid variance of the continuum state is
    r0 / (4 n0 delta_k^2).
    """

    n0: int
    delta_k: float
    rho: float

    def __post_init__(self) -> None:
        if self.n0 < 1:
            raise PhysicsError(f"photon number must be >= 1, got {self.n0}")
        if not self.delta_k > 0.0:
            raise PhysicsError(f"delta_k must be positive, got {self.delta_k}")
        if not 0.0 <= self.rho <= 1.0:
            raise PhysicsError(f"rho must lie in [0, 1], got {self.rho}")

    @property
    def r0(self) -> float:
        return 1.0 / (1.0 + (self.n0 - 1) * self.rho)


# rho is clamped here before inverting the covariance; rho = 1 exactly
# would make it singular.
_RHO_CLAMP = 1.0 - 1e-6


def gaussian_beam(spec: GaussianBeamSpec, grid: Grid, cap: int = DEFAULT_AMP_CAP) -> WaveTensor:
    """Dense momentum-basis Gaussian beam for the given spec.

    Not band-projected: clipping would break the exact separability of
    centroid and relative coordinates.  The weight this leaves outside
    the band is about n0 * erfc(k0 / (delta_k sqrt(2))); keep
    delta_k <= k0 / 4.5 if you need it below 1e-4 for n0 <= 4.
    """
    n = spec.n0
    check_amp_cap(grid.m, n, cap)
    if spec.delta_k > grid.k0 / 3.0:
        raise PhysicsError(
            f"delta_k={spec.delta_k:.6g} exceeds k0/3={grid.k0 / 3.0:.6g}; "
            f"the beam would spill far outside the band"
        )
    rho = min(spec.rho, _RHO_CLAMP)
    # Sigma^-1 = a I + b J for Sigma = delta_k^2 [(1-rho) I + rho J].
    a = 1.0 / (spec.delta_k ** 2 * (1.0 - rho))
    b = -rho / (spec.delta_k ** 2 * (1.0 - rho) * (1.0 + (n - 1) * rho))
    sigma_rel = spec.delta_k * math.sqrt(1.0 - rho)
    if grid.dk / 20.0 < sigma_rel < grid.dk:
        warnings.warn(
            "relative-momentum width is comparable to the momentum pitch; "
            "the lattice marginal may grow ghost images",
            stacklevel=2,
        )
    k = grid.momenta
    shape_of = lambda axis: [grid.m if ax == axis else 1 for ax in range(n)]
    ksum = np.zeros((grid.m,) * n)
    ksq = np.zeros((grid.m,) * n)
    for axis in range(n):
        view = k.reshape(shape_of(axis))
        ksum += view
        ksq += view ** 2
    quad = a * ksq
    ksum *= ksum
    quad += b * ksum
    amp = np.exp(-0.25 * quad).astype(np.complex128)
    return normalize(WaveTensor(grid, MOMENTUM, amp))


def correlated_biphoton(grid: Grid, sigma_sum: float, sigma_diff: float,
                        cap: int = DEFAULT_AMP_CAP) -> WaveTensor:
    """Two-photon state G(k1 + k2) H(k1 - k2) with Gaussian G and H.

    sigma_sum is the rms width of the total momentum k1 + k2, sigma_diff
    that of the relative momentum k1 - k2.  sigma_diff << sigma_sum is
    the momentum-correlated regime: relative momenta pinned, relative
    positions delocalized, so the centroid marginal collapses onto the
    conditional distribution while the total momentum is free to fill
    the whole 2 k0 band.  The state is band projected and renormalized;
    single-photon widths approaching the band edge lose visible power
    to the projection.
    """
    check_amp_cap(grid.m, 2, cap)
    if not (sigma_sum > 0.0 and sigma_diff > 0.0):
        raise PhysicsError("biphoton widths must be positive")
    sigma_single = 0.5 * math.sqrt(sigma_sum ** 2 + sigma_diff ** 2)
    if sigma_single > grid.k0 / 2.0:
        raise PhysicsError(
            f"single-photon width {sigma_single:.6g} exceeds k0/2; "
            f"the state would not fit the band"
        )
    k1 = grid.momenta[:, None]
    k2 = grid.momenta[None, :]
    amp = np.exp(
        -((k1 + k2) ** 2) / (4.0 * sigma_sum ** 2)
        - ((k1 - k2) ** 2) / (4.0 * sigma_diff ** 2)
    ).astype(np.complex128)
    state = normalize(WaveTensor(grid, MOMENTUM, amp))
    projected, discarded = bandlimit_project(state)
    log.debug("biphoton band projection discarded %.3g of the power", discarded)
    return projected


def gaussian_profile(grid: Grid, sigma_x: float, center: float = 0.0) -> np.ndarray:
    """Unit-norm position-basis Gaussian with rms intensity width sigma_x."""
    if not sigma_x > 0.0:
        raise PhysicsError(f"profile width must be positive, got {sigma_x}")
    u = np.exp(-((grid.positions - center) ** 2) / (4.0 * sigma_x ** 2)).astype(np.complex128)
    nrm = math.sqrt(float(np.sum(np.abs(u) ** 2)) * grid.dx)
    if nrm < 1e-150:
        raise PhysicsError("profile has no support on the grid")
    return u / nrm


# Relative power a classical profile may carry outside the band.
_PROFILE_BAND_TOL = 1e-6


def classical_product(n: int, grid: Grid, profile: np.ndarray) -> ProductSum:
    """n independent photons sharing one position-basis profile.

    The profile must be unit-normalized on the lattice and effectively
    band-limited (out-of-band power below 1e-6).
    """
    if n < 1:
        raise PhysicsError(f"photon number must be >= 1, got {n}")
    u = np.ascontiguousarray(profile, dtype=np.complex128)
    if u.shape != (grid.m,):
        raise PhysicsError(f"profile shape {u.shape} does not match grid size {grid.m}")
    power = float(np.sum(np.abs(u) ** 2)) * grid.dx
    if abs(power - 1.0) > 1e-8:
        raise PhysicsError(f"profile must be unit-normalized, got |u|^2 = {power:.12g}")
    single = ProductSum(grid, POSITION, np.array([1.0 + 0.0j]), u.reshape(1, 1, grid.m))
    mom = change_basis(single, MOMENTUM).factors[0, 0]
    outside = float(np.sum(np.abs(mom[np.abs(grid.momenta) > grid.k0 * (1 + 1e-12)]) ** 2)) * grid.dk
    if outside > _PROFILE_BAND_TOL:
        raise PhysicsError(
            f"profile carries {outside:.3g} of its power outside the band "
            f"(limit {_PROFILE_BAND_TOL:g}); smooth or widen it"
        )
    return ProductSum(grid, POSITION, np.array([1.0 + 0.0j]), np.tile(u, (1, n, 1)))


@dataclass(frozen=True, eq=False)
class PhotonSuperposition:
    """Coherent superposition of states with different photon numbers.

    components maps photon number to (amplitude, state); the optional
    vacuum amplitude has no state.  Detection post-selects on at least
    one photon arriving, so the vacuum term only shows up as a discard
    fraction, never in the shape of a distribution.
    """

    vacuum_amplitude: complex
    components: tuple[tuple[complex, State], ...]

    @property
    def grid(self) -> Grid:
        if not self.components:
            raise PhysicsError("superposition has no photonic component")
        return self.components[0][1].grid

    @property
    def vacuum_probability(self) -> float:
        return abs(self.vacuum_amplitude) ** 2

    @property
    def photon_numbers(self) -> tuple[int, ...]:
        return tuple(s.n for _, s in self.components)


def superpose_photon_numbers(
    components: list[tuple[complex, State | None]],
) -> PhotonSuperposition:
    """Combine (amplitude, state) pairs into a photon-number superposition.

    Pass state=None for the vacuum term.  Amplitudes must satisfy
    sum |C|^2 = 1 and each photonic component must itself be
    unit-normalized; photon numbers must be distinct.
    """
    vacuum = 0.0 + 0.0j
    seen_vacuum = False
    photonic: list[tuple[complex, State]] = []
    for amp, state in components:
        amp = complex(amp)
        if state is None:
            if seen_vacuum:
                raise PhysicsError("duplicate vacuum component")
            seen_vacuum = True
            vacuum = amp
            continue
        photonic.append((amp, state))
    if not photonic and abs(vacuum) > 0:
        raise PhysicsError("superposition needs at least one photonic component")
    ns = [s.n for _, s in photonic]
    if len(set(ns)) != len(ns):
        raise PhysicsError(f"duplicate photon numbers in superposition: {sorted(ns)}")
    grids = {s.grid for _, s in photonic}
    if len(grids) > 1:
        raise PhysicsError("superposition components must share one grid")
    total = abs(vacuum) ** 2 + sum(abs(a) ** 2 for a, _ in photonic)
    if abs(total - 1.0) > 1e-9:
        raise PhysicsError(f"superposition amplitudes must satisfy sum|C|^2=1, got {total:.12g}")
    for amp, state in photonic:
        nrm = norm(state)
        if abs(nrm - 1.0) > 1e-8:
            raise PhysicsError(
                f"component with {state.n} photons is not normalized (norm {nrm:.12g})"
            )
    photonic.sort(key=lambda pair: pair[1].n)
    return PhotonSuperposition(vacuum, tuple(photonic))
