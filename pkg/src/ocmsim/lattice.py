"""Discretized transverse axis and N-photon wavefunction algebra.

One transverse dimension, wavelength units (lambda = 1).  A `Grid` holds
M lattice sites of pitch dx, so positions x_a = (a - M/2) dx and momenta
k_j = (j - M/2) dk with dk = 2 pi / (M dx); the product dx * dk * M = 2 pi
is exact by construction.  The optical band edge k0 = 2 pi sin(theta)
is carried on the grid because every state constructor and spectral
check needs it.

N-photon states come in two shapes:

* `WaveTensor`: a dense complex array of shape (M,) * N, in either the
  position or the momentum basis.  Photon 1 is axis 0.
* `ProductSum`: a rank-R sum of product states, sum_r c_r prod_n u_{r,n}.
  This is the only way NOON states with N = 4 or classical beams with
  N = 100 photons stay representable.

Basis changes use the centered unitary DFT matching the convention
A(x) = (2 pi)^(-1/2) Integral dk a(k) exp(i k x), applied per photon
axis.  Norms and overlaps carry the lattice measure (dx or dk per axis),
so a normalized state has sum |amp|^2 * measure == 1.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import cached_property
from itertools import permutations

import numpy as np

from .errors import FormatError, PhysicsError, ResourceCapError

POSITION = "position"
MOMENTUM = "momentum"

# Dense tensors above this many complex amplitudes are refused (2^24
# amplitudes = 256 MiB of complex128).  Callers can raise it explicitly.
DEFAULT_AMP_CAP = 2 ** 24

_TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Shared position/momentum lattice for one transverse axis.

    Attributes
    ----------
    m : int
        Number of lattice sites, a power of two.
    dx : float
        Position pitch.
    k0 : float
        Band edge 2 pi sin(theta); single-photon momenta of physical
        states satisfy |k| <= k0.
    """

    m: int
    dx: float
    k0: float

    @property
    def extent(self) -> float:
        return self.m * self.dx

    @property
    def dk(self) -> float:
        return _TWO_PI / self.extent

    @property
    def nyquist(self) -> float:
        return math.pi / self.dx

    @property
    def sin_theta(self) -> float:
        return self.k0 / _TWO_PI

    @cached_property
    def positions(self) -> np.ndarray:
        x = (np.arange(self.m) - self.m // 2) * self.dx
        x.flags.writeable = False
        return x

    @cached_property
    def momenta(self) -> np.ndarray:
        k = (np.arange(self.m) - self.m // 2) * self.dk
        k.flags.writeable = False
        return k

    def index_of_position(self, x: float) -> int:
        a = round(x / self.dx) + self.m // 2
        if not 0 <= a < self.m:
            raise PhysicsError(f"position {x} outside grid extent {self.extent}")
        return int(a)


def make_grid(m: int, dx: float, sin_theta: float) -> Grid:
    """Build a grid, rejecting parameters that cannot hold the band.

    Requires m a power of two, dx > 0, 0 < sin_theta <= 1, and the band
    edge k0 = 2 pi sin_theta at or below the grid Nyquist pi / dx.
    """
    if m < 2 or (m & (m - 1)) != 0:
        raise PhysicsError(f"grid size must be a power of two >= 2, got {m}")
    if not dx > 0.0:
        raise PhysicsError(f"grid pitch must be positive, got {dx}")
    if not 0.0 < sin_theta <= 1.0:
        raise PhysicsError(f"sin(theta) must lie in (0, 1], got {sin_theta}")
    k0 = _TWO_PI * sin_theta
    nyquist = math.pi / dx
    if k0 > nyquist * (1.0 + 1e-12):
        raise PhysicsError(
            f"band edge k0={k0:.6g} exceeds grid Nyquist pi/dx={nyquist:.6g}; "
            f"reduce dx below {math.pi / k0:.6g} or reduce sin(theta)"
        )
    return Grid(m=m, dx=dx, k0=k0)


def _measure(grid: Grid, basis: str) -> float:
    return grid.dx if basis == POSITION else grid.dk


def _check_basis(basis: str) -> None:
    if basis not in (POSITION, MOMENTUM):
        raise PhysicsError(f"unknown basis {basis!r}")


# ---------------------------------------------------------------------------
# Dense N-photon tensors
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WaveTensor:
    """Dense N-photon amplitude tensor on a grid, photon 1 on axis 0."""

    grid: Grid
    basis: str
    amp: np.ndarray

    def __post_init__(self) -> None:
        _check_basis(self.basis)
        amp = np.ascontiguousarray(self.amp, dtype=np.complex128)
        if amp.ndim < 1 or any(s != self.grid.m for s in amp.shape):
            raise PhysicsError(
                f"amplitude shape {amp.shape} does not match grid size {self.grid.m}"
            )
        object.__setattr__(self, "amp", amp)

    @property
    def n(self) -> int:
        return self.amp.ndim

    @property
    def measure(self) -> float:
        return _measure(self.grid, self.basis) ** self.n


@dataclass(frozen=True, eq=False)
class ProductSum:
    """Low-rank state sum_r coeffs[r] * prod_n factors[r, n, :].

    factors has shape (rank, N, M); all terms share the grid and basis.
    """

    grid: Grid
    basis: str
    coeffs: np.ndarray
    factors: np.ndarray

    def __post_init__(self) -> None:
        _check_basis(self.basis)
        coeffs = np.ascontiguousarray(self.coeffs, dtype=np.complex128)
        factors = np.ascontiguousarray(self.factors, dtype=np.complex128)
        if coeffs.ndim != 1 or factors.ndim != 3:
            raise PhysicsError("ProductSum needs coeffs (R,) and factors (R, N, M)")
        if factors.shape[0] != coeffs.shape[0] or factors.shape[2] != self.grid.m:
            raise PhysicsError(
                f"factor shape {factors.shape} inconsistent with rank "
                f"{coeffs.shape[0]} and grid size {self.grid.m}"
            )
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "factors", factors)

    @property
    def n(self) -> int:
        return self.factors.shape[1]

    @property
    def rank(self) -> int:
        return self.coeffs.shape[0]

    def factor_grams(self) -> np.ndarray:
        """Per-photon overlap matrices G[n, r, s] = <u_{r,n}|u_{s,n}>."""
        du = _measure(self.grid, self.basis)
        return np.einsum("rnm,snm->nrs", self.factors.conj(), self.factors) * du


State = WaveTensor | ProductSum


# ---------------------------------------------------------------------------
# Norms and overlaps
# ---------------------------------------------------------------------------

def norm(state: State) -> float:
    """L2 norm including the lattice measure."""
    if isinstance(state, WaveTensor):
        return math.sqrt(float(np.vdot(state.amp, state.amp).real) * state.measure)
    gram = state.factor_grams()
    pair = np.prod(gram, axis=0)  # prod over photons -> (R, R)
    val = np.einsum("r,rs,s->", state.coeffs.conj(), pair, state.coeffs)
    return math.sqrt(max(val.real, 0.0))


def overlap(a: State, b: State) -> complex:
    """<a|b> with the lattice measure.  Mixed representations: densify first."""
    if a.grid != b.grid or a.basis != b.basis or a.n != b.n:
        raise PhysicsError("overlap needs matching grid, basis and photon number")
    if isinstance(a, WaveTensor) and isinstance(b, WaveTensor):
        return complex(np.vdot(a.amp, b.amp)) * a.measure
    if isinstance(a, ProductSum) and isinstance(b, ProductSum):
        du = _measure(a.grid, a.basis)
        g = np.einsum("rnm,snm->nrs", a.factors.conj(), b.factors) * du
        pair = np.prod(g, axis=0)
        return complex(np.einsum("r,rs,s->", a.coeffs.conj(), pair, b.coeffs))
    raise PhysicsError("overlap of mixed dense/low-rank states: densify first")


def normalize(state: State) -> State:
    """Scale to unit norm; zero-norm input is a physics error."""
    nrm = norm(state)
    if nrm < 1e-150:
        raise PhysicsError("cannot normalize a zero-norm state")
    if isinstance(state, WaveTensor):
        return WaveTensor(state.grid, state.basis, state.amp / nrm)
    return ProductSum(state.grid, state.basis, state.coeffs / nrm, state.factors)


# ---------------------------------------------------------------------------
# Basis changes
# ---------------------------------------------------------------------------

def _to_position_axes(amp: np.ndarray, grid: Grid) -> np.ndarray:
    # Centered unitary inverse DFT on every axis.  With numpy's backward
    # normalization, ifftn carries 1/M per axis, so the remaining scale
    # per axis is M dk / sqrt(2 pi) = sqrt(2 pi) / dx.
    scale = (math.sqrt(_TWO_PI) / grid.dx) ** amp.ndim
    return np.fft.fftshift(np.fft.ifftn(np.fft.ifftshift(amp))) * scale


def _to_momentum_axes(amp: np.ndarray, grid: Grid) -> np.ndarray:
    scale = (grid.dx / math.sqrt(_TWO_PI)) ** amp.ndim
    return np.fft.fftshift(np.fft.fftn(np.fft.ifftshift(amp))) * scale


def _factor_to_position(factors: np.ndarray, grid: Grid) -> np.ndarray:
    scale = math.sqrt(_TWO_PI) / grid.dx
    return np.fft.fftshift(
        np.fft.ifft(np.fft.ifftshift(factors, axes=-1), axis=-1), axes=-1
    ) * scale


def _factor_to_momentum(factors: np.ndarray, grid: Grid) -> np.ndarray:
    scale = grid.dx / math.sqrt(_TWO_PI)
    return np.fft.fftshift(
        np.fft.fft(np.fft.ifftshift(factors, axes=-1), axis=-1), axes=-1
    ) * scale


def change_basis(state: State, basis: str) -> State:
    """Unitary transform to `basis`; a no-op if already there.

    The N-dimensional transform factorizes per photon axis, so dense and
    low-rank representations transform consistently: densify commutes
    with change_basis to rounding error.
    """
    _check_basis(basis)
    if state.basis == basis:
        return state
    if isinstance(state, WaveTensor):
        if basis == POSITION:
            amp = _to_position_axes(state.amp, state.grid)
        else:
            amp = _to_momentum_axes(state.amp, state.grid)
        return WaveTensor(state.grid, basis, amp)
    if basis == POSITION:
        factors = _factor_to_position(state.factors, state.grid)
    else:
        factors = _factor_to_momentum(state.factors, state.grid)
    return ProductSum(state.grid, basis, state.coeffs.copy(), factors)


# ---------------------------------------------------------------------------
# Symmetrization, band projection, translation
# ---------------------------------------------------------------------------

def symmetrize(state: WaveTensor) -> WaveTensor:
    """Project onto the exchange-symmetric subspace and renormalize.

    Averages the tensor over all N! axis permutations.  A state with no
    symmetric component (e.g. antisymmetric input) has zero projection
    and is rejected.
    """
    if not isinstance(state, WaveTensor):
        raise PhysicsError("symmetrize expects a dense WaveTensor")
    n = state.n
    if n == 1:
        return state
    acc = np.zeros_like(state.amp)
    for perm in permutations(range(n)):
        acc += state.amp.transpose(perm)
    acc /= math.factorial(n)
    projected = WaveTensor(state.grid, state.basis, acc)
    # Relative threshold: an antisymmetric input leaves only rounding noise.
    if norm(projected) < 1e-12 * norm(state):
        raise PhysicsError("state has no exchange-symmetric component")
    return normalize(projected)


def exchange_asymmetry(state: WaveTensor) -> float:
    """Max |amp - amp.transpose| over adjacent-swap permutations."""
    worst = 0.0
    for i in range(state.n - 1):
        axes = list(range(state.n))
        axes[i], axes[i + 1] = axes[i + 1], axes[i]
        worst = max(worst, float(np.max(np.abs(state.amp - state.amp.transpose(axes)))))
    return worst


def bandlimit_project(state: WaveTensor, grid: Grid | None = None) -> tuple[WaveTensor, float]:
    """Zero all amplitudes with any photon momentum outside |k| <= k0.

    Returns the renormalized state and the discarded power fraction.
    Grid momenta exactly at +-k0 are kept (the edge is part of the band).
    """
    g = grid or state.grid
    if g != state.grid:
        raise PhysicsError("bandlimit_project grid does not match the state grid")
    mom = change_basis(state, MOMENTUM)
    edge = g.k0 * (1.0 + 1e-12)
    keep_1d = np.abs(g.momenta) <= edge
    amp = mom.amp.copy()
    for axis in range(amp.ndim):
        shape = [1] * amp.ndim
        shape[axis] = g.m
        amp *= keep_1d.reshape(shape)
    total = float(np.vdot(mom.amp, mom.amp).real)
    kept = float(np.vdot(amp, amp).real)
    if total <= 0.0:
        raise PhysicsError("cannot band-project a zero state")
    discarded = max(0.0, 1.0 - kept / total)
    if kept <= 0.0:
        raise PhysicsError("band projection removed all power")
    projected = normalize(WaveTensor(g, MOMENTUM, amp))
    return change_basis(projected, state.basis), discarded


def band_power_outside(state: State) -> float:
    """Fraction of |amp|^2 with any photon momentum beyond the band edge."""
    if isinstance(state, WaveTensor):
        _, discarded = bandlimit_project(state)
        return discarded
    mom = change_basis(state, MOMENTUM)
    g = state.grid
    keep = np.abs(g.momenta) <= g.k0 * (1.0 + 1e-12)
    masked = ProductSum(g, MOMENTUM, mom.coeffs, mom.factors * keep)
    total = norm(mom) ** 2
    kept = norm(masked) ** 2
    return max(0.0, 1.0 - kept / total)


def translate(state: State, d: float) -> State:
    """Rigidly displace the state by d: psi(x_1..x_N) -> psi(x_1 - d ...).

    Implemented as the momentum-space phase prod_n exp(-i k_n d), so the
    momentum-basis probability density |amp|^2 is untouched.  Positions
    shift modulo the periodic extent; displacements beyond L/2 wrap.
    """
    g = state.grid
    phase = np.exp(-1j * g.momenta * d)
    if isinstance(state, WaveTensor):
        mom = change_basis(state, MOMENTUM)
        amp = mom.amp.copy()
        for axis in range(amp.ndim):
            shape = [1] * amp.ndim
            shape[axis] = g.m
            amp *= phase.reshape(shape)
        return change_basis(WaveTensor(g, MOMENTUM, amp), state.basis)
    mom = change_basis(state, MOMENTUM)
    shifted = ProductSum(g, MOMENTUM, mom.coeffs.copy(), mom.factors * phase)
    return change_basis(shifted, state.basis)


# ---------------------------------------------------------------------------
# Densification
# ---------------------------------------------------------------------------

def check_amp_cap(m: int, n: int, cap: int) -> None:
    if m ** n > cap:
        raise ResourceCapError(
            f"dense tensor of {m}^{n} = {m ** n} amplitudes exceeds the cap of "
            f"{cap} amplitudes; raise the cap or use the low-rank path"
        )


def densify(state: State, cap: int = DEFAULT_AMP_CAP) -> WaveTensor:
    """Expand a ProductSum into a dense WaveTensor, subject to the cap."""
    if isinstance(state, WaveTensor):
        check_amp_cap(state.grid.m, state.n, cap)
        return state
    check_amp_cap(state.grid.m, state.n, cap)
    amp = np.zeros((state.grid.m,) * state.n, dtype=np.complex128)
    for r in range(state.rank):
        term = state.coeffs[r] * state.factors[r, 0]
        for axis in range(1, state.n):
            term = np.multiply.outer(term, state.factors[r, axis])
        amp += term
    return WaveTensor(state.grid, state.basis, amp)


# ---------------------------------------------------------------------------
# Binary state container
# ---------------------------------------------------------------------------
#
# Fixed little-endian layout so that save -> load -> save is
# byte-identical:
#
#   magic     8s   b"OCMSTAT1"
#   version   u32  1
#   kind      u32  1 = dense, 2 = product sum
#   basis     u32  0 = position, 1 = momentum
#   m         u64
#   n         u64
#   dx        f64
#   k0        f64
#   [rank     u64  product sums only]
#   payload   complex128 little-endian, C order (photon 1 slowest);
#             product sums store coeffs then factors.

_MAGIC = b"OCMSTAT1"
_HEADER = struct.Struct("<8sIIIQQdd")
_RANK = struct.Struct("<Q")
_KIND_WAVE = 1
_KIND_PRODUCT_SUM = 2
_BASIS_CODE = {POSITION: 0, MOMENTUM: 1}
_BASIS_NAME = {0: POSITION, 1: MOMENTUM}


def save_state(path, state: State) -> None:
    """Write a state to the binary container at `path`."""
    kind = _KIND_WAVE if isinstance(state, WaveTensor) else _KIND_PRODUCT_SUM
    head = _HEADER.pack(
        _MAGIC, 1, kind, _BASIS_CODE[state.basis],
        state.grid.m, state.n, state.grid.dx, state.grid.k0,
    )
    with open(path, "wb") as fh:
        fh.write(head)
        if isinstance(state, WaveTensor):
            fh.write(np.ascontiguousarray(state.amp, dtype="<c16").tobytes())
        else:
            fh.write(_RANK.pack(state.rank))
            fh.write(np.ascontiguousarray(state.coeffs, dtype="<c16").tobytes())
            fh.write(np.ascontiguousarray(state.factors, dtype="<c16").tobytes())


def load_state(path) -> State:
    """Read a state container written by `save_state`."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read state container {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: truncated state container")
    magic, version, kind, basis_code, m, n, dx, k0 = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise FormatError(f"{path}: not a state container (bad magic {magic!r})")
    if version != 1:
        raise FormatError(f"{path}: unsupported container version {version}")
    if basis_code not in _BASIS_NAME:
        raise FormatError(f"{path}: unknown basis code {basis_code}")
    grid = make_grid(int(m), float(dx), float(k0) / _TWO_PI)
    offset = _HEADER.size
    if kind == _KIND_WAVE:
        count = m ** n
        payload = raw[offset:]
        if len(payload) != count * 16:
            raise FormatError(f"{path}: payload size {len(payload)} != {count * 16}")
        amp = np.frombuffer(payload, dtype="<c16").reshape((m,) * n).copy()
        return WaveTensor(grid, _BASIS_NAME[basis_code], amp)
    if kind == _KIND_PRODUCT_SUM:
        (rank,) = _RANK.unpack_from(raw, offset)
        offset += _RANK.size
        expect = rank * 16 + rank * n * m * 16
        payload = raw[offset:]
        if len(payload) != expect:
            raise FormatError(f"{path}: payload size {len(payload)} != {expect}")
        coeffs = np.frombuffer(payload[: rank * 16], dtype="<c16").copy()
        factors = (
            np.frombuffer(payload[rank * 16:], dtype="<c16")
            .reshape(rank, n, m)
            .copy()
        )
        return ProductSum(grid, _BASIS_NAME[basis_code], coeffs, factors)
    raise FormatError(f"{path}: unknown state kind {kind}")
