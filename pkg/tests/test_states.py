"""State constructors: NOON, Gaussian beams, biphotons, classical products."""

import math

import numpy as np
import pytest

from ocmsim import (
    GaussianBeamSpec,
    PhysicsError,
    band_power_outside,
    classical_product,
    correlated_biphoton,
    densify,
    exchange_asymmetry,
    fringe_metrics,
    gaussian_beam,
    gaussian_profile,
    make_grid,
    marginal_centroid,
    noon_state,
    norm,
    superpose_photon_numbers,
)


# ---------------------------------------------------------------------------
# NOON states
# ---------------------------------------------------------------------------

def test_noon_is_normalized_symmetric_and_edge_concentrated(grid64):
    # The arms straddle the band edges by construction (no clipping), so
    # the meaningful statement is fast decay beyond the envelope reach.
    state = noon_state(2, grid64)
    assert norm(state) == pytest.approx(1.0, abs=1e-12)
    assert exchange_asymmetry(densify(state)) < 1e-12

    sigma = 0.125 * grid64.k0
    g_plus = np.abs(state.factors[0, 0]) ** 2
    far = np.abs(grid64.momenta) > grid64.k0 + 6.0 * sigma
    assert g_plus[far].sum() / g_plus.sum() < 1e-8
    assert grid64.momenta[np.argmax(g_plus)] == pytest.approx(grid64.k0)


def test_noon_arm_overlap_matches_gaussian_formula(grid64):
    # Two unit-norm Gaussians centered at -+k0 overlap by
    # exp(-k0^2 / (2 sigma^2)); with the default width k0/8 the arms are
    # orthogonal to fourteen digits.
    state = noon_state(2, grid64)
    g_plus, g_minus = state.factors[0, 0], state.factors[1, 0]
    inner = abs(np.vdot(g_plus, g_minus)) * grid64.dk
    sigma = 0.125 * grid64.k0
    expected = math.exp(-grid64.k0 ** 2 / (2.0 * sigma ** 2))
    assert inner == pytest.approx(expected, rel=1e-6)
    assert inner < 1e-10


@pytest.mark.parametrize("n", [1, 2, 3])
def test_noon_marginal_fringe_period(grid64, n):
    fringes = fringe_metrics(marginal_centroid(noon_state(n, grid64)))
    assert fringes.period == pytest.approx(math.pi / (n * grid64.k0), rel=0.01)
    assert fringes.visibility >= 0.95


def test_noon_rejects_bad_parameters(grid64):
    with pytest.raises(PhysicsError):
        noon_state(0, grid64)
    with pytest.raises(PhysicsError):
        noon_state(2, grid64, sigma_env=0.3 * grid64.k0)  # beyond k0/4
    with pytest.raises(PhysicsError):
        noon_state(2, grid64, sigma_env=-0.1)


def test_noon_rejects_envelope_clipped_at_nyquist():
    # k0 = 1.6 pi and Nyquist 2 pi: a width of 0.2 pi puts the envelope
    # tail past the grid edge while staying within (0, k0/4].
    grid = make_grid(32, 0.5, 0.8)
    with pytest.raises(PhysicsError):
        noon_state(2, grid, sigma_env=0.201 * math.pi)


def test_noon_warns_when_envelope_wraps(grid32):
    with pytest.warns(UserWarning, match="wrap"):
        noon_state(2, grid32, sigma_env=0.15)


# ---------------------------------------------------------------------------
# Gaussian beams
# ---------------------------------------------------------------------------

def test_beam_spec_validation():
    with pytest.raises(PhysicsError):
        GaussianBeamSpec(0, 0.8, 0.0)
    with pytest.raises(PhysicsError):
        GaussianBeamSpec(2, 0.0, 0.0)
    with pytest.raises(PhysicsError):
        GaussianBeamSpec(2, 0.8, 1.5)


def test_beam_reduction_factor():
    assert GaussianBeamSpec(5, 0.8, 0.0).r0 == 1.0
    assert GaussianBeamSpec(3, 0.8, 1.0).r0 == pytest.approx(1.0 / 3.0)
    assert GaussianBeamSpec(4, 0.8, 0.5).r0 == pytest.approx(0.4)


def test_beam_is_normalized_and_symmetric(grid32):
    state = gaussian_beam(GaussianBeamSpec(3, 0.8, 0.5), grid32)
    assert norm(state) == pytest.approx(1.0, abs=1e-12)
    assert exchange_asymmetry(state) < 1e-12


def test_uncorrelated_beam_factorizes(grid32):
    state = gaussian_beam(GaussianBeamSpec(2, 0.8, 0.0), grid32)
    singular = np.linalg.svd(state.amp, compute_uv=False)
    assert singular[1] <= 1e-12 * singular[0]


def test_beam_marginal_variance_matches_covariance(grid32):
    spec = GaussianBeamSpec(2, 0.8, 0.0)
    dist = marginal_centroid(gaussian_beam(spec, grid32)).fold()
    expected = spec.r0 / (4.0 * spec.n0 * spec.delta_k ** 2)
    assert dist.variance() == pytest.approx(expected, rel=0.02)


def test_beam_rejects_width_beyond_band(grid32):
    with pytest.raises(PhysicsError):
        gaussian_beam(GaussianBeamSpec(2, grid32.k0 / 2.9, 0.0), grid32)


def test_beam_warns_in_ghost_zone(grid32):
    with pytest.warns(UserWarning, match="ghost"):
        gaussian_beam(GaussianBeamSpec(2, 0.8, 0.9), grid32)


def test_nearly_singular_correlation_is_clamped(grid32):
    state = gaussian_beam(GaussianBeamSpec(3, 0.8, 1.0), grid32)
    assert np.all(np.isfinite(state.amp))
    assert norm(state) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# Correlated biphotons
# ---------------------------------------------------------------------------

def test_biphoton_is_symmetric_and_band_limited():
    grid = make_grid(256, 0.5, 0.4)
    state = correlated_biphoton(grid, sigma_sum=1.2, sigma_diff=0.1)
    assert norm(state) == pytest.approx(1.0, abs=1e-12)
    assert exchange_asymmetry(state) < 1e-12
    assert band_power_outside(state) <= 1e-15


def test_biphoton_rejects_bad_widths(grid32):
    with pytest.raises(PhysicsError):
        correlated_biphoton(grid32, sigma_sum=0.0, sigma_diff=0.1)
    with pytest.raises(PhysicsError):
        correlated_biphoton(grid32, sigma_sum=1.0, sigma_diff=-0.1)
    with pytest.raises(PhysicsError):
        correlated_biphoton(grid32, sigma_sum=2.0 * grid32.k0, sigma_diff=0.1)


# ---------------------------------------------------------------------------
# Classical products
# ---------------------------------------------------------------------------

def test_gaussian_profile_is_normalized_and_centered(grid64):
    u = gaussian_profile(grid64, sigma_x=2.0, center=3.0)
    assert float(np.sum(np.abs(u) ** 2)) * grid64.dx == pytest.approx(1.0, abs=1e-12)
    assert np.argmax(np.abs(u)) == grid64.index_of_position(3.0)
    with pytest.raises(PhysicsError):
        gaussian_profile(grid64, sigma_x=0.0)


def test_classical_product_validation(grid64):
    u = gaussian_profile(grid64, sigma_x=2.0)
    with pytest.raises(PhysicsError):
        classical_product(0, grid64, u)
    with pytest.raises(PhysicsError):
        classical_product(2, grid64, u[:-1])
    with pytest.raises(PhysicsError):
        classical_product(2, grid64, 2.0 * u)


def test_classical_product_rejects_out_of_band_profile(grid64):
    # Alternating signs shift the spectrum to the grid Nyquist frequency,
    # far outside the +-k0 band, without changing the norm.
    u = gaussian_profile(grid64, sigma_x=2.0)
    flipped = u * ((-1.0) ** np.arange(grid64.m))
    with pytest.raises(PhysicsError):
        classical_product(2, grid64, flipped)


def test_classical_pair_marginal_is_a_self_convolution(grid64):
    u = gaussian_profile(grid64, sigma_x=1.5)
    state = classical_product(2, grid64, u)
    dist = marginal_centroid(state)

    w = np.abs(u) ** 2 * grid64.dx
    expected = np.convolve(w, w)
    assert np.allclose(dist.p, expected, atol=1e-12)
    assert dist.spacing == pytest.approx(grid64.dx / 2.0)


# ---------------------------------------------------------------------------
# Photon-number superpositions
# ---------------------------------------------------------------------------

def test_superposition_accessors(grid64):
    two = noon_state(2, grid64)
    three = noon_state(3, grid64)
    mix = superpose_photon_numbers([(0.5, None), (0.5, three), (1.0 / math.sqrt(2.0), two)])
    assert mix.photon_numbers == (2, 3)
    assert mix.vacuum_probability == pytest.approx(0.25)
    assert mix.grid == grid64


def test_superposition_validation(grid64, grid32):
    two = noon_state(2, grid64)
    with pytest.raises(PhysicsError):
        superpose_photon_numbers([(1.0, None)])  # vacuum only
    with pytest.raises(PhysicsError):
        superpose_photon_numbers([(0.5, None), (0.5, None), (math.sqrt(0.5), two)])
    with pytest.raises(PhysicsError):
        superpose_photon_numbers(
            [(math.sqrt(0.5), two), (math.sqrt(0.5), noon_state(2, grid64, sigma_env=0.2))]
        )
    with pytest.raises(PhysicsError):
        superpose_photon_numbers(
            [(math.sqrt(0.5), two), (math.sqrt(0.5), noon_state(3, grid32))]
        )
    with pytest.raises(PhysicsError):
        superpose_photon_numbers([(0.9, two)])  # sum |C|^2 != 1
    bent = densify(two)
    bent = type(bent)(bent.grid, bent.basis, bent.amp * 1.1)
    with pytest.raises(PhysicsError):
        superpose_photon_numbers([(1.0, bent)])
