"""Centroid distributions, absorption profiles, spectra, serialization."""

import math

import numpy as np
import pytest

from ocmsim import (
    MOMENTUM,
    POSITION,
    Distribution,
    FormatError,
    GaussianBeamSpec,
    NoFringeError,
    PhysicsError,
    align_for_comparison,
    change_basis,
    classical_product,
    conditional_centroid,
    densify,
    distribution_from_csv,
    distribution_to_csv,
    fringe_metrics,
    gaussian_beam,
    gaussian_profile,
    make_grid,
    marginal_centroid,
    max_abs_deviation,
    mphoton_absorption,
    noon_state,
    parse_distribution,
    restrict_to,
    spectral_support,
    superpose_photon_numbers,
    total_variation,
)
from ocmsim.measurement import distribution_from_json_dict, distribution_to_json_dict

from conftest import random_symmetric_bandlimited


# ---------------------------------------------------------------------------
# Distribution container
# ---------------------------------------------------------------------------

def test_distribution_moments_match_numpy():
    rng = np.random.default_rng(0)
    p = rng.random(31)
    p /= p.sum()
    d = Distribution(offset=-3.0, spacing=0.2, p=p)
    x = -3.0 + 0.2 * np.arange(31)
    assert d.mean() == pytest.approx(np.sum(p * x))
    assert d.variance() == pytest.approx(np.sum(p * (x - np.sum(p * x)) ** 2))


def test_distribution_rejects_empty_vector():
    with pytest.raises(PhysicsError):
        Distribution(offset=0.0, spacing=1.0, p=np.array([]))


def test_fold_merges_periodic_images():
    # Two images one period apart must land in the same folded bin.
    p = np.zeros(16)
    p[2] = 0.5
    p[10] = 0.5
    d = Distribution(offset=-4.0, spacing=1.0, p=p, fold_bins=8)
    folded = d.fold()
    assert folded.p.size == 8
    assert folded.p.sum() == pytest.approx(1.0)
    assert folded.variance() == pytest.approx(0.0, abs=1e-15)
    assert folded.mean() == pytest.approx(-2.0)


def test_fold_requires_period_and_lattice_alignment():
    d = Distribution(offset=0.0, spacing=1.0, p=np.ones(4) / 4.0)
    with pytest.raises(PhysicsError):
        d.fold()
    periodic = Distribution(offset=0.0, spacing=1.0, p=np.ones(4) / 4.0, fold_bins=4)
    with pytest.raises(PhysicsError):
        periodic.fold(center=0.3)


# ---------------------------------------------------------------------------
# Conditional distribution
# ---------------------------------------------------------------------------

def test_conditional_matches_dense_diagonal(grid64):
    state = noon_state(2, grid64)
    dist = conditional_centroid(state)

    dense = densify(change_basis(state, POSITION))
    diag = np.array([dense.amp[i, i] for i in range(grid64.m)])
    expected = np.abs(diag) ** 2
    expected /= expected.sum()
    assert np.allclose(dist.p, expected, atol=1e-14)
    assert dist.spacing == grid64.dx
    assert dist.support[0] == grid64.positions[0]


def test_conditional_low_rank_equals_dense_path(grid32):
    state = noon_state(3, grid32)
    low = conditional_centroid(state)
    dense = conditional_centroid(densify(state))
    assert max_abs_deviation(low, dense) < 1e-12


def test_conditional_rejects_superpositions(grid64):
    sup = superpose_photon_numbers([(1.0, noon_state(2, grid64))])
    with pytest.raises(PhysicsError):
        conditional_centroid(sup)


# ---------------------------------------------------------------------------
# Marginal distribution
# ---------------------------------------------------------------------------

def test_marginal_matches_pairwise_brute_force():
    grid = make_grid(8, 0.5, 0.25)
    rng = np.random.default_rng(23)
    state = random_symmetric_bandlimited(grid, 2, rng)
    dist = marginal_centroid(state)

    amp = change_basis(state, POSITION).amp
    w = np.zeros(2 * grid.m - 1)
    for i in range(grid.m):
        for j in range(grid.m):
            w[i + j] += abs(amp[i, j]) ** 2
    w /= w.sum()
    assert np.allclose(dist.p, w, atol=1e-13)
    assert dist.spacing == pytest.approx(grid.dx / 2.0)
    assert dist.fold_bins == grid.m


def test_marginal_low_rank_equals_dense_path(grid32):
    state = noon_state(3, grid32)
    low = marginal_centroid(state)
    dense = marginal_centroid(densify(state))
    assert max_abs_deviation(low, dense) < 1e-10
    assert total_variation(low, dense) < 1e-10


def test_separable_marginal_restricts_to_conditional(grid32):
    # delta_k = 0.5 keeps the momentum Gaussian at machine zero both at
    # the grid Nyquist edge and at the wrap of the periodic extent; wider
    # or narrower beams pick up truncation artifacts above 1e-10.
    state = gaussian_beam(GaussianBeamSpec(3, 0.5, 0.0), grid32)
    cond = conditional_centroid(state)
    assert total_variation(
        restrict_to(marginal_centroid(state), cond.offset, cond.spacing), cond
    ) < 1e-10


def test_superposition_marginal_lives_on_refined_lattice(grid32):
    two = noon_state(2, grid32)
    three = noon_state(3, grid32)
    sup = superpose_photon_numbers([(0.6, two), (0.8, three)])
    dist = marginal_centroid(sup)

    ref = math.lcm(2, 3)
    assert dist.spacing == pytest.approx(grid32.dx / ref)
    assert dist.p.size == ref * (grid32.m - 1) + 1
    expected = np.zeros(dist.p.size)
    expected[:: ref // 2] += 0.36 * marginal_centroid(two).p
    expected[:: ref // 3] += 0.64 * marginal_centroid(three).p
    assert np.allclose(dist.p, expected, atol=1e-14)
    assert dist.meta["post_selected"] == 1


def test_vacuum_component_leaves_marginal_unchanged(grid32):
    two = noon_state(2, grid32)
    bare = marginal_centroid(two)
    mixed = marginal_centroid(
        superpose_photon_numbers([(0.5, None), (math.sqrt(0.75), two)])
    )
    assert total_variation(bare, mixed) < 1e-15


# ---------------------------------------------------------------------------
# M-photon absorption
# ---------------------------------------------------------------------------

def test_full_order_absorption_equals_conditional(grid64):
    state = noon_state(2, grid64)
    assert max_abs_deviation(
        mphoton_absorption(state, 2), conditional_centroid(state)
    ) < 1e-12


def test_single_photon_absorption_of_classical_beam(grid64):
    u = gaussian_profile(grid64, sigma_x=2.0)
    dist = mphoton_absorption(classical_product(3, grid64, u), 1)
    expected = np.abs(u) ** 2
    expected /= expected.sum()
    assert np.allclose(dist.p, expected, atol=1e-12)


def _mphoton_brute_force(components, order, grid):
    """Direct loop over pinned positions on the densified tensors."""
    total = np.zeros(grid.m)
    for amp, comp in components:
        if comp.n < order:
            continue
        dense = densify(change_basis(comp, POSITION))
        rest = comp.n - order
        weight = math.comb(comp.n, order) * abs(amp) ** 2
        prof = np.zeros(grid.m)
        for i in range(grid.m):
            block = dense.amp[(i,) * order]
            prof[i] = float(np.sum(np.abs(block) ** 2)) * grid.dx ** rest
        total += weight * prof
    return total / total.sum()


def test_superposition_absorption_matches_brute_force(grid32):
    sup = superpose_photon_numbers(
        [(0.6, noon_state(2, grid32)), (0.8, noon_state(3, grid32))]
    )
    dist = mphoton_absorption(sup, 2)
    expected = _mphoton_brute_force(sup.components, 2, grid32)
    assert np.max(np.abs(dist.p - expected)) < 1e-10


def test_absorption_order_validation(grid64):
    state = noon_state(2, grid64)
    with pytest.raises(PhysicsError):
        mphoton_absorption(state, 0)
    with pytest.raises(PhysicsError):
        mphoton_absorption(state, 3)


# ---------------------------------------------------------------------------
# Spectral diagnostics and fringes
# ---------------------------------------------------------------------------

def test_state_marginal_spectrum_respects_band(grid32):
    rng = np.random.default_rng(24)
    grid = make_grid(32, 0.5, 0.25)
    for n in (1, 2, 3):
        state = random_symmetric_bandlimited(grid, n, rng)
        reach = spectral_support(marginal_centroid(state), rel_tol=1e-10)
        assert reach <= 2.0 * n * grid.k0 + grid.dk


def test_data_distribution_can_reach_nyquist():
    p = np.zeros(64)
    p[::2] = 1.0 / 32.0
    d = Distribution(offset=0.0, spacing=0.25, p=p)
    assert spectral_support(d) >= 0.99 * math.pi / 0.25


def test_smooth_distribution_has_no_fringe(grid64):
    u = gaussian_profile(grid64, sigma_x=2.0)
    dist = marginal_centroid(classical_product(2, grid64, u))
    with pytest.raises(NoFringeError):
        fringe_metrics(dist)


def test_fringe_peak_rises_above_floor(grid64):
    metrics = fringe_metrics(marginal_centroid(noon_state(2, grid64)))
    assert metrics.peak_to_floor > 5.0
    assert metrics.frequency == pytest.approx(4.0 * grid64.k0, rel=0.01)


def test_fringe_needs_enough_bins():
    with pytest.raises(NoFringeError):
        fringe_metrics(Distribution(offset=0.0, spacing=1.0, p=np.array([1.0, 0.0])))


# ---------------------------------------------------------------------------
# Support alignment
# ---------------------------------------------------------------------------

def test_restrict_to_picks_the_sublattice():
    p = np.arange(1.0, 10.0)
    p /= p.sum()
    d = Distribution(offset=0.0, spacing=0.5, p=p, fold_bins=None)
    sub = restrict_to(d, 0.5, 1.0)
    expected = p[1::2] / p[1::2].sum()
    assert np.allclose(sub.p, expected)
    assert sub.offset == 0.5


def test_restrict_to_rejects_misaligned_lattices():
    d = Distribution(offset=0.0, spacing=0.5, p=np.ones(9) / 9.0)
    with pytest.raises(PhysicsError):
        restrict_to(d, 0.0, 0.75)
    with pytest.raises(PhysicsError):
        restrict_to(d, 0.3, 1.0)


def test_align_for_comparison_is_symmetric_in_roles(grid32):
    state = gaussian_beam(GaussianBeamSpec(2, 0.8, 0.0), grid32)
    cond = conditional_centroid(state)
    marg = marginal_centroid(state)
    a1, b1 = align_for_comparison(cond, marg)
    a2, b2 = align_for_comparison(marg, cond)
    assert total_variation(a1, b1) == pytest.approx(total_variation(a2, b2))


def test_comparisons_require_common_support():
    a = Distribution(offset=0.0, spacing=1.0, p=np.ones(4) / 4.0)
    b = Distribution(offset=0.5, spacing=1.0, p=np.ones(4) / 4.0)
    with pytest.raises(PhysicsError):
        total_variation(a, b)
    assert total_variation(a, a) == 0.0
    assert max_abs_deviation(a, a) == 0.0


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def test_csv_round_trip_is_exact(grid64):
    dist = marginal_centroid(noon_state(2, grid64))
    back = distribution_from_csv(distribution_to_csv(dist))
    assert np.array_equal(back.p, dist.p)
    assert back.offset == dist.offset
    assert back.spacing == dist.spacing
    assert back.fold_bins == dist.fold_bins
    # CSV headers carry metadata as strings.
    assert back.meta["kind"] == "marginal"
    assert back.meta["n"] == "2"


def test_json_round_trip_is_exact(grid64):
    dist = conditional_centroid(noon_state(2, grid64))
    back = distribution_from_json_dict(distribution_to_json_dict(dist))
    assert np.array_equal(back.p, dist.p)
    assert back.fold_bins == dist.fold_bins
    assert dict(back.meta) == dict(dist.meta)


def test_parse_distribution_sniffs_both_formats(grid64):
    import json

    dist = conditional_centroid(noon_state(1, grid64))
    from_csv = parse_distribution(distribution_to_csv(dist))
    from_json = parse_distribution(json.dumps(distribution_to_json_dict(dist)))
    assert np.array_equal(from_csv.p, from_json.p)


def test_malformed_serializations_raise_format_errors(grid64):
    dist = conditional_centroid(noon_state(1, grid64))
    text = distribution_to_csv(dist)

    with pytest.raises(FormatError):
        distribution_from_csv(text.replace("ocmsim.distribution.v1", "bogus"))
    with pytest.raises(FormatError):
        distribution_from_csv(text.replace("# count=64", "# count=63"))
    with pytest.raises(FormatError):
        distribution_from_csv(text + "1.0,2.0,3.0\n")
    with pytest.raises(FormatError):
        parse_distribution("{not json")
    with pytest.raises(FormatError):
        distribution_from_json_dict({"format": "ocmsim.distribution.v1"})
