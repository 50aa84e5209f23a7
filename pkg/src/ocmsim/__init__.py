"""Lattice simulator for centroid-resolved N-photon interference.

Core objects live in submodules; the most common entry points are
re-exported here.  The service and CLI layers are import-on-demand
(`ocmsim.service`, `ocmsim.cli`) so the numerical core stays free of
web dependencies.
"""

from .errors import FormatError, NoFringeError, OcmError, PhysicsError, ResourceCapError
from .lattice import (
    DEFAULT_AMP_CAP,
    MOMENTUM,
    POSITION,
    Grid,
    ProductSum,
    WaveTensor,
    band_power_outside,
    bandlimit_project,
    change_basis,
    densify,
    exchange_asymmetry,
    load_state,
    make_grid,
    norm,
    normalize,
    overlap,
    save_state,
    symmetrize,
    translate,
)
from .loss import (
    LossParams,
    SweepRow,
    classical_width_sq,
    loss_sweep,
    lossy_centroid_variance,
    reduced_centroid,
    reduced_position_density,
    thin_positions,
)
from .measurement import (
    Distribution,
    FringeMetrics,
    align_for_comparison,
    conditional_centroid,
    distribution_from_csv,
    distribution_to_csv,
    fringe_metrics,
    marginal_centroid,
    max_abs_deviation,
    mphoton_absorption,
    parse_distribution,
    restrict_to,
    spectral_support,
    total_variation,
)
from .sampler import (
    CentroidHistogram,
    DetectorModel,
    EventRecord,
    ShiftReport,
    VarianceReport,
    centroid_of_event,
    detect,
    run_histogram,
    sample_positions,
    shift_experiment,
    variance_with_ci,
)
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

__version__ = "0.1.0"
