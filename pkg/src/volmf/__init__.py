"""Volume-based low-rank matrix factorizations.

Bounded simplex-structured factorization, separable column selection,
minimum- and maximum-volume NMF (with completion variants), their
projections, metrics, diagnostics, synthetic data and file I/O.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .core import SolverOptions, FactorPair, ConvergenceTrace, rng_stream, as_matrix, as_mask
from .linalg import spectral_norm, spd_inverse, logdet_spd, sym_eig, cholesky_spd
from .projections import (
    Bounds, project_simplex_columns, project_box_columns, project_nonneg, simplex_threshold,
)
from .metrics import relative_error, rmse_unobserved, mrsa, mrsa_matched, subspace_angle
from .ssc import SscReport, check_ssc1_necessary
from .separable import RandSpaConfig, SelectionResult, spa_select, gen_random_q, randspa, nnls_solve
from .bssmf import (
    BssmfProblem, bssmf_fit, bssmf_multistart, center_data, uncenter_w, normalize_to_unit_box,
    denormalize_from_unit_box,
)
from .minvol import MinvolModel, minvol_fit, init_hyperparams, autotune_step, warm_start_nmf
from .maxvol import (
    MaxvolModel, maxvol_fit, adgrad2_fit, admm_fit, nmaxvol_fit, maxvol_gradient_h,
    normalized_gradient_h, normalized_logdet, normalized_logdet_bounds, bregman_h_update,
    phi_plus, y_update,
)
from .datagen import (
    SyntheticSpec, gen_completion_instance, gen_separable_instance, gen_dirichlet_instance, fixture,
)
from .io import read_matrix_csv, write_matrix_csv, write_trace_tsv, write_abundance_pgm, RunManifest
