"""Necessary-condition diagnostics for the sufficiently scattered condition.

Checking the condition exactly is NP-hard. Two cheap necessary tests are
run instead:

* every row of ``H`` has at least ``r - 1`` (numerical) zeros;
* every corner vector ``e - e_i`` lies in the conic hull of the columns of ``H``.

Passing both does not certify the condition; failing either refutes it.
"""

from dataclasses import dataclass

import numpy as np

from .core import as_matrix
from .errors import InputError, NegativeInput
from .separable import nnls_solve

__all__ = ["SscReport", "check_ssc1_necessary"]


@dataclass
class SscReport:
    row_zero_counts: np.ndarray
    row_sparsity_ok: bool
    corner_membership: np.ndarray
    corner_residuals: np.ndarray

    @property
    def necessary_ok(self):
        return bool(self.row_sparsity_ok and np.all(self.corner_membership))

    def to_rows(self):
        """Tab-separated report lines (header first)."""
        lines = ["row\tzeros\tcorner_in_cone\tcorner_residual"]
        for i in range(self.row_zero_counts.size):
            lines.append(
                f"{i}\t{int(self.row_zero_counts[i])}\t{int(bool(self.corner_membership[i]))}"
                f"\t{self.corner_residuals[i]:.6g}"
            )
        lines.append(f"row_sparsity_ok\t{int(self.row_sparsity_ok)}")
        lines.append(f"necessary_ok\t{int(self.necessary_ok)}")
        return lines


def check_ssc1_necessary(H, tol=1e-8):
    """Run the two necessary tests on an ``r x n`` nonnegative matrix.

    Parameters
    ----------
    H : array_like, shape (r, n)
    tol : float
        Entries ``<= tol * max|H|`` count as zeros; a corner is in the cone
        when the NNLS residual of the scaled problem is ``<= tol * sqrt(r)``.

    Returns
    -------
    SscReport
    """
    H = as_matrix(H, "H")
    r = H.shape[0]
    if r < 2:
        raise InputError("the test needs r >= 2")
    if tol < 0:
        raise InputError("tol must be nonnegative")
    scale = float(np.abs(H).max())
    if scale == 0:
        raise InputError("H is zero")
    if H.min() < -tol * scale:
        raise NegativeInput("H has negative entries")
    # work on H / max|H| so that the report is exactly scale invariant
    Hn = np.maximum(H / scale, 0.0)
    zeros = np.sum(Hn <= tol, axis=1)
    corners = np.ones((r, r)) - np.eye(r)
    Y = nnls_solve(Hn, corners, method="active_set", warn_rank=False)
    residuals = np.linalg.norm(Hn @ Y - corners, axis=0)
    return SscReport(
        row_zero_counts=zeros,
        row_sparsity_ok=bool(np.all(zeros >= r - 1)),
        corner_membership=residuals <= tol * np.sqrt(r),
        corner_residuals=residuals,
    )
