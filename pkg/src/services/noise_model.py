"""
Measurement and process noise covariances.

Q^gps and Q^ix follow the observation-noise matrices with off-diagonal
sigma_x*sigma_y when `correlated_offdiag` is set (rank 1), diagonal otherwise.
The ix longitudinal std is |slope*d_ix - offset|, floored at `ix_std_floor`.
"""

from typing import Optional, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor

from src.exceptions import NumericalDegeneracyError
from src.models import MapPoint, NoiseParams
from src.utils.geo import node_distance, radial_basis
from src.utils.validators import check_covariance

ArrayLike = Union[float, np.ndarray]


def _structured(sigma_x: float, sigma_y: float, correlated: bool) -> np.ndarray:
    cross = sigma_x * sigma_y if correlated else 0.0
    return np.array([[sigma_x * sigma_x, cross], [cross, sigma_y * sigma_y]])


def gps_covariance(params: NoiseParams) -> np.ndarray:
    """Q^gps"""
    return check_covariance(
        _structured(params.sigma_x_gps, params.sigma_y_gps, params.correlated_offdiag)
    )


def ix_longitudinal_std(d_ix: ArrayLike, params: NoiseParams) -> ArrayLike:
    """Longitudinal std of the node's detections at distance d_ix (scalar or array)"""
    raw = np.abs(params.ix_std_slope * np.asarray(d_ix, dtype=float) - params.ix_std_offset)
    floored = np.maximum(raw, params.ix_std_floor)
    return float(floored) if np.ndim(floored) == 0 else floored


def ix_zero_crossing(params: NoiseParams) -> float:
    """Distance at which the affine std model reaches zero"""
    return params.ix_std_offset / params.ix_std_slope


def ix_covariance(candidate: MapPoint, params: NoiseParams) -> np.ndarray:
    """Q^ix for a candidate, longitudinal std taken from its distance to the node.

    With `ix_radial_frame` the matrix is rotated so its first axis points from
    the node to the candidate.
    """
    sigma_x = ix_longitudinal_std(node_distance(candidate, params.node), params)
    cov = _structured(sigma_x, params.sigma_y_ix, params.correlated_offdiag)
    if params.ix_radial_frame:
        rot = radial_basis(candidate, params.node)
        cov = rot @ cov @ rot.T
        cov = 0.5 * (cov + cov.T)
    return check_covariance(cov)


def process_noise(params: NoiseParams, dt: Optional[float] = None) -> np.ndarray:
    """R = diag(q_x, q_y) * dt"""
    step = params.dt if dt is None else dt
    return check_covariance(np.diag([params.process_q_x * step, params.process_q_y * step]))


# Innovation covariances worse conditioned than this are treated as singular
MAX_CONDITION = 1e12


def innovation_factor(cov: np.ndarray, noise: np.ndarray) -> Tuple[np.ndarray, Tuple[np.ndarray, bool]]:
    """S = Sigma + Q and its Cholesky factor.

    Raises NumericalDegeneracyError naming Sigma, Q and S when S is not
    positive definite or is numerically singular. For 2x2, det(S) is the
    squared product of the factor's diagonal and trace(S)^2 / det(S) bounds
    the condition number.
    """
    S = 0.5 * ((cov + noise) + (cov + noise).T)
    try:
        factor = cho_factor(S, check_finite=False)
        root = factor[0]
        det = (root[0, 0] * root[1, 1]) ** 2
        if det * MAX_CONDITION <= (S[0, 0] + S[1, 1]) ** 2:
            raise LinAlgError("ill-conditioned")
    except LinAlgError:
        raise NumericalDegeneracyError(
            "innovation covariance S = Sigma + Q is singular: "
            f"Sigma={np.asarray(cov).tolist()}, Q={np.asarray(noise).tolist()}, S={S.tolist()}"
        ) from None
    return S, factor
