"""
Coordinate-frame helpers: map-origin offset, ground-truth lever arm, node distance.

Headings are radians counterclockwise from ENU East. Everything is 2D (East/North).
"""

import math

import numpy as np

from src.exceptions import InvalidInputError
from src.models import EnuPoint, Heading, MapPoint
from src.utils.validators import ensure_finite


def lever_arm_correct(raw: EnuPoint, heading: Heading, d: float) -> EnuPoint:
    """Move a ground-truth device reading back to the vehicle reference point.

    Implements x - d*cos(theta + pi/2), y - d*sin(theta + pi/2) as written: the
    device sits d meters to the left of the heading direction.
    """
    ensure_finite("lever arm", d)
    if d < 0:
        raise InvalidInputError(f"lever arm must be >= 0, got {d}")
    angle = heading.theta + math.pi / 2.0
    return EnuPoint(east=raw.east - d * math.cos(angle), north=raw.north - d * math.sin(angle))


def lever_arm_offset(heading: np.ndarray, d: float) -> np.ndarray:
    """Vectorized device displacement d*(cos, sin)(theta + pi/2), shape (N, 2)"""
    angle = np.asarray(heading, dtype=float) + np.pi / 2.0
    return d * np.column_stack((np.cos(angle), np.sin(angle)))


def to_map_frame(p: EnuPoint, origin: EnuPoint) -> MapPoint:
    return MapPoint(x=p.east - origin.east, y=p.north - origin.north)


def from_map_frame(p: MapPoint, origin: EnuPoint) -> EnuPoint:
    return EnuPoint(east=p.x + origin.east, north=p.y + origin.north)


def node_distance(p: MapPoint, node: MapPoint) -> float:
    """Euclidean distance d_ix between a position and the ix-node"""
    return math.hypot(p.x - node.x, p.y - node.y)


def node_distances(points: np.ndarray, node: MapPoint) -> np.ndarray:
    """node_distance over an (N, 2) array"""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    return np.hypot(pts[:, 0] - node.x, pts[:, 1] - node.y)


def radial_basis(p: MapPoint, node: MapPoint) -> np.ndarray:
    """Rotation whose columns are the node->p radial unit and its left normal.

    A point on the node itself gets the East axis as radial direction.
    """
    dx, dy = p.x - node.x, p.y - node.y
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        ux, uy = 1.0, 0.0
    else:
        ux, uy = dx / dist, dy / dist
    return np.array([[ux, -uy], [uy, ux]])
