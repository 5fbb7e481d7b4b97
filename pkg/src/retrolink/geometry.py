"""Planar array geometry: poses, element layout and aspect angles.

Element indices are 1-based (row ``n``, column ``m``) in the public API;
flattened element vectors are stored row-major, i.e. flat index
``(n - 1) * cols + (m - 1)``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateGeometryError, InvalidGeometryError

_ORTHO_TOL = 1e-12


def vec3(x, y=None, z=None) -> np.ndarray:
    """Return a finite float64 3-vector from ``vec3(x, y, z)`` or ``vec3(seq)``."""
    if y is None and z is None:
        v = np.asarray(x, dtype=float).reshape(-1)
    else:
        v = np.array([x, y, z], dtype=float)
    if v.shape != (3,):
        raise InvalidGeometryError(f"expected 3 components, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidGeometryError("vector components must be finite")
    return v


@dataclass(frozen=True, eq=False)
class Pose:
    """Position and orientation of a planar array.

    ``u`` and ``v`` span the array plane (columns run along ``u``, rows
    along ``v``); ``boresight`` is the broadside direction.
    """

    origin: np.ndarray = field(default_factory=lambda: vec3(0, 0, 0))
    boresight: np.ndarray = field(default_factory=lambda: vec3(0, 0, 1))
    u: np.ndarray = field(default_factory=lambda: vec3(1, 0, 0))
    v: np.ndarray = field(default_factory=lambda: vec3(0, 1, 0))

    def __post_init__(self):
        for name in ("origin", "boresight", "u", "v"):
            object.__setattr__(self, name, vec3(getattr(self, name)))
        axes = np.stack([self.boresight, self.u, self.v])
        gram = axes @ axes.T
        if np.max(np.abs(gram - np.eye(3))) > _ORTHO_TOL:
            raise InvalidGeometryError("pose axes must be mutually orthonormal")

    @classmethod
    def facing(cls, origin, target, v=(0.0, 1.0, 0.0)) -> "Pose":
        """Pose at ``origin`` whose boresight points at ``target``.

        ``v`` is kept as the row axis after projecting out the boresight
        component, and ``u = boresight x v`` completes the frame. For a
        boresight of -z this gives u = +x, v = +y.
        """
        origin = vec3(origin)
        b = vec3(target) - origin
        norm = np.linalg.norm(b)
        if norm == 0.0:
            raise DegenerateGeometryError("pose target coincides with origin")
        b = b / norm
        v = vec3(v)
        v = v - np.dot(v, b) * b
        vn = np.linalg.norm(v)
        if vn < 1e-9:
            raise DegenerateGeometryError("row axis is parallel to the boresight")
        v = v / vn
        u = np.cross(b, v)
        return cls(origin=origin, boresight=b, u=u, v=v)

    def key(self) -> tuple:
        return tuple(np.concatenate([self.origin, self.boresight, self.u, self.v]).tolist())


IDENTITY_POSE = Pose()


@dataclass(frozen=True, eq=False)
class PlanarArray:
    rows: int
    cols: int
    dx: float
    dy: float
    pose: Pose = IDENTITY_POSE

    def __post_init__(self):
        if int(self.rows) != self.rows or int(self.cols) != self.cols:
            raise InvalidGeometryError("rows and cols must be integers")
        if self.rows < 1 or self.cols < 1:
            raise InvalidGeometryError(f"array dimensions must be >= 1, got {self.rows}x{self.cols}")
        if not (self.dx > 0 and self.dy > 0) or not np.isfinite([self.dx, self.dy]).all():
            raise InvalidGeometryError("element spacing must be positive")

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @cached_property
    def positions(self) -> np.ndarray:
        """Element positions, shape ``(rows * cols, 3)``, row-major."""
        col_off = (np.arange(self.cols) - (self.cols - 1) / 2.0) * self.dx
        row_off = (np.arange(self.rows) - (self.rows - 1) / 2.0) * self.dy
        pts = (self.pose.origin
               + row_off[:, None, None] * self.pose.v
               + col_off[None, :, None] * self.pose.u)
        return pts.reshape(-1, 3)

    @property
    def aperture(self) -> tuple:
        """Edge-to-edge extent of the element centres along ``(u, v)``."""
        return ((self.cols - 1) * self.dx, (self.rows - 1) * self.dy)

    def key(self) -> tuple:
        return (self.rows, self.cols, self.dx, self.dy) + self.pose.key()


def build_planar_array(rows, cols, spacing, pose=IDENTITY_POSE, spacing_y=None) -> PlanarArray:
    """Rectangular ``rows x cols`` grid centred on ``pose.origin``.

    Args:
        rows: Number of rows (along ``pose.v``).
        cols: Number of columns (along ``pose.u``).
        spacing: Column pitch in meters; also the row pitch unless
            ``spacing_y`` is given.
        pose: Placement of the array.
        spacing_y: Optional distinct row pitch.
    """
    dy = spacing if spacing_y is None else spacing_y
    return PlanarArray(rows=rows, cols=cols, dx=spacing, dy=dy, pose=pose)


def element_position(array: PlanarArray, n: int, m: int) -> np.ndarray:
    """Position of the element in row ``n`` and column ``m`` (both 1-based)."""
    if not (1 <= n <= array.rows and 1 <= m <= array.cols):
        raise IndexError(f"element ({n}, {m}) outside {array.rows}x{array.cols} array")
    p = array.pose
    return (p.origin
            + (m - (array.cols + 1) / 2.0) * array.dx * p.u
            + (n - (array.rows + 1) / 2.0) * array.dy * p.v)


def aspect_angle(source_pose: Pose, source_point, target_point):
    """Polar and azimuth angle of ``target_point`` seen from ``source_point``.

    Returns:
        ``(theta, phi)`` with theta in [0, pi] measured from the boresight
        and phi in [0, 2 pi) measured from ``u`` towards ``v``.
    """
    d = vec3(target_point) - vec3(source_point)
    r = np.linalg.norm(d)
    if r == 0.0:
        raise DegenerateGeometryError("target coincides with source")
    d = d / r
    cos_t = np.clip(np.dot(d, source_pose.boresight), -1.0, 1.0)
    theta = float(np.arccos(cos_t))
    phi = float(np.arctan2(np.dot(d, source_pose.v), np.dot(d, source_pose.u)) % (2 * np.pi))
    return theta, phi
