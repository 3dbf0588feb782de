"""Surrogate point contacts built from contact polygons.

Each face becomes a linear compliant contact with stiffness ``k = g A0`` and
signed distance ``phi0 = -p_c0 / g``, where ``g`` is the effective pressure
gradient of the two bodies along the face normal.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .contact_surface import ContactPolygon, ContactSurface, tangent_basis


@dataclass(frozen=True)
class DissipationModel:
    """Linear dissipation d = tau * k with relaxation time ``tau`` (s)."""

    relaxation_time: float = 0.0

    def __post_init__(self):
        if not self.relaxation_time >= 0:
            raise ValueError("relaxation time must be nonnegative")


@dataclass
class ContactConstraint:
    body_a: int
    body_b: int
    point: np.ndarray
    frame: np.ndarray      # rows t1, t2, n
    phi0: float
    stiffness: float
    dissipation: float
    friction: float
    polygon_id: int = -1

    @property
    def normal(self) -> np.ndarray:
        return self.frame[2]


@dataclass
class ConstraintSet:
    """Stacked constraints; the stepper consumes this form."""

    body_a: np.ndarray
    body_b: np.ndarray
    point: np.ndarray      # (n, 3)
    frame: np.ndarray      # (n, 3, 3) rows t1, t2, n
    phi0: np.ndarray
    stiffness: np.ndarray
    dissipation: np.ndarray
    friction: np.ndarray
    polygon_id: np.ndarray

    def __len__(self) -> int:
        return len(self.phi0)

    @classmethod
    def empty(cls) -> ConstraintSet:
        z = np.zeros(0)
        zi = np.zeros(0, dtype=np.int64)
        return cls(zi, zi, np.zeros((0, 3)), np.zeros((0, 3, 3)), z, z, z, z, zi)

    @classmethod
    def concatenate(cls, sets) -> ConstraintSet:
        sets = [s for s in sets if len(s)]
        if not sets:
            return cls.empty()
        return cls(*(np.concatenate([getattr(s, f) for s in sets])
                     for f in cls.__dataclass_fields__))

    def __getitem__(self, i) -> ContactConstraint:
        return ContactConstraint(int(self.body_a[i]), int(self.body_b[i]), self.point[i],
                                 self.frame[i], float(self.phi0[i]), float(self.stiffness[i]),
                                 float(self.dissipation[i]), float(self.friction[i]),
                                 int(self.polygon_id[i]))


def effective_gradient(g_a: float, g_b: float) -> float | None:
    """g_a g_b / (g_a + g_b); None unless both are positive. An infinite side
    (rigid body) yields the other gradient."""
    if not (g_a > 0 and g_b > 0):
        return None
    if np.isinf(g_a) and np.isinf(g_b):
        return None
    if np.isinf(g_a):
        return float(g_b)
    if np.isinf(g_b):
        return float(g_a)
    return float(g_a * g_b / (g_a + g_b))


def effective_gradients(g_a: np.ndarray, g_b: np.ndarray) -> np.ndarray:
    """Vectorised :func:`effective_gradient`; NaN where the face is rejected."""
    g_a = np.asarray(g_a, dtype=float)
    g_b = np.asarray(g_b, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        g = g_a * g_b / (g_a + g_b)
        g = np.where(np.isinf(g_a), g_b, g)
        g = np.where(np.isinf(g_b), g_a, g)
    bad = ~((g_a > 0) & (g_b > 0)) | (np.isinf(g_a) & np.isinf(g_b))
    return np.where(bad, np.nan, g)


def combine_friction(mu_a: float, mu_b: float) -> float:
    return 0.0 if mu_a + mu_b == 0 else 2 * mu_a * mu_b / (mu_a + mu_b)


def contact_frame(normal) -> np.ndarray:
    n = np.asarray(normal, dtype=float).reshape(-1, 3)
    t1, t2 = tangent_basis(n)
    frame = np.stack([t1, t2, n], axis=1)
    return frame[0] if np.ndim(normal) == 1 else frame


def polygon_to_constraint(poly: ContactPolygon, friction: float,
                          dissipation: DissipationModel, body_a: int = 0, body_b: int = 1,
                          polygon_id: int = -1) -> ContactConstraint | None:
    g = effective_gradient(poly.grad_a, poly.grad_b)
    if g is None:
        return None
    k = g * poly.area
    if not k > 0:
        return None
    return ContactConstraint(body_a, body_b, np.asarray(poly.centroid, dtype=float),
                             contact_frame(poly.normal), -poly.centroid_pressure / g, k,
                             dissipation.relaxation_time * k, float(friction), polygon_id)


def surface_constraints(surface: ContactSurface, friction: float,
                        dissipation: DissipationModel) -> ConstraintSet:
    """All admissible faces of a surface as constraints, ordered by face id."""
    g = effective_gradients(surface.grad_a, surface.grad_b)
    k = g * surface.area
    ok = np.isfinite(g) & (k > 0)
    ids = np.nonzero(ok)[0]
    n = len(ids)
    return ConstraintSet(np.full(n, surface.body_a, dtype=np.int64),
                         np.full(n, surface.body_b, dtype=np.int64),
                         surface.centroid[ids], contact_frame(surface.normal[ids]),
                         -surface.pressure[ids] / g[ids], k[ids],
                         dissipation.relaxation_time * k[ids], np.full(n, float(friction)), ids)


def elastic_force(phi: float, v_n: float, k: float, d: float) -> float:
    """(-k phi - d v_n)_+ ; never attractive."""
    return max(-k * phi - d * v_n, 0.0)


def pressure_rate(g: float, v_n: float) -> float:
    """First-order pressure rate -g v_n at a face (Pa/s)."""
    return -g * v_n


def write_constraints_csv(path, constraints: ConstraintSet, time: float | None = None,
                          append: bool = False):
    """One row per constraint: t, phi0, k, d, mu, x_c, n."""
    mode = "a" if append else "w"
    with open(path, mode, newline="") as fh:
        w = csv.writer(fh)
        if not append:
            w.writerow(["t", "phi0", "k", "d", "mu", "x", "y", "z", "nx", "ny", "nz"])
        for i in range(len(constraints)):
            w.writerow([repr(time), *(repr(float(x)) for x in (
                constraints.phi0[i], constraints.stiffness[i], constraints.dissipation[i],
                constraints.friction[i], *constraints.point[i], *constraints.frame[i, 2]))])
