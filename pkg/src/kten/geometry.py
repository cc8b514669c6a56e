"""Exact binary-collision kinematics.

Covers the inelastic mono-species rule (restitution coefficient alpha,
beta = (1+alpha)/2) and the elastic two-mass mixture rule, in both the
scattering-direction (sigma) and impact-normal (n) parameterizations,
plus the auxiliary points and half-angle identities that the Carleman-form
kernels are built on.

All operations are pure and broadcast over leading axes: velocity arguments
may be single vectors of shape (d,) or batches of shape (..., d). The
half-sphere restriction on n is a parameterization convention only; any unit
n is accepted and produces the same collision as its half-sphere
representative.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import EqualMasses, NonUnitNormal, ZeroRelativeVelocity

UNIT_TOL = 1e-9


@dataclass(frozen=True)
class RestitutionParams:
    """Normal restitution coefficient alpha in (0,1) and beta = (1+alpha)/2."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def beta(self):
        return 0.5 * (1.0 + self.alpha)

    @classmethod
    def from_beta(cls, beta):
        if not 0.5 < beta < 1.0:
            raise ValueError(f"beta must lie in (1/2, 1), got {beta}")
        return cls(alpha=2.0 * beta - 1.0)


@dataclass(frozen=True)
class MassPair:
    m_i: float
    m_j: float

    def __post_init__(self):
        for name, m in (("m_i", self.m_i), ("m_j", self.m_j)):
            if not (m > 0.0 and np.isfinite(m)):
                raise ValueError(f"{name} must be positive and finite, got {m}")

    @property
    def total(self):
        return self.m_i + self.m_j

    @property
    def kappa(self):
        # 2 m_j / (m_i + m_j): the contraction factor of the half-angle identities
        return 2.0 * self.m_j / self.total


@dataclass(frozen=True)
class CollisionParams:
    """Dimension plus either restitution or masses; selects the kinematics."""

    d: int
    restitution: RestitutionParams | None = None
    masses: MassPair | None = None

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("dimension d must be >= 2")
        if (self.restitution is None) == (self.masses is None):
            raise ValueError("provide exactly one of restitution or masses")

    @property
    def model(self):
        return "inelastic" if self.restitution is not None else "mixture"


class PostCollision(NamedTuple):
    """Post-collision pair; `degenerate` flags |v - v*| = 0 no-op events."""

    v_prime: np.ndarray
    v_star_prime: np.ndarray
    degenerate: np.ndarray | bool


def _vec(x):
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        raise ValueError("velocity arguments must be vectors")
    return a


def _check_unit(u, name):
    norm = np.linalg.norm(u, axis=-1)
    if np.any(np.abs(norm - 1.0) > UNIT_TOL):
        raise NonUnitNormal(f"{name} must be a unit vector (|{name}| - 1 exceeds {UNIT_TOL})")


def _norm(x):
    return np.linalg.norm(x, axis=-1, keepdims=True)


def _dot(a, b):
    return np.sum(a * b, axis=-1, keepdims=True)


def _flag(rel_norm):
    deg = rel_norm[..., 0] == 0.0
    return bool(deg) if deg.ndim == 0 else deg


def inelastic_post_sigma(v, v_star, sigma, p: RestitutionParams):
    """Inelastic post-collision velocities from a scattering direction sigma.

    v'  = (v+v*)/2 + ((1-beta)/2)(v-v*) + (beta/2)|v-v*| sigma, symmetric for v*'.
    Degenerate |v - v*| = 0 events return the inputs unchanged, flagged.
    """
    v, v_star, sigma = _vec(v), _vec(v_star), _vec(sigma)
    _check_unit(sigma, "sigma")
    beta = p.beta
    rel = v - v_star
    r = _norm(rel)
    center = 0.5 * (v + v_star)
    half = 0.5 * (1.0 - beta) * rel + 0.5 * beta * r * sigma
    return PostCollision(center + half, center - half, _flag(r))


def inelastic_post_n(v, v_star, n, p: RestitutionParams):
    """Inelastic post-collision velocities from an impact normal n.

    v' = v - beta <v-v*, n> n and v*' = v* + beta <v-v*, n> n; the normal
    relative velocity reflects with factor -alpha, the tangential part is
    unchanged.
    """
    v, v_star, n = _vec(v), _vec(v_star), _vec(n)
    _check_unit(n, "n")
    shift = p.beta * _dot(v - v_star, n) * n
    r = _norm(v - v_star)
    return PostCollision(v - shift, v_star + shift, _flag(r))


def mixture_post_sigma(v, v_star, sigma, m: MassPair):
    """Elastic two-mass post-collision velocities from a scattering direction.

    Center-of-mass form with weights m_i/(m_i+m_j) and m_j/(m_i+m_j);
    conserves momentum and kinetic energy exactly and keeps |v'-v*'| = |v-v*|.
    """
    v, v_star, sigma = _vec(v), _vec(v_star), _vec(sigma)
    _check_unit(sigma, "sigma")
    total = m.total
    rel = v - v_star
    r = _norm(rel)
    com = (m.m_i * v + m.m_j * v_star) / total
    rs = r * sigma
    return PostCollision(com + (m.m_j / total) * rs, com - (m.m_i / total) * rs, _flag(r))


def mixture_post_n(v, v_star, n, m: MassPair):
    """Elastic two-mass rule in the impact-normal parameterization."""
    v, v_star, n = _vec(v), _vec(v_star), _vec(n)
    _check_unit(n, "n")
    c = _dot(v - v_star, n) * n
    r = _norm(v - v_star)
    total = m.total
    return PostCollision(v - (2.0 * m.m_j / total) * c,
                         v_star + (2.0 * m.m_i / total) * c,
                         _flag(r))


class AuxPointsInelastic(NamedTuple):
    P: np.ndarray
    Q: np.ndarray
    residual_P: np.ndarray     # <P - v, P - v*>, zero for valid triples
    residual_Q: np.ndarray     # <v' - Q, v' - v>, zero for valid triples


def aux_points_inelastic(v, v_star, v_prime, p: RestitutionParams):
    """Auxiliary points of an inelastic collision triple.

    P = (1/beta) v' - (1/beta - 1) v lies on the extension of the segment
    v..v' and satisfies P-v perpendicular to P-v* for valid triples;
    Q = (1-beta) v + beta v* satisfies v'-Q perpendicular to v'-v.
    The orthogonality residuals are returned, not asserted, so the caller
    owns the tolerance.
    """
    v, v_star, v_prime = _vec(v), _vec(v_star), _vec(v_prime)
    inv_b = 1.0 / p.beta
    P = inv_b * v_prime - (inv_b - 1.0) * v
    Q = (1.0 - p.beta) * v + p.beta * v_star
    res_p = _dot(P - v, P - v_star)[..., 0]
    res_q = _dot(v_prime - Q, v_prime - v)[..., 0]
    return AuxPointsInelastic(P, Q, res_p, res_q)


class AuxPointsMixture(NamedTuple):
    kind: str                  # "PQ" for m_i < m_j, "RS" for m_i > m_j
    points: dict
    residuals: dict


def aux_points_mixture(v, v_star, v_prime, v_star_prime, m: MassPair):
    """Auxiliary points of a mixture collision, keyed by the mass ordering.

    For m_i < m_j returns P (on segment v..v', P-v' perp P-v*') and Q (on the
    extension of v*'..v', v-Q perp v-v'); for m_i > m_j returns R (extension
    of v..v', R-v perp R-v*) and S (on segment v..v*, S-v' perp v-v').
    Raises EqualMasses for m_i == m_j, where every point degenerates onto the
    collision sphere and the mono-species path applies.
    """
    if m.m_i == m.m_j:
        raise EqualMasses("aux points are undefined at m_i == m_j")
    v, v_star = _vec(v), _vec(v_star)
    v_prime, v_star_prime = _vec(v_prime), _vec(v_star_prime)
    total = m.total
    if m.m_i < m.m_j:
        P = (total / (2.0 * m.m_j)) * v + ((m.m_j - m.m_i) / (2.0 * m.m_j)) * v_prime
        Q = (2.0 * m.m_j / total) * v_star_prime - ((m.m_j - m.m_i) / total) * v_prime
        residuals = {
            "P": _dot(P - v_prime, P - v_star_prime)[..., 0],
            "Q": _dot(v - Q, v - v_prime)[..., 0],
        }
        return AuxPointsMixture("PQ", {"P": P, "Q": Q}, residuals)
    R = (total / (2.0 * m.m_j)) * v_prime - ((m.m_i - m.m_j) / (2.0 * m.m_j)) * v
    S = ((m.m_i - m.m_j) / total) * v + (2.0 * m.m_j / total) * v_star
    residuals = {
        "R": _dot(R - v, R - v_star)[..., 0],
        "S": _dot(S - v_prime, v - v_prime)[..., 0],
    }
    return AuxPointsMixture("RS", {"R": R, "S": S}, residuals)


def half_angle(v, v_star, v_prime, params):
    """Half-angle pair (cos(theta/2), sin(theta/2)) of a collision triple.

    sin(theta/2) = |v - v'| / (kappa |v - v*|) with kappa = beta for the
    inelastic rule and kappa = 2 m_j/(m_i+m_j) for the mixture rule; the
    cosine comes from the matching auxiliary-point distance, so the pair
    satisfies cos^2 + sin^2 = 1 exactly for valid triples.
    """
    v, v_star, v_prime = _vec(v), _vec(v_star), _vec(v_prime)
    rel = _norm(v - v_star)[..., 0]
    if np.any(rel == 0.0):
        raise ZeroRelativeVelocity("half_angle requires |v - v*| > 0")
    if isinstance(params, RestitutionParams):
        kappa = params.beta
        num_cos = np.linalg.norm((1.0 - kappa) * v + kappa * v_star - v_prime, axis=-1)
    elif isinstance(params, MassPair):
        m = params
        kappa = m.kappa
        num_cos = np.linalg.norm(
            (m.m_i - m.m_j) * v + 2.0 * m.m_j * v_star - m.total * v_prime, axis=-1
        ) / m.total
    else:
        raise TypeError("params must be RestitutionParams or MassPair")
    denom = kappa * rel
    sin_half = np.linalg.norm(v - v_prime, axis=-1) / denom
    cos_half = num_cos / denom
    if sin_half.ndim == 0:
        return float(cos_half), float(sin_half)
    return cos_half, sin_half


@dataclass(frozen=True)
class CollisionFrame:
    """A validated (v, v*, sigma, cos theta) tuple."""

    v: np.ndarray
    v_star: np.ndarray
    sigma: np.ndarray
    cos_theta: float

    TOL = 1e-12

    def __post_init__(self):
        if abs(np.linalg.norm(self.sigma) - 1.0) > self.TOL:
            raise NonUnitNormal("sigma must be a unit vector")
        rel = self.v - self.v_star
        r = np.linalg.norm(rel)
        if r == 0.0:
            raise ZeroRelativeVelocity("collision frame needs |v - v*| > 0")
        c = float(np.dot(rel / r, self.sigma))
        if abs(c - self.cos_theta) > self.TOL:
            raise ValueError("cos_theta inconsistent with (v, v*, sigma)")


def make_collision_frame(v, v_star, sigma):
    v, v_star, sigma = _vec(v), _vec(v_star), _vec(sigma)
    rel = v - v_star
    r = np.linalg.norm(rel)
    if r == 0.0:
        raise ZeroRelativeVelocity("collision frame needs |v - v*| > 0")
    c = float(np.dot(rel / r, sigma))
    return CollisionFrame(v=v, v_star=v_star, sigma=sigma, cos_theta=c)


def normal_from_collision(v, v_prime):
    """Impact normal recovered from a pre/post pair: n = (v - v')/|v - v'|.

    Both collision rules displace v along -n, so the normalized difference is
    the half-sphere representative with <v - v*, n> >= 0.
    """
    v, v_prime = _vec(v), _vec(v_prime)
    diff = v - v_prime
    r = _norm(diff)
    if np.any(r[..., 0] == 0.0):
        raise ZeroRelativeVelocity("v' == v leaves the normal undefined")
    return diff / r
