"""Shared numerics: sphere measures, quadrature rules, RNG streams, log-log fits."""

import hashlib
import math

import numpy as np
from numpy.polynomial.legendre import leggauss

# Fixed documented default seed for every randomized entry point; wall-clock
# seeding is never used so that runs are reproducible by default.
DEFAULT_SEED = 20101

_PHILOX_KEY_HI = 0x9E3779B97F4A7C15


def substream(seed, *path):
    """Independent counter-based generator keyed by (seed, *path).

    Streams with distinct paths never overlap: path words occupy the high
    words of the Philox counter while generation only advances the low word.
    Up to three path components are supported.
    """
    if len(path) > 3:
        raise ValueError("at most 3 path components")
    counter = np.zeros(4, dtype=np.uint64)
    for i, p in enumerate(path):
        counter[i + 1] = np.uint64(int(p) & 0xFFFFFFFFFFFFFFFF)
    key = np.array([np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(_PHILOX_KEY_HI)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def sphere_area(d):
    """Surface measure of the unit sphere S^{d-1}; S^0 counts as 2."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if d == 1:
        return 2.0
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def ball_volume(d, radius=1.0):
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0) * radius ** d


def gauss_legendre(a, b, n):
    """Gauss-Legendre nodes/weights on [a, b]."""
    x, w = leggauss(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def panel_rule(edges, n_per_panel):
    """Composite Gauss-Legendre rule over consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = gauss_legendre(lo, hi, n_per_panel)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def graded_edges(a, b, n_panels, ratio=2.0, toward="left"):
    """Panel edges on [a, b] geometrically refined toward one endpoint."""
    if n_panels < 1:
        raise ValueError("need at least one panel")
    t = np.cumsum(ratio ** np.arange(n_panels, dtype=float))
    t = np.concatenate([[0.0], t / t[-1]])
    if toward == "left":
        return a + (b - a) * t
    return b - (b - a) * t[::-1]


def log_edges(a, b, n_panels):
    """Logarithmically spaced panel edges; requires 0 < a < b."""
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    return np.exp(np.linspace(math.log(a), math.log(b), n_panels + 1))


def sphere_rule(d, n_polar=16, n_azimuth=32):
    """Quadrature rule on S^{d-1}: directions (m, d) and weights summing to |S^{d-1}|.

    d == 2 uses the (spectrally accurate) uniform circle rule; d == 3 a
    Gauss-Legendre x uniform product rule. Even azimuth counts make the rule
    antipodally symmetric, which the singular-part quadrature relies on.
    """
    if d == 2:
        m = max(4, n_azimuth)
        ang = 2.0 * math.pi * (np.arange(m) + 0.5) / m
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return dirs, np.full(m, 2.0 * math.pi / m)
    if d == 3:
        mu, wmu = leggauss(n_polar)
        phi = 2.0 * math.pi * (np.arange(n_azimuth) + 0.5) / n_azimuth
        smu = np.sqrt(1.0 - mu ** 2)
        x = np.outer(smu, np.cos(phi)).ravel()
        y = np.outer(smu, np.sin(phi)).ravel()
        z = np.repeat(mu, n_azimuth)
        dirs = np.stack([x, y, z], axis=1)
        w = np.repeat(wmu, n_azimuth) * (2.0 * math.pi / n_azimuth)
        return dirs, w
    raise ValueError("only d = 2 and d = 3 are supported")


def circle_rule(d, n):
    """Rule on S^{d-2} (the angular factor of a hyperplane): points (m, d-1), weights.

    For d == 2 the hyperplane is a line and S^0 carries counting measure 2.
    """
    if d == 2:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 3:
        ang = 2.0 * math.pi * (np.arange(n) + 0.5) / n
        pts = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return pts, np.full(n, 2.0 * math.pi / n)
    raise ValueError("only d = 2 and d = 3 are supported")


def tangent_basis(normal):
    """Deterministic orthonormal basis of the hyperplane orthogonal to `normal`.

    Returns an array of shape (d-1, d). Built from a Householder reflection,
    so nearby normals give nearby bases.
    """
    n = np.asarray(normal, dtype=float)
    d = n.shape[0]
    n = n / np.linalg.norm(n)
    e = np.zeros(d)
    e[0] = 1.0
    v = n - e if n[0] >= 0.0 else n + e
    nv = np.linalg.norm(v)
    if nv < 1e-14:
        basis = np.eye(d)[1:]
    else:
        v = v / nv
        h = np.eye(d) - 2.0 * np.outer(v, v)
        basis = h[1:]
    return basis


def fit_linear(x, y):
    """Least squares y = slope x + intercept; returns (slope, intercept, r2, ci95)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    a = np.stack([x, np.ones(n)], axis=1)
    coef, _, _, _ = np.linalg.lstsq(a, y, rcond=None)
    slope, intercept = coef
    pred = a @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    if n > 2:
        sigma2 = ss_res / (n - 2)
        sxx = float(np.sum((x - x.mean()) ** 2))
        ci = 1.96 * math.sqrt(sigma2 / sxx) if sxx > 0 else math.inf
    else:
        ci = math.inf
    return float(slope), float(intercept), float(r2), float(ci)


def fit_loglog(x, y):
    """Least-squares slope of log y vs log x.

    Returns (slope, intercept, r_squared, slope_ci95). Nonpositive data is
    rejected rather than silently dropped.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0) or np.any(x <= 0):
        raise ValueError("log-log fit requires positive data")
    return fit_linear(np.log(x), np.log(y))


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def format_float(x):
    """Shortest round-trip decimal form, used for deterministic CSV/JSON output."""
    return repr(float(x))
