"""Constructive lower-bound machinery.

Three pieces: a Monte Carlo estimate of the collision-geometry region
integral (how much (u, v*) mass inside a ball can produce a fixed
post-collision velocity just beyond it), the doubling-step update that turns
a lower bound on B_R into one on B_{rho(1-eps)R} at a squared level, and the
iteration that runs the step to exhaustion and fits the resulting
stretched-exponential envelope a exp(-b |v|^p).

The growth factor rho is sqrt(1+beta^2) for the inelastic model and sqrt(2)
for the mixture, giving the tail exponent p = log 2 / log rho: exactly 2 in
the elastic/mixture case and up to log 2/(log sqrt 5 - log 2) ~ 6.2126 as
beta drops to 1/2.
"""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import utils
from .errors import DegenerateGeometry, EpsOutOfRange, GuardViolated
from .kernels import TestFunction


@dataclass(frozen=True)
class Envelope:
    """Lower-bound envelope a * exp(-b |v|^p).

    Envelopes produced by the iteration always have p >= 2 (the growth
    factor never exceeds sqrt 2); arbitrary positive p is accepted so the
    tail tooling can probe synthetic slower-decay envelopes.
    """

    a: float
    b: float
    p: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0 or self.p <= 0:
            raise ValueError("envelope needs a, b, p > 0")


def envelope_eval(env: Envelope, v):
    """a * exp(-b |v|^p) for a velocity vector or batch of vectors."""
    v = np.asarray(v, dtype=float)
    speed = np.abs(v) if v.ndim == 0 else np.linalg.norm(v, axis=-1)
    out = env.a * np.exp(-env.b * speed ** env.p)
    return float(out) if np.ndim(out) == 0 else out


def envelope_eval_speed(env: Envelope, speed):
    speed = np.asarray(speed, dtype=float)
    out = env.a * np.exp(-env.b * speed ** env.p)
    return float(out) if out.ndim == 0 else out


def growth_exponent(beta=None):
    """Tail exponent p = log 2 / log rho; beta=None selects the mixture rho.

    Written as log 2 / (log(rho^2)/2) so the elastic point rho^2 = 2 gives
    exactly 2.0 in floating point.
    """
    rho_sq = 2.0 if beta is None else 1.0 + beta * beta
    return math.log(2.0) / (0.5 * math.log(rho_sq))


@dataclass(frozen=True)
class SpreadingState:
    """Iteration state; the level l decays doubly exponentially, so its log
    is the authoritative field and `l` itself may underflow to 0.0."""

    n: int
    T: float
    R: float
    eps: float
    log_l: float

    @property
    def l(self):
        return math.exp(self.log_l) if self.log_l > -745.0 else 0.0


@dataclass(frozen=True)
class SpreadingConfig:
    """Iteration parameters. Defaults select the inelastic model at
    beta = 0.8; for the mixture iteration pass beta=None and masses=(m_i, m_j).
    """

    d: int = 3
    gamma: float = -1.0
    s: float = 0.5
    beta: float | None = 0.8
    masses: tuple | None = None
    T0: float = 0.5
    l0: float = 0.1
    K: float = 1e-3          # step constant; nonconstructive in the source model
    seed: int = utils.DEFAULT_SEED

    def __post_init__(self):
        if (self.beta is None) == (self.masses is None):
            raise ValueError("provide exactly one of beta or masses "
                             "(beta=None selects the mixture iteration)")
        if self.beta is not None and not 0.5 < self.beta < 1.0:
            raise ValueError(f"beta must lie in (1/2, 1), got {self.beta}")
        if self.masses is not None and any(m <= 0 for m in self.masses):
            raise ValueError("masses must be positive")
        if not 0.0 < self.T0 < 1.0:
            raise ValueError("T0 must lie in (0, 1)")
        if not 0.0 < self.l0 < 1.0:
            raise ValueError("l0 must lie in (0, 1)")
        if self.K <= 0:
            raise ValueError("K must be positive")
        if not (self.gamma < 0.0 and 0.0 <= self.gamma + 2.0 * self.s <= 2.0):
            raise ValueError("moderately soft potentials required: gamma < 0, "
                             "gamma + 2s in [0, 2]")

    @property
    def rho(self):
        return math.sqrt(1.0 + self.beta ** 2) if self.beta is not None \
            else math.sqrt(2.0)

    @property
    def q(self):
        return self.d + 2.0 * (self.gamma + 2.0 * self.s + 1.0)

    @property
    def p(self):
        return growth_exponent(self.beta)

    @property
    def eps_max(self):
        return 1.0 - 1.0 / self.rho


def initial_state(cfg: SpreadingConfig) -> SpreadingState:
    # T_n = (1 - 2^-n) T0, eps_n = 2^-(n+1), R_0 = 1
    return SpreadingState(n=0, T=0.0, R=1.0, eps=0.5, log_l=math.log(cfg.l0))


def spreading_step(state: SpreadingState, cfg: SpreadingConfig, t: float) -> SpreadingState:
    """One doubling step: new level K min(t, R^-gamma eps^2s) eps^q R^{d+gamma} l^2.

    Guards eps^q R^{d+gamma} l < 1/2 and R eps < 1 must hold before the step;
    their violation is reported with the failing inequality so the caller can
    stop or re-parameterize. The level update runs in log space.
    """
    eps, R = state.eps, state.R
    log_guard1 = cfg.q * math.log(eps) + (cfg.d + cfg.gamma) * math.log(R) + state.log_l
    if not log_guard1 < math.log(0.5):
        raise GuardViolated(
            f"eps^q R^(d+gamma) l = {math.exp(log_guard1):.3e} >= 1/2 "
            f"at n = {state.n}", n=state.n)
    if not R * eps < 1.0:
        raise GuardViolated(f"R eps = {R * eps:.3e} >= 1 at n = {state.n}", n=state.n)
    log_rate = min(math.log(t), -cfg.gamma * math.log(R) + 2.0 * cfg.s * math.log(eps))
    log_l_next = math.log(cfg.K) + log_rate + cfg.q * math.log(eps) \
        + (cfg.d + cfg.gamma) * math.log(R) + 2.0 * state.log_l
    n1 = state.n + 1
    return SpreadingState(n=n1,
                          T=(1.0 - 0.5 ** n1) * cfg.T0,
                          R=cfg.rho * (1.0 - eps) * R,
                          eps=0.5 ** (n1 + 1),
                          log_l=log_l_next)


def run_iteration(cfg: SpreadingConfig, n_max: int):
    """Run n_max spreading steps and fit the envelope.

    The step at index n uses the window length T_{n+2} - T_{n+1} = T0 2^-(n+2)
    as its time argument. The envelope fixes p from the growth factor, fits b
    on the final three trace points (the required b is monotone along the
    trace, so the late points bind), anchors a at the initial level, and is
    checked to be dominated by the trace at every step.
    """
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    state = initial_state(cfg)
    trace = [state]
    for n in range(n_max):
        t_window = cfg.T0 * 0.5 ** (n + 2)
        state = spreading_step(state, cfg, t_window)
        trace.append(state)
    p = cfg.p
    log_a = math.log(cfg.l0)
    b = max((log_a - st.log_l) / st.R ** p for st in trace[-3:])
    if any(log_a - b * st.R ** p > st.log_l + 1e-9 for st in trace):
        b = max((log_a - st.log_l) / st.R ** p for st in trace[1:])
    return trace, Envelope(a=cfg.l0, b=b, p=p)


def radius_prefactor_limit(n=60):
    """Partial products of prod (1 - 2^-j): the limit of R_n / rho^n."""
    j = np.arange(1, n + 1, dtype=float)
    return float(np.prod(1.0 - 0.5 ** j))


def region_estimate_mc(R, eps, beta, d, samples, seed=utils.DEFAULT_SEED,
                       threads=1, axis=None, chunk_size=1 << 17):
    """Monte Carlo region integral of the collision geometry.

    Places the post-collision velocity at |v| = sqrt(1+beta^2)(1-eps) R on
    `axis` (rotation invariance makes the choice free), samples u uniformly
    in B_R(0) and accumulates the exact slab-ball section area of the partner
    hyperplane: a (d-1)-disk of radius sqrt(R^2 - dist^2) where dist is the
    plane's distance from the origin. Returns (estimate, standard error).

    eps may be <= 0 (v at or beyond the maximal reachable radius); every
    plane then misses the ball and the estimate is 0, flagged with a
    DegenerateGeometry warning. eps at or above 1 - 1/sqrt(1+beta^2) puts v
    inside B_R where the spreading regime does not apply, and raises.
    """
    if not 0.5 < beta < 1.0:
        raise ValueError(f"beta must lie in (1/2, 1), got {beta}")
    if d not in (2, 3):
        raise ValueError("only d = 2 and d = 3 are supported")
    rho = math.sqrt(1.0 + beta * beta)
    if eps >= 1.0 - 1.0 / rho:
        raise EpsOutOfRange(f"eps must be below 1 - 1/sqrt(1+beta^2) = "
                            f"{1.0 - 1.0 / rho:.6f}, got {eps}")
    if axis is None:
        axis = np.zeros(d)
        axis[0] = 1.0
    else:
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
    v = rho * (1.0 - eps) * R * axis

    n_chunks = (samples + chunk_size - 1) // chunk_size
    sizes = [min(chunk_size, samples - i * chunk_size) for i in range(n_chunks)]

    def one_chunk(idx):
        rng = utils.substream(seed, idx)
        n = sizes[idx]
        g = rng.normal(size=(n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        radius = R * rng.random(n) ** (1.0 / d)
        u = g * radius[:, None]
        pt = (1.0 / beta) * v[None, :] - (1.0 / beta - 1.0) * u
        nvec = u - v[None, :]
        nn = np.linalg.norm(nvec, axis=1)
        nn[nn == 0.0] = np.inf
        dist = np.abs(np.sum(pt * nvec, axis=1)) / nn
        sect = np.maximum(R * R - dist * dist, 0.0)
        if d == 3:
            area = math.pi * sect
        else:
            area = 2.0 * np.sqrt(sect)
        return float(np.sum(area)), float(np.sum(area * area)), n

    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one_chunk, range(n_chunks)))
    else:
        parts = [one_chunk(i) for i in range(n_chunks)]
    # fixed chunk-order reduction keeps the float result thread-count independent
    total = sum(p[0] for p in parts)
    total_sq = sum(p[1] for p in parts)
    n = sum(p[2] for p in parts)

    vol = utils.ball_volume(d, R)
    mean = total / n
    var = max(total_sq / n - mean * mean, 0.0)
    estimate = vol * mean
    stderr = vol * math.sqrt(var / n)
    if estimate == 0.0:
        warnings.warn("every sampled hyperplane missed the ball",
                      DegenerateGeometry)
    return estimate, stderr


def plateau_bump(R, eps, rho):
    """Smooth test function: 1 on |u| <= rho R (1-eps), 0 beyond rho R (1-eps/2).

    Transition profile exp(1 - 1/(1-x^2)), infinitely smooth at both ends.
    Norm attributes are sampled estimates of the 1-d profile scaled by the
    transition width; adequate for bound diagnostics.
    """
    r_in = rho * R * (1.0 - eps)
    r_out = rho * R * (1.0 - 0.5 * eps)
    width = r_out - r_in

    def profile(x):
        x = np.clip(x, 0.0, 1.0 - 1e-12)
        return np.exp(1.0 - 1.0 / (1.0 - x * x))

    def f(u):
        u = np.asarray(u, dtype=float)
        speed = np.linalg.norm(u, axis=-1)
        t = np.clip((speed - r_in) / width, 0.0, 1.0)
        out = np.where(speed <= r_in, 1.0, np.where(speed >= r_out, 0.0, profile(t)))
        return float(out) if out.ndim == 0 else out

    xs = np.linspace(0.0, 1.0 - 1e-9, 4001)
    prof = profile(xs)
    g1 = np.max(np.abs(np.gradient(prof, xs)))
    g2 = np.max(np.abs(np.gradient(np.gradient(prof, xs), xs)))
    return TestFunction(fn=f, sup_norm=1.0, grad_norm=float(g1) / width,
                        hess_norm=float(g2) / width ** 2)
