"""Discrete-time stochastic system models and the benchmark suite.

A system is x(k+1) = drift(x(k), input) + noise, noise i.i.d. zero-mean
Gaussian scaled per dimension, evolving over a bounded closed box; leaving the
box is an absorbing "out" condition handled by the callers.  Inputs come from
a finite set.  Benchmarks: a thermal room model, a road traffic cell, and a
7-D BMW 320i single-track vehicle.

Also provides the transition-density toolbox used by the closeness bound:
the exact Lipschitz constant for linear dynamics with additive Gaussian noise
and a conditional kernel density estimator with a finite-difference Lipschitz
estimate for sampled black-box systems.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

OUT = "out"  # symbolic absorbing state for trajectories that left the box

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class ConfigurationError(ValueError):
    """Invalid model or scenario configuration."""


class NumericError(ArithmeticError):
    """Non-finite values produced by the dynamics."""


class EstimationError(ValueError):
    """Density estimation queried outside its supported data."""


@dataclass(frozen=True)
class LinearGaussian:
    """Exact 1-D linear-Gaussian data for the explicit abstraction oracle.

    x' = a[i] * x + c[i] + sigma * z for input index i, z standard normal.
    a_upper holds entrywise bounds |a_ij| used by the Lipschitz constant.
    """

    a: np.ndarray
    c: np.ndarray
    sigma: float
    a_upper: np.ndarray


@dataclass(frozen=True)
class SystemModel:
    name: str
    box: np.ndarray                  # (n, 2) closed bounds per dimension
    inputs: np.ndarray               # (m, d_u) finite input set
    noise_sigma: np.ndarray          # (n,) per-dimension noise scale, > 0
    drift: Callable                  # (x, input_vector) -> next mean state
    labeler: Callable                # state or OUT -> frozenset of propositions
    ap: tuple[str, ...]
    lin_gauss: LinearGaussian | None = None
    extra: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.box.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[0]

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.box[:, 0]) and np.all(x <= self.box[:, 1]))

    def sample_noise(self, rng: np.random.Generator) -> np.ndarray:
        """One noise vector: i.i.d. standard normal scaled per dimension."""
        return rng.standard_normal(self.dim) * self.noise_sigma

    def step(self, x, nu, noise) -> np.ndarray:
        """Apply the dynamics once.  `nu` is an input index or input vector."""
        x = np.asarray(x, dtype=float)
        u = self.inputs[nu] if np.isscalar(nu) else np.asarray(nu, dtype=float)
        y = np.asarray(self.drift(x, u), dtype=float) + noise
        if not np.all(np.isfinite(y)):
            raise NumericError(
                f"{self.name}: non-finite successor from x={x!r}, input={u!r}")
        return y


def _validate(model: SystemModel) -> SystemModel:
    if model.box.ndim != 2 or model.box.shape[1] != 2:
        raise ConfigurationError("box must be an (n, 2) array")
    if np.any(model.box[:, 1] <= model.box[:, 0]):
        raise ConfigurationError("box upper bounds must exceed lower bounds")
    if np.any(model.noise_sigma <= 0):
        raise ConfigurationError("noise scales must be positive")
    if model.inputs.ndim != 2 or model.inputs.shape[0] == 0:
        raise ConfigurationError("inputs must be a nonempty (m, d_u) array")
    return model


# --------------------------------------------------------------- benchmarks

def make_room() -> SystemModel:
    """Thermal room: keep the temperature near 20 degrees.

    x' = (1 - b - g*nu) x + g*T_h*nu + b*T_e + 0.3162 z over X = [19, 21],
    with b = 0.022, g = 0.05, heater T_h = 50, ambient T_e = -1 and ten
    heater valve settings nu in {0.03, 0.09, ..., 0.57}.  Everything inside
    the box is labeled `safe`.
    """
    beta, gamma, t_heat, t_env, sigma = 0.022, 0.05, 50.0, -1.0, 0.3162
    inputs = np.array([[0.03 + 0.06 * i] for i in range(10)])

    def drift(x, u):
        nu = u[0]
        return (1.0 - beta - gamma * nu) * x + gamma * t_heat * nu + beta * t_env

    def labeler(x):
        return frozenset() if x is OUT else frozenset({"safe"})

    lg = LinearGaussian(
        a=np.array([1.0 - beta - gamma * u[0] for u in inputs]),
        c=np.array([gamma * t_heat * u[0] + beta * t_env for u in inputs]),
        sigma=sigma,
        a_upper=np.array([[1.0 - beta]]),  # largest |a| over the input set
    )
    return _validate(SystemModel(
        name="room",
        box=np.array([[19.0, 21.0]]),
        inputs=inputs,
        noise_sigma=np.array([sigma]),
        drift=drift,
        labeler=labeler,
        ap=("safe",),
        lin_gauss=lg,
    ))


def make_traffic() -> SystemModel:
    """Road traffic cell: keep the queue inside [0, 20] vehicles.

    x' = 0.39 x + 6 nu + 3 + 1.9494 z, nu in {0, 1} (traffic light red/green).
    """
    a, sigma = 0.39, 1.9494
    inputs = np.array([[0.0], [1.0]])

    def drift(x, u):
        return a * x + 6.0 * u[0] + 3.0

    def labeler(x):
        return frozenset() if x is OUT else frozenset({"safe"})

    lg = LinearGaussian(
        a=np.array([a, a]),
        c=np.array([3.0, 9.0]),
        sigma=sigma,
        a_upper=np.array([[a]]),
    )
    return _validate(SystemModel(
        name="traffic",
        box=np.array([[0.0, 20.0]]),
        inputs=inputs,
        noise_sigma=np.array([sigma]),
        drift=drift,
        labeler=labeler,
        ap=("safe",),
        lin_gauss=lg,
    ))


# BMW 320i single-track parameters
_BMW = dict(
    l_wb=2.5789,     # wheelbase
    m=1093.3,        # mass
    mu=1.0489,       # friction coefficient
    l_f=1.156,       # front axle to center of gravity
    l_r=1.422,       # rear axle to center of gravity
    h_cg=0.574,      # center of gravity height
    i_z=1791.6,      # yaw moment of inertia
    c_sf=20.89,      # front cornering stiffness
    c_sr=20.89,      # rear cornering stiffness
    g=9.81,
    tau=0.001,       # integration step
    length=4.508,    # car body footprint
    width=1.610,
    steer_v_bounds=(-0.4, 0.4),   # nu1: steering velocity
    accel_bounds=(-4.0, 4.0),     # nu2: longitudinal acceleration
)

BMW_STATE = ("sx", "sy", "steer", "vel", "yaw", "yaw_rate", "slip")


def low_speed_regime(velocity: float) -> bool:
    """Regime predicate: kinematic update strictly below 0.1 m/s."""
    return abs(velocity) < 0.1


def bmw_car_corners(sx: float, sy: float, yaw: float) -> np.ndarray:
    """Corners of the car-body rectangle centered at (sx, sy), heading yaw."""
    half_l, half_w = _BMW["length"] / 2.0, _BMW["width"] / 2.0
    c, s = math.cos(yaw), math.sin(yaw)
    local = [(half_l, half_w), (half_l, -half_w), (-half_l, -half_w), (-half_l, half_w)]
    return np.array([(sx + c * lx - s * ly, sy + s * lx + c * ly) for lx, ly in local])


def _rect_corners(rect) -> np.ndarray:
    x0, x1, y0, y1 = rect
    return np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])


def oriented_rect_hits_aabb(corners: np.ndarray, rect) -> bool:
    """Separating-axis intersection of a convex quad with an axis-aligned box."""
    x0, x1, y0, y1 = rect
    box = _rect_corners(rect)
    # candidate separating axes: box axes plus the quad's two edge normals
    axes = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    for i in (0, 1):
        edge = corners[i + 1] - corners[i]
        axes.append(np.array([-edge[1], edge[0]]))
    for axis in axes:
        pa = corners @ axis
        pb = box @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


@dataclass(frozen=True)
class Scenario:
    """Reach-avoid geometry: rectangles as (x_lo, x_hi, y_lo, y_hi)."""

    goal: tuple = (44.0, 50.0, 3.0, 6.0)
    obstacle: tuple = (30.0, 34.0, 0.0, 3.0)

    def validate(self):
        for name, rect in (("goal", self.goal), ("obstacle", self.obstacle)):
            x0, x1, y0, y1 = rect
            if x0 >= x1 or y0 >= y1:
                raise ConfigurationError(f"{name} rectangle is empty: {rect}")
        g, o = self.goal, self.obstacle
        if g[0] < o[1] and o[0] < g[1] and g[2] < o[3] and o[2] < g[3]:
            raise ConfigurationError("goal and obstacle rectangles overlap")
        return self


def make_bmw(scenario: Scenario | None = None, input_points: tuple = (3, 3)) -> SystemModel:
    """BMW 320i single-track model with reach-avoid labels.

    State (sx, sy, steering angle, velocity, yaw, yaw rate, slip angle); the
    kinematic regime applies below 0.1 m/s and the dynamic single-track
    regime otherwise.  Inputs quantize steering velocity x acceleration on a
    uniform grid; both channels saturate at their physical bounds.  Noise
    scale is 0.5 on every coordinate.
    """
    scenario = (scenario or Scenario()).validate()
    p = _BMW
    n1, n2 = input_points
    if n1 < 1 or n2 < 1:
        raise ConfigurationError("input grid needs at least one point per channel")
    v1 = np.linspace(*p["steer_v_bounds"], n1) if n1 > 1 else np.array([0.0])
    v2 = np.linspace(*p["accel_bounds"], n2) if n2 > 1 else np.array([0.0])
    inputs = np.array([[a, b] for a in v1 for b in v2])

    def drift(x, u):
        sx, sy, steer, vel, yaw, yaw_rate, slip = x
        nu1 = min(max(u[0], p["steer_v_bounds"][0]), p["steer_v_bounds"][1])
        nu2 = min(max(u[1], p["accel_bounds"][0]), p["accel_bounds"][1])
        tau = p["tau"]
        if low_speed_regime(vel):
            d1 = vel * math.cos(yaw)
            d2 = vel * math.sin(yaw)
            d5 = vel / p["l_wb"] * math.tan(steer)
            d6 = (nu2 / p["l_wb"] * math.tan(steer)
                  + vel / (p["l_wb"] * math.cos(steer) ** 2) * nu1)
            d7 = 0.0
        else:
            lf, lr, h, mu, g = p["l_f"], p["l_r"], p["h_cg"], p["mu"], p["g"]
            csf, csr = p["c_sf"], p["c_sr"]
            front = csf * (g * lr - nu2 * h)
            rear = csr * (g * lf + nu2 * h)
            d1 = vel * math.cos(yaw + slip)
            d2 = vel * math.sin(yaw + slip)
            d5 = yaw_rate
            d6 = (mu * p["m"] / (p["i_z"] * (lr + lf))) * (
                lf * front * steer
                + (lr * rear - lf * front) * slip
                - (lf ** 2 * front + lr ** 2 * rear) * (yaw_rate / vel))
            d7 = (mu / (vel * (lr + lf))) * (
                front * steer
                + (rear + front) * slip
                - (lf * front - lr * rear) * (yaw_rate / vel)) - yaw_rate
        return np.array([
            sx + tau * d1,
            sy + tau * d2,
            steer + tau * nu1,
            vel + tau * nu2,
            yaw + tau * d5,
            yaw_rate + tau * d6,
            slip + tau * d7,
        ])

    def labeler(x):
        if x is OUT:
            return frozenset()
        corners = bmw_car_corners(x[0], x[1], x[4])
        labels = set()
        if oriented_rect_hits_aabb(corners, scenario.goal):
            labels.add("goal")
        if oriented_rect_hits_aabb(corners, scenario.obstacle):
            labels.add("hit")
        return frozenset(labels)

    box = np.array([
        [0.0, 84.0],     # sx
        [0.0, 6.0],      # sy
        [-0.18, 0.18],   # steering angle
        [12.0, 21.0],    # velocity
        [-0.5, 0.5],     # yaw
        [-0.8, 0.8],     # yaw rate
        [-0.1, 0.1],     # slip angle
    ])
    return _validate(SystemModel(
        name="bmw320i",
        box=box,
        inputs=inputs,
        noise_sigma=np.full(7, 0.5),
        drift=drift,
        labeler=labeler,
        ap=("goal", "hit"),
        extra={"scenario": scenario, "params": dict(p)},
    ))


BENCHMARKS = {"room": make_room, "traffic": make_traffic, "bmw": make_bmw}


# ------------------------------------------------- transition density tools

def lipschitz_linear_gaussian(a_upper, sigma) -> float:
    """Exact Lipschitz constant of x -> density(.|x) for linear dynamics with
    additive per-dimension Gaussian noise: sum_ij 2 |a_ij| / (sigma_i sqrt(2 pi)).
    """
    a_upper = np.atleast_2d(np.asarray(a_upper, dtype=float))
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    if np.any(sigma <= 0):
        raise ConfigurationError("noise scales must be positive")
    return float(np.sum(2.0 * np.abs(a_upper) / (sigma[:, None] * _SQRT_2PI)))


@dataclass(frozen=True)
class TrajectorySamples:
    """One-step transition samples (x, input, successor)."""

    x: np.ndarray    # (N, n)
    u: np.ndarray    # (N, m)
    xp: np.ndarray   # (N, n)

    def __post_init__(self):
        if not (len(self.x) == len(self.u) == len(self.xp)) or len(self.x) == 0:
            raise ConfigurationError("sample arrays must share a nonzero length")


def collect_samples(model: SystemModel, n_per_input: int, seed: int) -> TrajectorySamples:
    """Uniformly sampled states stepped once under every input."""
    rng = np.random.default_rng(seed)
    xs, us, xps = [], [], []
    lo, hi = model.box[:, 0], model.box[:, 1]
    for i in range(model.n_inputs):
        x = rng.uniform(lo, hi, size=(n_per_input, model.dim))
        for row in x:
            noise = model.sample_noise(rng)
            xs.append(row)
            us.append(model.inputs[i])
            xps.append(model.step(row, i, noise))
    return TrajectorySamples(np.array(xs), np.array(us), np.array(xps))


def save_samples(path, samples: TrajectorySamples) -> None:
    n, m = samples.x.shape[1], samples.u.shape[1]
    header = ([f"x_{i+1}" for i in range(n)] + [f"nu_{j+1}" for j in range(m)]
              + [f"xp_{i+1}" for i in range(n)])
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for x, u, xp in zip(samples.x, samples.u, samples.xp):
            writer.writerow([repr(float(v)) for v in (*x, *u, *xp)])


def load_samples(path) -> TrajectorySamples:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = sum(1 for h in header if h.startswith("x_"))
        m = sum(1 for h in header if h.startswith("nu_"))
        rows = [[float(v) for v in row] for row in reader]
    data = np.array(rows)
    if data.shape[1] != 2 * n + m:
        raise ConfigurationError(f"malformed sample file {path}")
    return TrajectorySamples(data[:, :n], data[:, n:n + m], data[:, n + m:])


def silverman_bandwidth(values: np.ndarray) -> float:
    """Rule-of-thumb kernel bandwidth 1.06 * std * N^(-1/5) (floored away from 0)."""
    values = np.asarray(values, dtype=float)
    return max(1.06 * float(values.std()) * len(values) ** (-0.2), 1e-12)


def _norm_kernel(y: np.ndarray, h: float, dim: int) -> np.ndarray:
    """Scaled kernel h^-dim K(y/h) with K the standard normal density."""
    return np.exp(-0.5 * (y / h) ** 2) / (_SQRT_2PI ** dim * h ** dim)


def ckde_density(samples: TrajectorySamples, x_next, x, nu,
                 h_next: float | None = None, h_weight: float | None = None) -> float:
    """Conditional kernel density estimate of the transition density.

    Weighted mixture over samples with matching input: successor kernels
    centered at sampled successors, weights from the distance between the
    query state and the sampled states.
    """
    nu = np.atleast_1d(np.asarray(nu, dtype=float))
    mask = np.all(np.isclose(samples.u, nu[None, :], rtol=0.0, atol=1e-12), axis=1)
    if not mask.any():
        raise EstimationError(f"no samples for input {nu!r}")
    xs, xps = samples.x[mask], samples.xp[mask]
    dim = xs.shape[1]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_next = np.atleast_1d(np.asarray(x_next, dtype=float))
    if h_next is None:
        h_next = float(np.mean([silverman_bandwidth(xps[:, d]) for d in range(dim)]))
    if h_weight is None:
        h_weight = float(np.mean([silverman_bandwidth(xs[:, d]) for d in range(dim)]))
    dist = np.linalg.norm(xs - x[None, :], axis=1)
    weights = _norm_kernel(dist, h_weight, dim)
    denom = weights.sum()
    if denom <= 0.0 or not np.isfinite(denom):
        raise EstimationError(
            f"degenerate query: no sample mass near x={x!r} (denominator {denom})")
    sq = np.sum((xps - x_next[None, :]) ** 2, axis=1)
    kernels = np.exp(-0.5 * sq / h_next ** 2) / (_SQRT_2PI ** dim * h_next ** dim)
    return float(np.dot(weights, kernels) / denom)


@dataclass(frozen=True)
class LipschitzEstimate:
    value: float
    grid_resolution: int
    fd_step: float
    h_next: float
    h_weight: float


def lipschitz_estimate(samples: TrajectorySamples, grid_resolution: int = 15,
                       fd_step: float | None = None, h_next: float | None = None,
                       h_weight: float | None = None) -> LipschitzEstimate:
    """Finite-difference estimate of the density's Lipschitz constant in x.

    Maximizes the central-difference gradient norm of ckde_density over an
    inclusive-endpoint grid of (successor, state) pairs and over all sampled
    inputs; doubling the resolution via 2r-1 points reuses the same grid
    nodes, so the estimate can only grow.  Bandwidths default to Silverman's
    rule averaged over dimensions.
    """
    dim = samples.x.shape[1]
    if h_next is None:
        h_next = float(np.mean([silverman_bandwidth(samples.xp[:, d])
                                for d in range(dim)]))
    if h_weight is None:
        h_weight = float(np.mean([silverman_bandwidth(samples.x[:, d])
                                  for d in range(dim)]))
    if fd_step is None:
        fd_step = h_weight / 10.0
    axes_x = [np.linspace(samples.x[:, d].min(), samples.x[:, d].max(),
                          grid_resolution) for d in range(dim)]
    axes_xp = [np.linspace(samples.xp[:, d].min(), samples.xp[:, d].max(),
                           grid_resolution) for d in range(dim)]
    inputs = np.unique(samples.u, axis=0)
    best = 0.0
    for nu in inputs:
        for x in _grid_points(axes_x):
            for xp in _grid_points(axes_xp):
                grad_sq = 0.0
                for d in range(dim):
                    e = np.zeros(dim)
                    e[d] = fd_step
                    hi = ckde_density(samples, xp, x + e, nu, h_next, h_weight)
                    lo = ckde_density(samples, xp, x - e, nu, h_next, h_weight)
                    grad_sq += ((hi - lo) / (2.0 * fd_step)) ** 2
                best = max(best, math.sqrt(grad_sq))
    return LipschitzEstimate(best, grid_resolution, fd_step, h_next, h_weight)


def _grid_points(axes):
    if len(axes) == 1:
        for v in axes[0]:
            yield np.array([v])
        return
    mesh = np.meshgrid(*axes, indexing="ij")
    for idx in np.ndindex(*mesh[0].shape):
        yield np.array([m[idx] for m in mesh])
