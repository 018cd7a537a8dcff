"""Ground-truth data generators for all demonstration domains.

Every generator is a pure function of (parameters, seed); per-trajectory
rngs are spawned from the master seed with ``numpy.random.SeedSequence``
so ensembles are reproducible regardless of evaluation order.
"""

from dataclasses import dataclass
import math
import random

import numpy as np

from .autodiff import input_gradient
from .training import Dataset


# ---------------------------------------------------------------------------
# 1D multi-well targets

WELL_RANGE = (-3.0, 3.0)


def well_double(x):
    """Asymmetric quartic double well."""
    return 0.4 * (0.25 * x ** 4 - x ** 2 + 0.125 * x ** 3)


def well_modulated(x):
    """Cosine-modulated quadratic well."""
    return (x ** 2 + 1.6 * np.cos(4.0 * x) + 1.0) / 20.0


_MINMIX_CENTERS = np.array([-1.0, 0.0, 2.0])
_MINMIX_SCALES = np.array([12.0, 8.0, 4.0])
_MINMIX_OFFSETS = np.array([2.0, -0.5, 1.0])


def well_minmix(x):
    """Three-well minimum mixture of scaled parabolas."""
    x = np.asarray(x, dtype=np.float64)
    branches = (_MINMIX_SCALES * 0.05 * (x[..., None] - _MINMIX_CENTERS) ** 2
                + _MINMIX_OFFSETS)
    return branches.min(axis=-1)


WELLS = {"double": well_double, "modulated": well_modulated, "minmix": well_minmix}


def sample_1d_dataset(well_id, n=200, x_range=WELL_RANGE, seed=0):
    """Random training set plus the deterministic equispaced reporting grid.

    Returns (dataset, grid_x, grid_y) with 200 grid points over the range.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    fn = WELLS[well_id]
    rng = np.random.default_rng(seed)
    x = rng.uniform(x_range[0], x_range[1], size=n)
    grid_x = np.linspace(x_range[0], x_range[1], 200)
    return Dataset(x[:, None], fn(x)[:, None]), grid_x, fn(grid_x)


# ---------------------------------------------------------------------------
# mechanochemical free energy

MECHCHEM_DC = 2.0
MECHCHEM_DE = 0.1
MECHCHEM_SE = 0.1

# input coordinate order used throughout: (E11, E22, E33, E12, E13, E23, c)
MECHCHEM_DIM = 7


@dataclass
class StrainState:
    E: np.ndarray      # symmetric 3x3
    c: float

    def coords(self):
        E = self.E
        return np.array([E[0, 0], E[1, 1], E[2, 2],
                         E[0, 1], E[0, 2], E[1, 2], self.c])


def strain_state(coords):
    e11, e22, e33, e12, e13, e23, c = coords
    E = np.array([[e11, e12, e13], [e12, e22, e23], [e13, e23, e33]])
    return StrainState(E, float(c))


def mechchem_energy_coords(q):
    """Free energy as a function of the 7 coordinates; works on floats or
    dual numbers.  The polynomial is implemented exactly as printed in the
    source model, including its unusual groupings in the last two terms."""
    e11, e22, e33, e12, e13, e23, c = q
    dc, de, se = MECHCHEM_DC, MECHCHEM_DE, MECHCHEM_SE
    chem = dc * (96.0 * c ** 2 - 192.0 * c ** 3 + 96.0 * c ** 4)
    cubic = (2.0 * math.sqrt(2.0 / 3.0) * de / se ** 3 * (c - 1.0)
             * (e11 + e22 - 2.0 * e33)
             * (e11 - 2.0 * e22 + e33)
             * (2.0 * e11 - e22 - e33))
    quad = (6.0 * de / se ** 2 * (2.0 * c - 1.0)
            * (e11 ** 2 + e22 ** 2 + e33 ** 2
               - e22 * e33 - e11 * e22 - e11 * e33))
    quart = (4.0 * de / se
             * (e11 ** 2 + e22 ** 2 + e33 ** 2
                - e22 * e33 - e11 * (e22 + e33) ** 2))
    shear = (de / (2.0 * se)
             * (6.0 * (e12 ** 2 + e13 ** 2 + e23 ** 2)
                + (e11 + e22 + e33 ** 2)))
    return chem + cubic + quad + quart + shear


def mechchem_energy(state):
    return float(mechchem_energy_coords(list(state.coords())))


def mechchem_gradients(state):
    """Stress components and chemical potential via dual-number passes.

    The stress is reported in the 7-coordinate convention: each off-diagonal
    entry is the derivative with respect to its single independent
    coordinate, mirrored to keep S symmetric.
    """
    g = input_gradient(mechchem_energy_coords, state.coords())
    S = np.array([[g[0], g[3], g[4]],
                  [g[3], g[1], g[5]],
                  [g[4], g[5], g[2]]])
    return S, float(g[6])


MECHCHEM_DIAG_BOX = 0.15
MECHCHEM_OFFDIAG_BOX = 0.05


@dataclass
class MechchemData:
    train: Dataset
    test: Dataset
    x_mean: np.ndarray
    x_std: np.ndarray
    raw_inputs: np.ndarray
    raw_targets: np.ndarray
    raw_potential: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray

    def normalize_inputs(self, X):
        return (X - self.x_mean) / self.x_std

    def denormalize_inputs(self, Xn):
        return Xn * self.x_std + self.x_mean

    def scale_gradients(self, Y):
        """Chain-rule scaling: gradients w.r.t. normalized inputs."""
        return Y * self.x_std

    def unscale_gradients(self, Yn):
        return Yn / self.x_std


def mechchem_sample_coords(n, rng):
    diag = rng.uniform(-MECHCHEM_DIAG_BOX, MECHCHEM_DIAG_BOX, size=(n, 3))
    off = rng.uniform(-MECHCHEM_OFFDIAG_BOX, MECHCHEM_OFFDIAG_BOX, size=(n, 3))
    c = rng.uniform(0.0, 1.0, size=(n, 1))
    return np.hstack([diag, off, c])


def mechchem_dataset(n=1000, seed=0, train_fraction=0.8):
    """Random strain/concentration states with exact gradient targets.

    Inputs are z-scored; gradient targets are chain-rule scaled by the
    per-coordinate std so they remain gradients of a single potential in
    the normalized coordinates.  Split is disjoint 80/20 by permutation.
    """
    if n < 10:
        raise ValueError("n must be >= 10")
    rng = np.random.default_rng(seed)
    X = mechchem_sample_coords(n, rng)
    Y = np.empty_like(X)
    psi = np.empty(n)
    for i in range(n):
        Y[i] = input_gradient(mechchem_energy_coords, X[i])
        psi[i] = mechchem_energy_coords(list(X[i]))
    x_mean = X.mean(axis=0)
    x_std = X.std(axis=0)
    Xn = (X - x_mean) / x_std
    Yn = Y * x_std
    perm = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    tr, te = perm[:n_train], perm[n_train:]
    data = MechchemData(Dataset(Xn[tr], Yn[tr]), Dataset(Xn[te], Yn[te]),
                        x_mean, x_std, X, Y, psi, tr, te)
    return data


def mechchem_path(t):
    """Validation strain-concentration trajectory, t in [0, 1]."""
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    E = np.diag([0.4 * t, -0.12 * t, -0.12 * t])
    return StrainState(E, t)


# ---------------------------------------------------------------------------
# Schlogl stochastic kinetics


@dataclass
class SchloglParams:
    # canonical bistable rate set (reproducibility choice); the mean-field
    # cubic has stable roots near 85 and 563 with an unstable root between
    k1: float = 3e-7
    k2: float = 1e-4
    k3: float = 1e-3
    k4: float = 3.5
    a: float = 1e5
    b: float = 2e5
    t_end: float = 5.0
    n_snapshots: int = 5

    def snapshot_times(self):
        return np.linspace(self.t_end / self.n_snapshots, self.t_end,
                           self.n_snapshots)


def schlogl_propensities(x, p):
    a1 = p.k1 * p.a * x * (x - 1) / 2.0
    a2 = p.k2 * x * (x - 1) * (x - 2) / 6.0
    a3 = p.k3 * p.b
    a4 = p.k4 * x
    return a1, a2, a3, a4


def schlogl_ode_rhs(x, p):
    """Mean-field rate of the jump process (propensity balance)."""
    a1, a2, a3, a4 = schlogl_propensities(x, p)
    return a1 - a2 + a3 - a4


def schlogl_deterministic_roots(p):
    """Roots of the macroscopic cubic, ascending.  Bistability oracle:
    expect [stable, unstable, stable]."""
    # continuum limit of the propensity balance: x(x-1) -> x^2 etc.
    coeffs = [-p.k2 / 6.0, p.k1 * p.a / 2.0, -p.k4, p.k3 * p.b]
    roots = np.roots(coeffs)
    real = np.sort(roots[np.abs(roots.imag) < 1e-9].real)
    return real


def schlogl_ssa(params, x0, seed):
    """Exact Gillespie simulation of one trajectory.

    Returns the molecule counts at the parameter-defined snapshot times.
    A zero total propensity freezes the state until t_end.
    """
    times = params.snapshot_times()
    rnd = random.Random(seed)
    x = int(x0)
    t = 0.0
    out = np.empty(len(times), dtype=np.int64)
    k = 0
    k1a, k2, k3b, k4 = (params.k1 * params.a, params.k2,
                        params.k3 * params.b, params.k4)
    while k < len(times):
        a1 = k1a * x * (x - 1) * 0.5
        a2 = k2 * x * (x - 1) * (x - 2) / 6.0
        a4 = k4 * x
        a0 = a1 + a2 + k3b + a4
        if a0 <= 0.0:
            # absorbing state: hold x until t_end
            out[k:] = x
            break
        t += -math.log(1.0 - rnd.random()) / a0
        while k < len(times) and t > times[k]:
            out[k] = x
            k += 1
        if k >= len(times):
            break
        u = rnd.random() * a0
        if u < a1:
            x += 1
        elif u < a1 + a2:
            x -= 1
        elif u < a1 + a2 + k3b:
            x += 1
        else:
            x -= 1
    return times, out


def schlogl_ensemble(params=None, n_traj=200, seed=0):
    """Ensemble of SSA trajectories started near the two stable modes.

    Initial counts are Poisson draws around each deterministic stable root,
    alternating between the two so the ensemble stays balanced.
    """
    params = params or SchloglParams()
    roots = schlogl_deterministic_roots(params)
    if len(roots) != 3:
        raise ValueError("rate parameters are not bistable")
    low, high = roots[0], roots[2]
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n_traj)
    counts = np.empty((n_traj, params.n_snapshots), dtype=np.int64)
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        x0 = rng.poisson(low if i % 2 == 0 else high)
        traj_seed = int(rng.integers(0, 2 ** 63 - 1))
        _, counts[i] = schlogl_ssa(params, x0, traj_seed)
    return params.snapshot_times(), counts


# ---------------------------------------------------------------------------
# gene circuit


@dataclass
class GeneParams:
    a: float = 1.0
    p1: float = 1.0
    p2: float = 1.0
    b: float = 0.1
    S: float = 1.0
    n: int = 4


def gene_rhs(x, params):
    """Two-gene regulatory field; conservative by construction (the cross
    partials of the two components are symmetric)."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    p = params
    sn = p.S ** p.n
    d1 = sn + x1 ** p.n
    d2 = sn + x2 ** p.n
    f1 = (p.a * x1 * (p.p1 - x1) + p.b / d2
          - p.b * p.n * x1 ** (p.n - 1) * x2 / d1 ** 2)
    f2 = (p.a * x2 * (p.p2 - x2) + p.b / d1
          - p.b * p.n * x2 ** (p.n - 1) * x1 / d2 ** 2)
    return np.stack([f1, f2], axis=-1)


def gene_potential(x, params):
    """Closed-form potential with gene_rhs = -grad(potential); used as an
    independent oracle for conservativity and well locations."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    p = params
    sn = p.S ** p.n
    logistic = (p.a * (p.p1 * x1 ** 2 / 2.0 - x1 ** 3 / 3.0)
                + p.a * (p.p2 * x2 ** 2 / 2.0 - x2 ** 3 / 3.0))
    cross = p.b * x1 / (sn + x2 ** p.n) + p.b * x2 / (sn + x1 ** p.n)
    return -(logistic + cross)


def gene_trajectories(params, n_traj=40, t_end=10.0, dt=0.02, seed=0,
                      ic_box=(0.0, 2.0)):
    """Classical RK4 integration from random initial states, clipped at 0.

    Returns (times, states) with states of shape (n_traj, n_steps + 1, 2).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rng = np.random.default_rng(seed)
    n_steps = int(round(t_end / dt))
    times = np.arange(n_steps + 1) * dt
    states = np.empty((n_traj, n_steps + 1, 2))
    for i in range(n_traj):
        x = rng.uniform(ic_box[0], ic_box[1], size=2)
        states[i, 0] = x
        for k in range(n_steps):
            x = np.maximum(_rk4_step(lambda y: gene_rhs(y, params), x, dt), 0.0)
            states[i, k + 1] = x
    return times, states


def _rk4_step(f, x, dt):
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# ---------------------------------------------------------------------------
# elastic instability (two-phase mixture with return mapping)


@dataclass
class ElasticParams:
    K: float = 1.0
    G: float = 0.5
    eps0: float = -0.1
    dpsi: float = 0.006
    k_plus: float = 0.006
    k_minus: float = 0.006

    @property
    def uniaxial_modulus(self):
        return self.K + 4.0 * self.G / 3.0

    @property
    def e0_C_e0(self):
        """Transformation-strain consistency constant E0 : C E0."""
        return self.eps0 ** 2 * self.uniaxial_modulus


def elastic_response(e11_path, params=None, freeze_c=None):
    """Uniaxial stress/phase response along an E11(t) path.

    Per step: evaluate the trial driving force kappa at frozen c; if it
    exceeds a threshold, set c from the algebraic consistency solution
    (clipped to [0, 1]); recompute stress and kappa.  ``freeze_c`` pins the
    phase fraction (fixed-phase material) and disables the flow rule.

    Returns (S11, c, kappa) arrays.
    """
    params = params or ElasticParams()
    e11_path = np.asarray(e11_path, dtype=np.float64)
    if e11_path.ndim != 1:
        raise ValueError("expected a 1D sequence of E11 values")
    M = params.uniaxial_modulus
    eps0, dpsi = params.eps0, params.dpsi
    denom = params.e0_C_e0
    c = freeze_c if freeze_c is not None else 0.0
    S = np.empty_like(e11_path)
    C = np.empty_like(e11_path)
    KAPPA = np.empty_like(e11_path)
    for i, e in enumerate(e11_path):
        kappa = eps0 * M * (e - c * eps0) - dpsi
        if freeze_c is None:
            if kappa > params.k_plus and c < 1.0:
                c = np.clip((eps0 * M * e - dpsi - params.k_plus) / denom, 0.0, 1.0)
            elif kappa < -params.k_minus and c > 0.0:
                c = np.clip((eps0 * M * e - dpsi + params.k_minus) / denom, 0.0, 1.0)
        S[i] = M * (e - c * eps0)
        C[i] = c
        KAPPA[i] = eps0 * S[i] - dpsi
    return S, C, KAPPA


def sawtooth_paths(n_paths=400, n_steps=100, seed=0,
                   neg_amp=(-0.2, -0.05), pos_amp=(0.0, 0.05)):
    """Piecewise-linear cyclic E11 paths with random periods and amplitudes.

    Turning-point targets alternate compressive / tensile so every path
    traverses the transformation strain range.  All paths start at 0 and
    are resampled onto a uniform grid of n_steps points.
    """
    ss = np.random.SeedSequence(seed)
    paths = np.empty((n_paths, n_steps))
    grid = np.linspace(0.0, 1.0, n_steps)
    for i, child in enumerate(ss.spawn(n_paths)):
        rng = np.random.default_rng(child)
        t_pts = [0.0]
        v_pts = [0.0]
        negative = True
        while t_pts[-1] < 1.0:
            t_pts.append(t_pts[-1] + rng.uniform(0.1, 0.35))
            v_pts.append(rng.uniform(*neg_amp) if negative
                         else rng.uniform(*pos_amp))
            negative = not negative
        paths[i] = np.interp(grid, t_pts, v_pts)
    return paths


# ---------------------------------------------------------------------------
# CSV emission


def write_wells_csv(path, dataset):
    np.savetxt(path, np.hstack([dataset.inputs, dataset.targets]),
               delimiter=",", header="x,y", comments="")


def write_mechchem_csv(path, data):
    header = "E11,E22,E33,E12,E13,E23,c,S11,S22,S33,S12,S13,S23,mu"
    np.savetxt(path, np.hstack([data.raw_inputs, data.raw_targets]),
               delimiter=",", header=header, comments="")


def write_schlogl_csv(path, times, counts):
    rows = []
    for i in range(counts.shape[0]):
        for t, x in zip(times, counts[i]):
            rows.append((i, t, x))
    np.savetxt(path, np.array(rows), delimiter=",",
               header="traj_id,t,x", comments="")


def write_gene_csv(path, times, states, params):
    rows = []
    for i in range(states.shape[0]):
        for k, t in enumerate(times):
            dx = gene_rhs(states[i, k], params)
            rows.append((i, t, states[i, k, 0], states[i, k, 1], dx[0], dx[1]))
    np.savetxt(path, np.array(rows), delimiter=",",
               header="traj_id,t,x1,x2,dx1,dx2", comments="")


def write_elastic_csv(path, paths, params=None):
    params = params or ElasticParams()
    n_steps = paths.shape[1]
    t = np.linspace(0.0, 1.0, n_steps)
    rows = []
    for i in range(paths.shape[0]):
        S, c, kappa = elastic_response(paths[i], params)
        for k in range(n_steps):
            rows.append((i, t[k], paths[i, k], S[k], c[k], kappa[k]))
    np.savetxt(path, np.array(rows), delimiter=",",
               header="path_id,t,E11,S11,c,kappa", comments="")
