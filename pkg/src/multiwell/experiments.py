"""End-to-end experiment pipelines: generate data, train, evaluate, emit
metrics and CSV artifacts.

Each experiment keeps its data seed separate from the model seed, so a
multi-seed sweep varies only the network initialization (the protocol used
for the mode-discovery statistics).
"""

from dataclasses import dataclass, field
import os
import time

import numpy as np

from . import datagen, density, io, mixture
from .datagen import (ElasticParams, GeneParams, SchloglParams,
                      mechchem_energy_coords, mechchem_path, sample_1d_dataset)
from .mixture import LSEConfig, LSEModel, active_mode_count
from .training import Dataset, TrainConfig, train

FULL_PROTOCOL_EPOCHS = 150_000

EXPERIMENT_DEFAULTS = {
    "wells1d": dict(n_modes=10, n_hidden_layers=2, hidden_width=10,
                    epochs=30_000, variant="double"),
    "mechchem": dict(n_modes=5, n_hidden_layers=2, hidden_width=10,
                     epochs=30_000, variant=None),
    "schlogl": dict(n_modes=5, n_hidden_layers=2, hidden_width=10,
                    epochs=4_000, variant=None),
    "elastic": dict(n_modes=2, n_hidden_layers=2, hidden_width=10,
                    epochs=10_000, variant=None),
    "gene": dict(n_modes=3, n_hidden_layers=3, hidden_width=8,
                 epochs=20_000, variant="1.0"),
}


@dataclass
class ExperimentSpec:
    experiment: str
    variant: str = None
    seed: int = 0
    data_seed: int = 0
    out_dir: str = None
    epochs: int = None
    full_protocol: bool = False
    n_modes: int = None
    n_hidden_layers: int = None
    hidden_width: int = None
    train_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_DEFAULTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        d = EXPERIMENT_DEFAULTS[self.experiment]
        if self.variant is None:
            self.variant = d["variant"]
        for name in ("n_modes", "n_hidden_layers", "hidden_width"):
            if getattr(self, name) is None:
                setattr(self, name, d[name])
        if self.epochs is None:
            self.epochs = FULL_PROTOCOL_EPOCHS if self.full_protocol else d["epochs"]

    def model_config(self, input_dim):
        return LSEConfig(input_dim, self.n_modes, self.n_hidden_layers,
                         self.hidden_width)

    def train_config(self, loss_kind, **kw):
        args = dict(epochs=self.epochs, loss_kind=loss_kind, seed=self.seed,
                    record_every=max(1, self.epochs // 2000))
        args.update(kw)
        args.update(self.train_overrides)
        return TrainConfig(**args)


@dataclass
class MetricsReport:
    experiment: str
    seed: int
    rmse: float = float("nan")
    r_squared: float = float("nan")
    final_active_modes: int = -1
    final_rho: float = float("nan")
    well_count: int = -1
    epochs: int = 0
    wall_time_s: float = 0.0
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        d = {"experiment": self.experiment, "seed": self.seed,
             "rmse": self.rmse, "r2": self.r_squared,
             "active_modes": self.final_active_modes, "rho": self.final_rho,
             "well_count": self.well_count, "epochs": self.epochs,
             "wall_time_s": self.wall_time_s}
        d.update(self.extra)
        return d


# ---------------------------------------------------------------------------
# metrics helpers


def r_squared(pred, truth):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.size == 0 or pred.size != truth.size:
        raise ValueError("prediction/truth length mismatch")
    ss_tot = np.sum((truth - truth.mean()) ** 2)
    if ss_tot == 0:
        raise ValueError("truth is constant")
    return float(1.0 - np.sum((truth - pred) ** 2) / ss_tot)


def pearson(a, b):
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    return float(np.corrcoef(a, b)[0, 1])


def count_wells(fn_or_model, grid, merge_cells=2):
    """Strict local minima of a scalar function on a lattice.

    ``grid`` is a 1D abscissa array or a tuple of two axis arrays (2D).
    Minima closer than ``merge_cells`` lattice cells are merged (the deeper
    one survives) to suppress discretization artifacts.
    """
    fn = fn_or_model.forward if isinstance(fn_or_model, LSEModel) else fn_or_model
    if isinstance(grid, tuple):
        ax, ay = grid
        if len(ax) == 0 or len(ay) == 0:
            raise ValueError("empty lattice")
        XX, YY = np.meshgrid(ax, ay, indexing="ij")
        pts = np.column_stack([XX.ravel(), YY.ravel()])
        v = np.asarray(fn(pts)).reshape(len(ax), len(ay))
        minima = []
        for i in range(1, len(ax) - 1):
            for j in range(1, len(ay) - 1):
                neighbors = np.delete(v[i - 1:i + 2, j - 1:j + 2].ravel(), 4)
                if np.all(v[i, j] < neighbors):
                    minima.append(((i, j), v[i, j]))
    else:
        grid = np.asarray(grid)
        if grid.size == 0:
            raise ValueError("empty lattice")
        v = np.asarray(fn(grid[:, None] if isinstance(fn_or_model, LSEModel)
                          else grid)).ravel()
        # collapse runs of equal values so a minimum sitting exactly between
        # two symmetric lattice points (a two-sample plateau) still counts
        starts = np.flatnonzero(np.concatenate([[True], np.diff(v) != 0]))
        w = v[starts]
        minima = [((starts[i],), w[i]) for i in range(1, len(w) - 1)
                  if w[i] < w[i - 1] and w[i] < w[i + 1]]
    minima.sort(key=lambda m: m[1])
    kept = []
    for idx, val in minima:
        if all(max(abs(a - b) for a, b in zip(idx, kidx)) > merge_cells
               for kidx, _ in kept):
            kept.append((idx, val))
    return len(kept)


# ---------------------------------------------------------------------------
# pipelines


def run_experiment(spec):
    os.makedirs(spec.out_dir, exist_ok=True) if spec.out_dir else None
    t0 = time.perf_counter()
    runner = {
        "wells1d": _run_wells1d,
        "mechchem": _run_mechchem,
        "schlogl": _run_schlogl,
        "elastic": _run_elastic,
        "gene": _run_gene,
    }[spec.experiment]
    report, model = runner(spec)
    report.wall_time_s = time.perf_counter() - t0
    report.epochs = spec.epochs
    if spec.out_dir:
        io.write_metrics(os.path.join(spec.out_dir, "metrics.json"),
                         report.as_dict())
    return report, model


def _finalize(spec, model, history, normalizers=None, generator=None):
    if spec.out_dir:
        io.save_checkpoint(os.path.join(spec.out_dir, "checkpoint.json"),
                           model, normalizers, generator)
        history.to_csv(os.path.join(spec.out_dir, "history.csv"))


def _run_wells1d(spec):
    ds, gx, gy = sample_1d_dataset(spec.variant, seed=spec.data_seed)
    model = LSEModel.create(spec.model_config(1), seed=spec.seed)
    model, history = train(model, ds, spec.train_config("value"))
    pred = model.forward(gx[:, None])
    rmse = float(np.sqrt(np.mean((pred - gy) ** 2)))
    report = MetricsReport(
        "wells1d", spec.seed, rmse=rmse, r_squared=r_squared(pred, gy),
        final_active_modes=active_mode_count(model), final_rho=model.rho,
        well_count=count_wells(model, gx),
        extra={"variant": spec.variant,
               "rel_rmse": rmse / (gy.max() - gy.min())})
    _finalize(spec, model, history, generator={"well": spec.variant})
    if spec.out_dir:
        datagen.write_wells_csv(os.path.join(spec.out_dir, "wells1d.csv"), ds)
        np.savetxt(os.path.join(spec.out_dir, "predictions.csv"),
                   np.column_stack([gx, gy, pred]), delimiter=",",
                   header="x,y_true,y_pred", comments="")
    return report, model


def _run_mechchem(spec):
    data = datagen.mechchem_dataset(1000, seed=spec.data_seed)
    model = LSEModel.create(spec.model_config(datagen.MECHCHEM_DIM),
                            seed=spec.seed)
    model, history = train(model, data.train, spec.train_config("gradient"))
    grad_pred = model.input_gradient(data.test.inputs)
    r2 = r_squared(grad_pred, data.test.targets)
    psi_pred = model.forward(data.test.inputs)
    psi_true = data.raw_potential[data.test_idx]
    corr = pearson(psi_pred, psi_true)
    rmse = float(np.sqrt(np.mean((grad_pred - data.test.targets) ** 2)))
    report = MetricsReport(
        "mechchem", spec.seed, rmse=rmse, r_squared=r2,
        final_active_modes=active_mode_count(model), final_rho=model.rho,
        extra={"potential_correlation": corr})
    norms = {"x_mean": data.x_mean, "x_std": data.x_std}
    _finalize(spec, model, history, normalizers=norms)
    if spec.out_dir:
        datagen.write_mechchem_csv(os.path.join(spec.out_dir, "mechchem.csv"),
                                   data)
        _write_mechchem_path(spec, model, data)
    return report, model


def _write_mechchem_path(spec, model, data):
    ts = np.linspace(0.0, 1.0, 101)
    rows = []
    for t in ts:
        state = mechchem_path(t)
        q = state.coords()
        psi_true = mechchem_energy_coords(list(q))
        grad_true = datagen.input_gradient(mechchem_energy_coords, q)
        qn = data.normalize_inputs(q)
        psi_pred = model.forward(qn)
        grad_pred = data.unscale_gradients(model.input_gradient(qn))
        in_box = (np.all(np.abs(q[:3]) <= datagen.MECHCHEM_DIAG_BOX)
                  and np.all(np.abs(q[3:6]) <= datagen.MECHCHEM_OFFDIAG_BOX))
        rows.append([t, psi_true, psi_pred, *grad_true.ravel(),
                     *grad_pred.ravel(), 0.0 if in_box else 1.0])
    header = ("t,psi_true,psi_pred,"
              + ",".join(f"g{j}_true" for j in range(7)) + ","
              + ",".join(f"g{j}_pred" for j in range(7)) + ",extrapolation")
    np.savetxt(os.path.join(spec.out_dir, "predictions.csv"),
               np.array(rows), delimiter=",", header=header, comments="")


def _run_schlogl(spec):
    params = SchloglParams()
    times, counts = datagen.schlogl_ensemble(params, n_traj=200,
                                             seed=spec.data_seed)
    grid = density.default_grid(counts.ravel())
    cfg = density.DensityFitConfig(
        n_modes=spec.n_modes, n_hidden_layers=spec.n_hidden_layers,
        hidden_width=spec.hidden_width)
    cfg.train.epochs = spec.epochs
    kls, mode_match, rows = [], [], []
    model = history = fit = ref = None
    for s, t in enumerate(times):
        samples = counts[:, s].astype(np.float64)
        bw = density.silverman_bandwidth(samples)
        ref = density.kde(samples, bandwidth=bw, grid=grid)
        model, fit, history = density.fit_density(
            samples, cfg, seed=spec.seed, grid=grid)
        # compare at the KDE's resolution: the KDE estimates the
        # kernel-smoothed density, so smooth the fit with the same kernel
        kls.append(density.kl_divergence(ref,
                                         density.kernel_smooth(fit, bw)))
        mode_match.append(ref.n_modes() == fit.n_modes())
        for y, k, f in zip(grid, ref.density, fit.density):
            rows.append((t, y, k, f))
    report = MetricsReport(
        "schlogl", spec.seed, rmse=float("nan"), r_squared=float("nan"),
        final_active_modes=active_mode_count(model), final_rho=model.rho,
        well_count=fit.n_modes(),
        extra={"kl_final": kls[-1], "kl_per_snapshot": kls,
               "mode_match_fraction": float(np.mean(mode_match)),
               "kde_modes_final": ref.n_modes(), "fit_modes_final": fit.n_modes()})
    _finalize(spec, model, history)
    if spec.out_dir:
        datagen.write_schlogl_csv(os.path.join(spec.out_dir, "schlogl.csv"),
                                  times, counts)
        np.savetxt(os.path.join(spec.out_dir, "density.csv"), np.array(rows),
                   delimiter=",", header="t,y,kde,fit", comments="")
    return report, model


ELASTIC_FIXED_C = 0.5
ELASTIC_TRAIN_SUBSAMPLE = 2000


def _elastic_dataset(paths, params, rng=None, subsample=None):
    inputs, targets = [], []
    for path in paths:
        S, _, _ = datagen.elastic_response(path, params, freeze_c=ELASTIC_FIXED_C)
        for e, s in zip(path, S):
            inputs.append((e, ELASTIC_FIXED_C))
            targets.append((s, 0.0))
    X = np.array(inputs)
    Y = np.array(targets)
    if subsample is not None and len(X) > subsample:
        idx = rng.choice(len(X), size=subsample, replace=False)
        X, Y = X[idx], Y[idx]
    return Dataset(X, Y)


def _run_elastic(spec):
    params = ElasticParams()
    paths = datagen.sawtooth_paths(400, seed=spec.data_seed)
    n_train = 320
    rng = np.random.default_rng(spec.data_seed)
    train_ds = _elastic_dataset(paths[:n_train], params, rng,
                                ELASTIC_TRAIN_SUBSAMPLE)
    test_ds = _elastic_dataset(paths[n_train:], params)
    mask = np.array([1.0, 0.0])
    model = LSEModel.create(spec.model_config(2), seed=spec.seed)
    model, history = train(model, train_ds,
                           spec.train_config("gradient", grad_mask=mask))
    pred = model.input_gradient(test_ds.inputs)[:, 0]
    truth = test_ds.targets[:, 0]
    report = MetricsReport(
        "elastic", spec.seed,
        rmse=float(np.sqrt(np.mean((pred - truth) ** 2))),
        r_squared=r_squared(pred, truth),
        final_active_modes=active_mode_count(model), final_rho=model.rho,
        extra={"fixed_c": ELASTIC_FIXED_C,
               "consistency_constant": params.e0_C_e0})
    _finalize(spec, model, history, generator={"fixed_c": ELASTIC_FIXED_C})
    if spec.out_dir:
        datagen.write_elastic_csv(os.path.join(spec.out_dir, "elastic.csv"),
                                  paths[:5], params)
        np.savetxt(os.path.join(spec.out_dir, "predictions.csv"),
                   np.column_stack([test_ds.inputs[:, 0], truth, pred]),
                   delimiter=",", header="E11,S11_true,S11_pred", comments="")
    return report, model


GENE_LATTICE = np.linspace(0.0, 2.0, 81)
GENE_SPEED_FLOOR = 1e-3


def _gene_dataset(params, seed, n_traj=40, stride=10):
    times, states = datagen.gene_trajectories(params, n_traj=n_traj, seed=seed)
    pts = states[:, ::stride, :].reshape(-1, 2)
    vel = np.array([datagen.gene_rhs(x, params) for x in pts])
    return pts, vel, states


def _run_gene(spec):
    b = float(spec.variant)
    params = GeneParams(b=b)
    pts, vel, states = _gene_dataset(params, spec.data_seed)
    n = len(pts)
    n_train = int(0.8 * n)
    perm = np.random.default_rng(spec.data_seed).permutation(n)
    tr, te = perm[:n_train], perm[n_train:]
    # potential gradient equals minus the velocity field
    ds = Dataset(pts[tr], -vel[tr])
    model = LSEModel.create(spec.model_config(2), seed=spec.seed)
    model, history = train(model, ds, spec.train_config("gradient"))
    field_pred = -model.input_gradient(pts[te])
    field_true = vel[te]
    speeds = np.linalg.norm(field_true, axis=1)
    keep = speeds > GENE_SPEED_FLOOR
    angles = _angle_deg(field_pred[keep], field_true[keep])
    wells = count_wells(model, (GENE_LATTICE, GENE_LATTICE))
    report = MetricsReport(
        "gene", spec.seed,
        rmse=float(np.sqrt(np.mean((field_pred - field_true) ** 2))),
        r_squared=r_squared(field_pred, field_true),
        final_active_modes=active_mode_count(model), final_rho=model.rho,
        well_count=wells,
        extra={"b": b,
               "angle_p90_deg": float(np.percentile(angles, 90)),
               "angle_le_15_fraction": float(np.mean(angles <= 15.0))})
    _finalize(spec, model, history, generator={"b": b})
    if spec.out_dir:
        datagen.write_gene_csv(os.path.join(spec.out_dir, "gene.csv"),
                               np.arange(states.shape[1]) * 0.02, states[:5],
                               params)
    return report, model


def _angle_deg(a, b):
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    denom = np.maximum(na * nb, 1e-300)
    cosang = np.clip(np.sum(a * b, axis=1) / denom, -1.0, 1.0)
    return np.degrees(np.arccos(cosang))


# ---------------------------------------------------------------------------
# transient mixed potential


def transient_potential(model1, model2, k_b=0.7, b0=0.01, t_end=20.0, dt=0.02,
                        initial_states=None, seed=0, n_traj=40,
                        ic_box=(0.0, 2.0)):
    """Trajectories under the time-mixed field -grad((1-b) P1 + b P2) with
    logistic mixing db/dt = k_b (1-b) b.

    Returns (times, states, b) with states (n_traj, n_steps + 1, 2).
    """
    if model1.config.input_dim != 2 or model2.config.input_dim != 2:
        raise ValueError("transient mixing requires 2D potentials")
    if initial_states is None:
        rng = np.random.default_rng(seed)
        initial_states = rng.uniform(ic_box[0], ic_box[1], size=(n_traj, 2))
    initial_states = np.atleast_2d(initial_states)
    n_steps = int(round(t_end / dt))
    times = np.arange(n_steps + 1) * dt
    n = len(initial_states)
    states = np.empty((n, n_steps + 1, 2))
    states[:, 0] = initial_states
    bs = np.empty(n_steps + 1)
    bs[0] = b0

    def rhs(z):
        # z: (n, 3) rows (x1, x2, b)
        x = z[:, :2]
        b = z[:, 2:3]
        g1 = model1.input_gradient(x)
        g2 = model2.input_gradient(x)
        dx = -((1.0 - b) * g1 + b * g2)
        db = k_b * (1.0 - b) * b
        return np.hstack([dx, db])

    z = np.hstack([initial_states, np.full((n, 1), b0)])
    for k in range(n_steps):
        z = datagen._rk4_step(rhs, z, dt)
        states[:, k + 1] = z[:, :2]
        bs[k + 1] = z[0, 2]
    return times, states, bs


def potential_minima(model, axes, merge_cells=2):
    """Locations of the lattice minima of a 2D model (post-merge)."""
    ax, ay = axes
    XX, YY = np.meshgrid(ax, ay, indexing="ij")
    pts = np.column_stack([XX.ravel(), YY.ravel()])
    v = model.forward(pts).reshape(len(ax), len(ay))
    minima = []
    for i in range(1, len(ax) - 1):
        for j in range(1, len(ay) - 1):
            neighbors = np.delete(v[i - 1:i + 2, j - 1:j + 2].ravel(), 4)
            if np.all(v[i, j] < neighbors):
                minima.append(((i, j), v[i, j]))
    minima.sort(key=lambda m: m[1])
    kept = []
    for idx, val in minima:
        if all(max(abs(a - b) for a, b in zip(idx, kidx)) > merge_cells
               for kidx, _ in kept):
            kept.append((idx, val))
    return np.array([(ax[i], ay[j]) for (i, j), _ in kept])
