"""Resumable experiment pipeline: synth -> train -> embed -> metrics -> plot.

Stages talk to each other only through files under the output directory.
Each finished stage leaves ``markers/<stage>.done`` holding a hash of its
inputs (the config sections it reads plus the upstream stage hash), so a
rerun skips finished stages and a config edit invalidates everything
downstream of the first stage it touches.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import distill, formats, ivis, metrics, nn, svg, synth, tsne
from .formats import TAPS

log = logging.getLogger(__name__)

STAGES = ("synth", "train", "embed", "metrics", "plot")
CONDITIONS = ("UD", "D")


class MissingArtifact(FileNotFoundError):
    def __init__(self, path):
        self.path = Path(path)
        super().__init__(f"missing artifact: {self.path}")


# -- configuration -------------------------------------------------------------


@dataclass
class DatasetSpec:
    classes: int = 10
    per_class: int = 600
    dim: int = 32
    within_sigma: float = synth.DEFAULT_SIGMA
    group_spread: float = synth.GROUP_SPREAD
    test_per_class: int = 100
    seed: int = 0

    @property
    def pool_per_class(self) -> int:
        return self.per_class - self.test_per_class


@dataclass
class NetworkSpec:
    teacher_widths: list[int] = field(default_factory=lambda: [256, 256, 256, 256])
    student_widths: list[int] = field(default_factory=lambda: [32, 32, 32, 32])
    teacher_seed: int = 1000
    activation: str = "relu"


@dataclass
class TsneSpec:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    exaggeration: float = 12.0
    exaggeration_iters: int = 250
    # exact t-SNE is quadratic, so per-tap runs use a class-stratified subsample
    points: int = 300
    seeds: list[int] = field(default_factory=lambda: [0])


@dataclass
class NoiseSpec:
    n: int = 1000
    seed: int = 0
    k: int = 10


@dataclass
class MetricSpec:
    mass: float = metrics.DEFAULT_MASS
    grid: int = metrics.DEFAULT_GRID
    k: int = 10


@dataclass
class PlotSpec:
    seeds: list[int] = field(default_factory=lambda: [0])
    density_grid: int = 64


def _sgd_dict() -> dict:
    return asdict(nn.SGDConfig())


def _distill_dict() -> dict:
    d = asdict(distill.DistillConfig())
    d.pop("sgd")
    return d


def _triplet_dict() -> dict:
    d = asdict(ivis.TripletConfig())
    d.pop("seed")
    d["widths"] = list(d["widths"])
    return d


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    budgets: list[int] = field(default_factory=lambda: [40, 250, 1000, 5000])
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    network: NetworkSpec = field(default_factory=NetworkSpec)
    sgd: dict = field(default_factory=_sgd_dict)
    distill: dict = field(default_factory=_distill_dict)
    triplet: dict = field(default_factory=_triplet_dict)
    tsne: TsneSpec = field(default_factory=TsneSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    metrics: MetricSpec = field(default_factory=MetricSpec)
    plot: PlotSpec = field(default_factory=PlotSpec)
    output_dir: str = "runs/default"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.seeds:
            raise ValueError("config needs at least one seed")
        ds = self.dataset
        pool = ds.classes * ds.pool_per_class
        for b in self.budgets:
            if b <= 0 or b % ds.classes:
                raise ValueError(f"budget {b} must be positive and divisible by {ds.classes} classes")
            if b > pool:
                raise ValueError(f"budget {b} exceeds the training pool of {pool}")
        if ds.test_per_class <= 0 or ds.pool_per_class <= 0:
            raise ValueError("test_per_class must leave a non-empty training pool")
        # constructing the runtime configs validates their fields
        self.sgd_config(0)
        self.distill_config(0)
        self.triplet_config(0)

    # runtime configs

    def sgd_config(self, seed: int) -> nn.SGDConfig:
        return nn.SGDConfig(**{**self.sgd, "seed": seed})

    def distill_config(self, seed: int) -> distill.DistillConfig:
        return distill.DistillConfig(**self.distill, sgd=self.sgd_config(seed))

    def triplet_config(self, seed: int) -> ivis.TripletConfig:
        return ivis.TripletConfig(**{**self.triplet, "seed": seed})

    def tsne_config(self, seed: int) -> tsne.TsneConfig:
        t = self.tsne
        return tsne.TsneConfig(
            perplexity=t.perplexity, iterations=t.iterations, learning_rate=t.learning_rate,
            exaggeration=t.exaggeration, exaggeration_iters=t.exaggeration_iters, seed=seed,
        )

    # serialisation

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        nested = {
            "dataset": DatasetSpec, "network": NetworkSpec, "tsne": TsneSpec,
            "noise": NoiseSpec, "metrics": MetricSpec, "plot": PlotSpec,
        }
        kwargs = {}
        for k, v in d.items():
            if k in nested:
                kwargs[k] = nested[k](**v)
            elif k in ("sgd", "distill", "triplet"):
                base = {"sgd": _sgd_dict, "distill": _distill_dict, "triplet": _triplet_dict}[k]()
                extra = set(v) - set(base)
                if extra:
                    raise ValueError(f"unknown {k} keys: {sorted(extra)}")
                kwargs[k] = {**base, **v}
            else:
                kwargs[k] = v
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(formats.read_json(path))

    def dump(self, path) -> Path:
        return formats.write_json(path, self.to_dict())


# -- layout --------------------------------------------------------------------


def run_name(budget: int, seed: int, condition: str) -> str:
    return f"b{budget}_s{seed}_{condition}"


class Layout:
    def __init__(self, root):
        self.root = Path(root)

    def p(self, *parts) -> Path:
        return self.root.joinpath(*parts)

    train_csv = property(lambda self: self.p("data", "train.csv"))
    test_csv = property(lambda self: self.p("data", "test.csv"))
    noise_csv = property(lambda self: self.p("data", "noise_lift.csv"))
    noise_base_csv = property(lambda self: self.p("data", "noise_base.csv"))
    data_meta = property(lambda self: self.p("data", "meta.json"))
    teacher = property(lambda self: self.p("models", "teacher.dscm"))
    metrics_json = property(lambda self: self.p("reports", "metrics.json"))

    def split(self, budget, seed) -> Path:
        return self.p("data", "splits", f"b{budget}_s{seed}.json")

    def model(self, name) -> Path:
        return self.p("models", f"{name}.dscm")

    def train_report(self, name) -> Path:
        return self.p("reports", "train", f"{name}.json")

    def activations(self, name, tap) -> Path:
        return self.p("activations", f"{name}_{tap}.dact")

    def ivis_csv(self, name, tap) -> Path:
        return self.p("embeddings", "ivis", f"{name}_{tap}.csv")

    def ivis_summary(self, name, tap) -> Path:
        return self.p("embeddings", "ivis", f"{name}_{tap}.json")

    def tsne_csv(self, name, tap) -> Path:
        return self.p("embeddings", "tsne", f"{name}_{tap}.csv")

    def noise_embedding(self, method) -> Path:
        return self.p("embeddings", "noise", f"{method}.csv")

    def noise_summary(self) -> Path:
        return self.p("embeddings", "noise", "ivis.json")

    def marker(self, stage) -> Path:
        return self.p("markers", f"{stage}.done")

    def figure(self, *parts) -> Path:
        return self.p("figures", *parts)


def require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(path)
    return path


# -- parallel helpers ----------------------------------------------------------


def worker_count() -> int:
    """DSCOPE_THREADS caps the worker pool; 0 or unset means serial."""
    raw = os.environ.get("DSCOPE_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"DSCOPE_THREADS must be an integer, got {raw!r}") from None
    return max(n, 0)


def run_jobs(fn: Callable, jobs: list, workers: int | None = None) -> list:
    """Map ``fn`` over ``jobs`` keeping job order; results never depend on the pool."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


# -- stage hashing -------------------------------------------------------------


STAGE_INPUTS = {
    "synth": ("dataset", "noise"),
    "train": ("budgets", "seeds", "network", "sgd", "distill"),
    "embed": ("triplet", "tsne", "noise"),
    "metrics": ("metrics",),
    "plot": ("plot",),
}


def stage_hash(config: ExperimentConfig, stage: str) -> str:
    d = config.to_dict()
    prev = stage_hash(config, STAGES[STAGES.index(stage) - 1]) if stage != STAGES[0] else ""
    payload = json.dumps({"stage": stage, "prev": prev, "inputs": {k: d[k] for k in STAGE_INPUTS[stage]}},
                         sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def stage_done(config: ExperimentConfig, stage: str) -> bool:
    m = Layout(config.output_dir).marker(stage)
    return m.exists() and m.read_text().strip() == stage_hash(config, stage)


def mark_done(config: ExperimentConfig, stage: str) -> Path:
    return formats.atomic_write(Layout(config.output_dir).marker(stage), stage_hash(config, stage) + "\n")


# -- stage: synth --------------------------------------------------------------


def stage_synth(config: ExperimentConfig) -> list[Path]:
    lay = Layout(config.output_dir)
    ds_spec = config.dataset
    ds = synth.gen_cluster_dataset(
        ds_spec.classes, ds_spec.per_class, ds_spec.dim, ds_spec.within_sigma, ds_spec.seed, ds_spec.group_spread
    )
    train_idx, test_idx = distill.holdout_split(ds.labels, ds_spec.test_per_class, ds_spec.seed)
    sc = np.array([ds.superclass_map[int(l)] for l in ds.labels])
    noise = synth.gen_noise_dataset(config.noise.n, config.noise.seed)
    held = np.zeros(len(ds.labels), dtype=bool)
    held[test_idx] = True
    meta = {
        "superclass_map": {str(k): v for k, v in sorted(ds.superclass_map.items())},
        "centers": ds.centers.tolist(),
        "bayes_accuracy_test": float(np.mean(synth.nearest_center_predict(ds.centers, ds.features[held]) == ds.labels[held])),
        "lift_names": list(synth.LIFT_NAMES),
    }
    return [
        formats.write_dataset(lay.train_csv, ds.features[train_idx], ds.labels[train_idx], sc[train_idx]),
        formats.write_dataset(lay.test_csv, ds.features[test_idx], ds.labels[test_idx], sc[test_idx]),
        formats.write_dataset(lay.noise_csv, noise.lifted, noise.labels),
        formats.write_dataset(lay.noise_base_csv, noise.base, noise.labels),
        formats.write_json(lay.data_meta, meta),
    ]


def load_cluster_data(lay: Layout):
    train_x, train_y, _ = formats.read_dataset(require(lay.train_csv))
    test_x, test_y, _ = formats.read_dataset(require(lay.test_csv))
    meta = formats.read_json(require(lay.data_meta))
    sc_map = {int(k): int(v) for k, v in meta["superclass_map"].items()}
    return train_x, train_y, test_x, test_y, sc_map


# -- stage: train --------------------------------------------------------------


def _train_job(job) -> list[str]:
    root, cfg_dict, budget, seed = job
    config = ExperimentConfig.from_dict(cfg_dict)
    lay = Layout(root)
    train_x, train_y, test_x, test_y, sc_map = load_cluster_data(lay)
    teacher = nn.load_model(require(lay.teacher))
    split = distill.make_split(train_x, train_y, test_x, test_y, budget, seed, sc_map)
    net = config.network
    student = nn.init_mlp([train_x.shape[1], *net.student_widths, teacher.output_dim], seed=seed,
                          hidden_activation=net.activation)
    out = [formats.write_json(lay.split(budget, seed), {
        "budget": budget, "seed": seed, "labeled_idx": split.labeled_idx.tolist(),
    })]
    reports = {
        "UD": distill.train_undistilled(student, split, config.sgd_config(seed)),
        "D": distill.distill_student(student, teacher, split, config.distill_config(seed)),
    }
    for cond, rep in reports.items():
        name = run_name(budget, seed, cond)
        nn.save_model(rep.model, lay.model(name))
        out.append(lay.model(name))
        doc = rep.to_json()
        doc["budget"] = budget
        out.append(formats.write_json(lay.train_report(name), doc))
    return [str(p) for p in out]


def stage_train(config: ExperimentConfig) -> list[Path]:
    lay = Layout(config.output_dir)
    train_x, train_y, test_x, test_y, sc_map = load_cluster_data(lay)
    net = config.network
    n_classes = int(train_y.max()) + 1
    # the teacher sees the whole labeled pool once, shared by every budget and seed
    teacher0 = nn.init_mlp([train_x.shape[1], *net.teacher_widths, n_classes], seed=net.teacher_seed,
                           hidden_activation=net.activation)
    pool = distill.SplitDataset(train_x, train_y, train_x[:0], test_x, test_y, sc_map)
    rep = distill.train_undistilled(teacher0, pool, config.sgd_config(net.teacher_seed), condition="teacher")
    nn.save_model(rep.model, lay.teacher)
    out = [lay.teacher, formats.write_json(lay.train_report("teacher"), rep.to_json())]
    jobs = [(str(lay.root), config.to_dict(), b, s) for b in config.budgets for s in config.seeds]
    for paths in run_jobs(_train_job, jobs):
        out.extend(Path(p) for p in paths)
    return out


# -- stage: embed --------------------------------------------------------------


def run_names(config: ExperimentConfig) -> list[tuple[int, int, str, str]]:
    return [(b, s, c, run_name(b, s, c)) for b in config.budgets for s in config.seeds for c in CONDITIONS]


def _ivis_job(job) -> list[str]:
    root, cfg_dict, name, tap, seed, labels = job
    config = ExperimentConfig.from_dict(cfg_dict)
    lay = Layout(root)
    acts, _ = formats.load_activations(require(lay.activations(name, tap)))
    res = ivis.fit(ivis.prescale(acts), config.triplet_config(seed))
    return [
        str(formats.write_embedding(lay.ivis_csv(name, tap), res.coords, labels)),
        str(formats.write_json(lay.ivis_summary(name, tap), res.summary())),
    ]


def _tsne_job(job) -> list[str]:
    root, cfg_dict, name, tap, seed, rows, labels = job
    config = ExperimentConfig.from_dict(cfg_dict)
    lay = Layout(root)
    acts, _ = formats.load_activations(require(lay.activations(name, tap)))
    res = tsne.fit_tsne(ivis.prescale(acts[rows]), config.tsne_config(seed))
    return [str(formats.write_embedding(lay.tsne_csv(name, tap), res.coords, labels))]


def stratified_rows(labels: np.ndarray, count: int) -> np.ndarray:
    """First ``count // classes`` rows of every class, in row order."""
    classes = np.unique(labels)
    per = max(count // len(classes), 1)
    return np.sort(np.concatenate([np.flatnonzero(labels == c)[:per] for c in classes]))


def stage_embed(config: ExperimentConfig) -> list[Path]:
    lay = Layout(config.output_dir)
    _, _, test_x, test_y, _ = load_cluster_data(lay)
    out: list[Path] = []
    labels = test_y.tolist()

    # tap activations; identical dumps share one embedding (fit is deterministic)
    by_content: dict[tuple[str, int], tuple[str, str]] = {}
    ivis_jobs, copies = [], []
    for budget, seed, cond, name in run_names(config):
        model = nn.load_model(require(lay.model(name)))
        post = nn.forward(model, test_x)
        for tap, acts in zip(TAPS, post):
            path = formats.save_activations(lay.activations(name, tap), acts, tap)
            out.append(path)
            key = (hashlib.sha256(path.read_bytes()).hexdigest(), seed)
            if key in by_content:
                copies.append((by_content[key], (name, tap)))
            else:
                by_content[key] = (name, tap)
                ivis_jobs.append((str(lay.root), config.to_dict(), name, tap, seed, labels))
    for paths in run_jobs(_ivis_job, ivis_jobs):
        out.extend(Path(p) for p in paths)
    for (src_name, src_tap), (name, tap) in copies:
        for src, dst in ((lay.ivis_csv(src_name, src_tap), lay.ivis_csv(name, tap)),
                         (lay.ivis_summary(src_name, src_tap), lay.ivis_summary(name, tap))):
            formats.atomic_write(dst, src.read_bytes())
            out.append(dst)

    rows = stratified_rows(test_y, config.tsne.points)
    sub_labels = test_y[rows].tolist()
    tsne_jobs = [
        (str(lay.root), config.to_dict(), name, tap, seed, rows, sub_labels)
        for budget, seed, cond, name in run_names(config)
        if seed in config.tsne.seeds
        for tap in TAPS
    ]
    for paths in run_jobs(_tsne_job, tsne_jobs):
        out.extend(Path(p) for p in paths)

    out.extend(embed_noise_lift(config))
    return out


def embed_noise_lift(config: ExperimentConfig) -> list[Path]:
    lay = Layout(config.output_dir)
    lifted, labels, _ = formats.read_dataset(require(lay.noise_csv))
    x = ivis.prescale(lifted)
    res = ivis.fit(x, config.triplet_config(config.noise.seed))
    ts = tsne.fit_tsne(x, config.tsne_config(config.noise.seed))
    return [
        formats.write_embedding(lay.noise_embedding("ivis"), res.coords, labels),
        formats.write_json(lay.noise_summary(), res.summary()),
        formats.write_embedding(lay.noise_embedding("tsne"), ts.coords, labels),
    ]


# -- stage: metrics ------------------------------------------------------------


def _mean(values: Iterable[float]) -> float:
    v = [x for x in values if x == x]
    return float(np.mean(v)) if v else float("nan")


def run_metrics(config: ExperimentConfig, lay: Layout, name: str, test_x, test_y, sc_map) -> dict:
    m = config.metrics
    model = nn.load_model(require(lay.model(name)))
    votes = nn.predict(model, test_x)
    corr = metrics.superclass_correlation(votes, sc_map)
    areas, losses = {}, {}
    for tap in TAPS:
        coords, lab = formats.read_embedding(require(lay.ivis_csv(name, tap)))
        ratios = metrics.class_area_ratios(coords, lab, q=m.mass, g=m.grid)
        areas[tap] = {str(k): v for k, v in ratios.items()}
        losses[tap] = formats.read_json(require(lay.ivis_summary(name, tap)))["converged_loss"]
    acts_e, _ = formats.load_activations(require(lay.activations(name, "E")))
    coords_e, _ = formats.read_embedding(lay.ivis_csv(name, "E"))
    return {
        "accuracy": metrics.accuracy(votes, test_y),
        "correlations": {str(k): v for k, v in corr.values.items()},
        "mean_correlation": corr.mean,
        "area_ratios": areas,
        "mean_area_ratio": {tap: _mean(areas[tap].values()) for tap in TAPS},
        "convergence_losses": losses,
        "preservation": metrics.neighborhood_preservation(acts_e, coords_e, m.k),
    }


def noise_metrics(config: ExperimentConfig, lay: Layout) -> dict:
    lifted, labels, _ = formats.read_dataset(require(lay.noise_csv))
    base, _, _ = formats.read_dataset(require(lay.noise_base_csv))
    k = config.noise.k
    out = {}
    for method in ("ivis", "tsne"):
        coords, _ = formats.read_embedding(require(lay.noise_embedding(method)))
        out[method] = {
            "preservation_base": metrics.neighborhood_preservation(base, coords, k),
            "preservation_lifted": metrics.neighborhood_preservation(lifted, coords, k),
            "one_nn_quadrant_accuracy": metrics.one_nn_accuracy(coords, labels),
        }
    out["base_one_nn_quadrant_accuracy"] = metrics.one_nn_accuracy(base, labels)
    out["ivis"]["converged_loss"] = formats.read_json(require(lay.noise_summary()))["converged_loss"]
    return out


def stage_metrics(config: ExperimentConfig) -> list[Path]:
    lay = Layout(config.output_dir)
    _, _, test_x, test_y, sc_map = load_cluster_data(lay)
    teacher = nn.load_model(require(lay.teacher))
    tvotes = nn.predict(teacher, test_x)
    tcorr = metrics.superclass_correlation(tvotes, sc_map)
    runs = []
    for budget, seed, cond, name in run_names(config):
        entry = {"name": name, "budget": budget, "seed": seed, "condition": cond}
        entry.update(run_metrics(config, lay, name, test_x, test_y, sc_map))
        runs.append(entry)
    meta = formats.read_json(require(lay.data_meta))
    report = {
        "teacher": {
            "accuracy": metrics.accuracy(tvotes, test_y),
            "correlations": {str(k): v for k, v in tcorr.values.items()},
            "mean_correlation": tcorr.mean,
        },
        "bayes_accuracy": meta["bayes_accuracy_test"],
        "runs": runs,
        "summary": summarize(runs, config),
        "noise_lift": noise_metrics(config, lay),
    }
    return [formats.write_json(lay.metrics_json, report)]


def summarize(runs: list[dict], config: ExperimentConfig) -> dict:
    """Seed means per budget and condition."""
    out = {}
    for b in config.budgets:
        for cond in CONDITIONS:
            sel = [r for r in runs if r["budget"] == b and r["condition"] == cond]
            out[f"b{b}_{cond}"] = {
                "accuracy": _mean(r["accuracy"] for r in sel),
                "mean_correlation": _mean(r["mean_correlation"] for r in sel),
                "convergence_losses": {t: _mean(r["convergence_losses"][t] for r in sel) for t in TAPS},
                "mean_area_ratio": {t: _mean(r["mean_area_ratio"][t] for r in sel) for t in TAPS},
            }
    return out


# -- stage: plot ---------------------------------------------------------------


def stage_plot(config: ExperimentConfig) -> list[Path]:
    lay = Layout(config.output_dir)
    require(lay.metrics_json)
    out = []
    for budget, seed, cond, name in run_names(config):
        if seed not in config.plot.seeds:
            continue
        for tap in TAPS:
            coords, labels = formats.read_embedding(require(lay.ivis_csv(name, tap)))
            out.append(formats.atomic_write(lay.figure("ivis", f"{name}_{tap}.svg"), svg.render_scatter(coords, labels)))
            tpath = lay.tsne_csv(name, tap)
            if tpath.exists():
                tc, tl = formats.read_embedding(tpath)
                out.append(formats.atomic_write(lay.figure("tsne", f"{name}_{tap}.svg"), svg.render_scatter(tc, tl)))
        coords, labels = formats.read_embedding(lay.ivis_csv(name, "E"))
        grid = metrics.kde2d(coords, g=config.plot.density_grid)
        out.append(formats.atomic_write(lay.figure("density", f"{name}_E.svg"),
                                        svg.render_density(grid, f"{name} tap E density")))
    for method in ("ivis", "tsne"):
        coords, labels = formats.read_embedding(require(lay.noise_embedding(method)))
        out.append(formats.atomic_write(lay.figure("noise", f"{method}.svg"), svg.render_scatter(coords, labels)))
    base, labels, _ = formats.read_dataset(require(lay.noise_base_csv))
    out.append(formats.atomic_write(lay.figure("noise", "base.svg"), svg.render_scatter(base, labels)))
    return out


STAGE_FUNCS: dict[str, Callable[[ExperimentConfig], list[Path]]] = {
    "synth": stage_synth,
    "train": stage_train,
    "embed": stage_embed,
    "metrics": stage_metrics,
    "plot": stage_plot,
}


def run_stage(config: ExperimentConfig, stage: str, force: bool = False, echo: Callable[[str], None] | None = None):
    """Run one stage unless its marker matches. Returns the written paths
    (empty when skipped)."""
    if stage not in STAGE_FUNCS:
        raise ValueError(f"unknown stage {stage!r}; choose from {', '.join(STAGES)}")
    if not force and stage_done(config, stage):
        log.info("stage %s up to date, skipping", stage)
        return []
    paths = STAGE_FUNCS[stage](config)
    paths.append(mark_done(config, stage))
    if echo:
        for p in paths:
            echo(str(p))
    return paths


def run_pipeline(config: ExperimentConfig, until: str | None = None, echo=None) -> list[Path]:
    Path(config.output_dir).mkdir(parents=True, exist_ok=True)
    cfg_path = Path(config.output_dir) / "config.json"
    if not cfg_path.exists() or cfg_path.read_text() != formats.dumps_json(config.to_dict()):
        config.dump(cfg_path)
    out = []
    for stage in STAGES:
        out.extend(run_stage(config, stage, echo=echo))
        if stage == until:
            break
    return out


def clean(config: ExperimentConfig) -> None:
    shutil.rmtree(config.output_dir, ignore_errors=True)
