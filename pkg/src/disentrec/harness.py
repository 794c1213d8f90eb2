"""Hyperparameter search, multi-seed run matrix, RunRecord persistence and reporting."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .attribution import build_attribution_matrix, global_score
from .dataio import InteractionMatrix, SplitTriple, load_snapshot, split_per_user, split_sizes
from .dci import NoImportanceError, dci_scores, importance_from_suite
from .factors import FactorMatrix, load_factors
from .learners import make_learner
from .learners.base import BATCH_SIZES, DivergedError, LearnerConfig
from .probeclf import DEFAULT_GRID, balanced_accuracy, fit_probe_suite
from .rankeval import DEFAULT_CUTOFFS, evaluate, ndcg_at_k
from .stats import DEFAULT_MEASURES, correlation_grid, write_grid_csv

logger = logging.getLogger(__name__)

EFFECTIVENESS_MEASURES = DEFAULT_MEASURES[:12]
REPRESENTATION_MEASURES = ("D", "C", "lime_global", "shap_global")

# hyperparameters that actually influence each learner; used to dedupe trials
_RELEVANT = {
    "top_popular": (),
    "pure_svd": ("latent_dim",),
    "multi_dae": ("learning_rate", "latent_dim", "batch_size"),
    "multi_vae": ("learning_rate", "latent_dim", "batch_size", "beta"),
    "beta_vae": ("learning_rate", "latent_dim", "batch_size", "beta"),
    "macrid_vae": ("learning_rate", "latent_dim", "batch_size", "beta", "macro_k"),
}


class TuningError(RuntimeError):
    def __init__(self, message: str, trials: list[dict]):
        super().__init__(message)
        self.trials = trials


# --- search space ------------------------------------------------------------------------

@dataclass
class SearchSpace:
    """Ranges sampled per trial.

    ``candidates`` replaces the ranges with an explicit list of points, which
    is how a collapsed or finite space is expressed.
    """

    lr_bounds: tuple[float, float] = (math.exp(-10), math.exp(-2))
    latent_dim: tuple[int, int] = (2, 20)
    batch_sizes: tuple[int, ...] = BATCH_SIZES
    vae_beta: tuple[float, float] = (0.05, 1.0)
    beta_vae_beta: tuple[float, float] = (1.5, 10.0)
    macro_k: tuple[int, ...] = (2, 3, 4, 5)
    n_trials: int = 50
    candidates: list[dict] | None = None
    objective: str = "ndcg@100"

    def __post_init__(self):
        if self.objective != "ndcg@100":
            raise ValueError("the tuning objective is fixed to ndcg@100")

    def sample(self, model: str, rng: np.random.Generator) -> dict:
        if self.candidates:
            return dict(self.candidates[int(rng.integers(len(self.candidates)))])
        lo, hi = np.log(self.lr_bounds[0]), np.log(self.lr_bounds[1])
        point = {
            "learning_rate": float(np.exp(rng.uniform(lo, hi))),
            "batch_size": int(rng.choice(self.batch_sizes)),
        }
        if model == "macrid_vae":
            # macro_k first, then a latent size in range that it divides
            k = int(rng.choice(self.macro_k))
            dims = [m for m in range(self.latent_dim[0], self.latent_dim[1] + 1) if m % k == 0]
            point["macro_k"] = k
            point["latent_dim"] = int(rng.choice(dims))
        else:
            point["latent_dim"] = int(rng.integers(self.latent_dim[0], self.latent_dim[1] + 1))
        if model in ("multi_vae", "macrid_vae"):
            point["beta"] = float(rng.uniform(*self.vae_beta))
        elif model == "beta_vae":
            point["beta"] = float(rng.uniform(*self.beta_vae_beta))
        return point


def _trial_key(model: str, point: dict) -> str:
    rel = _RELEVANT[model]
    return json.dumps({k: point[k] for k in rel if k in point}, sort_keys=True)


def _tpe_propose(model: str, space: SearchSpace, trials: list[dict], rng: np.random.Generator,
                 n_candidates: int = 24, gamma: float = 0.25) -> dict:
    """Pick the candidate with the best good/bad Parzen density ratio."""
    done = [t for t in trials if t["status"] == "ok"]
    done.sort(key=lambda t: -t["score"])
    n_good = max(1, int(math.ceil(gamma * len(done))))
    good, bad = done[:n_good], done[n_good:] or done[n_good - 1:]

    def features(p):
        return np.array([np.log(p["learning_rate"]), p["latent_dim"], np.log2(p["batch_size"]),
                         p.get("beta", 0.0)])

    G = np.array([features(t["params"]) for t in good])
    Bd = np.array([features(t["params"]) for t in bad])
    bw = np.maximum(np.vstack([G, Bd]).std(0), 1e-3)

    def log_density(x, pts):
        z = (x - pts) / bw
        return float(np.log(np.exp(-0.5 * (z * z).sum(1)).mean() + 1e-300))

    best, best_ratio = None, -np.inf
    for _ in range(n_candidates):
        cand = space.sample(model, rng)
        x = features(cand)
        ratio = log_density(x, G) - log_density(x, Bd)
        if ratio > best_ratio:
            best, best_ratio = cand, ratio
    return best


@dataclass
class TuneResult:
    config: LearnerConfig
    score: float
    trials: list[dict]

    @property
    def n_evaluations(self) -> int:
        return sum(1 for t in self.trials if not t.get("cached"))


def _run_trial(model: str, base: dict, point: dict, split: SplitTriple, seed: int) -> dict:
    entry = {"params": point, "status": "ok", "score": None}
    try:
        cfg = LearnerConfig(**dict(base, model=model, seed=seed, **point))
        learner = make_learner(cfg).fit(split.train, split.validation)
        entry["score"] = float(ndcg_at_k(learner.scores(split.train), split.validation, 100))
        if not math.isfinite(entry["score"]):
            raise DivergedError("non-finite validation score")
    except (DivergedError, FloatingPointError, ArithmeticError) as exc:
        entry.update(status="diverged", error=str(exc))
    return entry


def tune(model: str, split: SplitTriple, space: SearchSpace | None = None, seed: int = 0,
         base: dict | None = None, strategy: str = "random", n_startup: int = 10,
         log_path=None) -> TuneResult:
    """Seeded search maximising validation NDCG@100; repeated points are not re-trained."""
    space = space or SearchSpace()
    base = dict(base or {})
    base.setdefault("max_epochs", 500)
    if split.validation.nnz == 0:
        raise ValueError("validation split is empty")
    if strategy not in ("random", "tpe"):
        raise ValueError(f"unknown strategy {strategy!r}")
    rng = np.random.default_rng(seed)
    trials: list[dict] = []
    cache: dict[str, dict] = {}
    n_trials = space.n_trials if _RELEVANT[model] else 1
    for i in range(n_trials):
        if strategy == "tpe" and i >= n_startup and any(t["status"] == "ok" for t in trials):
            point = _tpe_propose(model, space, trials, rng)
        else:
            point = space.sample(model, rng)
        key = _trial_key(model, point)
        if key in cache:
            entry = dict(cache[key], params=point, cached=True)
        else:
            entry = _run_trial(model, base, point, split, seed)
            cache[key] = entry
        entry["trial"] = i
        trials.append(entry)
        logger.info("tune %s trial %d: %s", model, i, entry.get("score"))
    if log_path is not None:
        _atomic_write_json(Path(log_path), {"model": model, "seed": seed, "trials": trials})
    ok = [t for t in trials if t["status"] == "ok"]
    if not ok:
        raise TuningError(f"all {len(trials)} trials diverged for {model}", trials)
    best = max(ok, key=lambda t: (t["score"], -t["trial"]))
    cfg = LearnerConfig(**dict(base, model=model, seed=seed, **best["params"]))
    return TuneResult(cfg, best["score"], trials)


# --- run records ---------------------------------------------------------------------------

@dataclass
class Dataset:
    name: str
    interactions: InteractionMatrix
    factors: FactorMatrix


@dataclass
class EvalSettings:
    cutoffs: tuple[int, ...] = DEFAULT_CUTOFFS
    probe_grid: dict = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_GRID.items()})
    probe_user_ratio: tuple[float, float, float] = (3, 1, 1)
    methods: tuple[str, ...] = ("lime", "shap")
    lime_samples: int = 1000
    shap_coalitions: int | None = None
    attribution_users: int | None = None
    background_size: int = 20

    def to_dict(self) -> dict:
        d = asdict(self)
        d["cutoffs"] = list(self.cutoffs)
        d["probe_user_ratio"] = list(self.probe_user_ratio)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalSettings":
        d = dict(d)
        for key in ("cutoffs", "probe_user_ratio", "methods"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class RunRecord:
    model: str
    dataset: str
    seed: int
    hyperparameters: dict
    effectiveness: dict | None = None
    dci: dict | None = None
    lime_global: float | None = None
    shap_global: float | None = None
    probes: dict | None = None
    attribution: dict | None = None
    provenance: dict = field(default_factory=dict)
    status: str = "ok"
    error: str | None = None
    wall_clock: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunRecord":
        return cls(**d)

    def comparable(self) -> dict:
        """Record content without the wall-clock field."""
        d = self.to_dict()
        d.pop("wall_clock")
        return d


def _sha(*chunks: bytes) -> str:
    h = hashlib.sha256()
    for c in chunks:
        h.update(c)
    return h.hexdigest()


def hash_interactions(m: InteractionMatrix) -> str:
    csr = m.matrix.tocsr()
    return _sha(np.asarray(csr.shape, dtype="<i8").tobytes(),
                csr.indptr.astype("<i8").tobytes(), csr.indices.astype("<i8").tobytes(),
                json.dumps([m.user_ids, m.item_ids]).encode())


def hash_factors(f: FactorMatrix) -> str:
    return _sha(np.ascontiguousarray(f.memberships, dtype=np.int8).tobytes(),
                np.asarray(f.memberships.shape, dtype="<i8").tobytes(), json.dumps(f.labels).encode())


def hash_json(obj) -> str:
    return _sha(json.dumps(obj, sort_keys=True).encode())


def provenance_for(model: str, dataset: Dataset, config: LearnerConfig, seed: int,
                   settings: EvalSettings) -> dict:
    prov = {
        "snapshot": hash_interactions(dataset.interactions),
        "factors": hash_factors(dataset.factors),
        "config": hash_json(replace(config, seed=seed).to_dict()),
        "settings": hash_json(settings.to_dict()),
    }
    prov["record"] = hash_json({"model": model, "dataset": dataset.name, "seed": seed, **prov})
    return prov


def union(a: InteractionMatrix, b: InteractionMatrix) -> InteractionMatrix:
    m = (a.matrix + b.matrix).tocsr()
    m.data[:] = 1.0
    return InteractionMatrix(m, a.user_ids, a.item_ids, dict(a.provenance))


def probe_user_split(n_users: int, seed: int, ratio=(3, 1, 1)):
    """Seeded disjoint (train, validation, test) user sets for the probes."""
    perm = np.random.default_rng(seed).permutation(n_users)
    n_tr, n_va, _ = split_sizes(n_users, ratio)
    return np.sort(perm[:n_tr]), np.sort(perm[n_tr:n_tr + n_va]), np.sort(perm[n_tr + n_va:])


def _finite_or_none(v):
    return float(v) if v is not None and math.isfinite(v) else None


def representation_scores(Z: np.ndarray, factors: FactorMatrix, seed: int,
                          settings: EvalSettings) -> dict:
    """Probe suite, DCI and global attribution scores for one representation."""
    tr, va, te = probe_user_split(Z.shape[0], seed, settings.probe_user_ratio)
    suite = fit_probe_suite(Z, factors, tr, va, grid=settings.probe_grid, seed=seed)
    Y = factors.memberships
    test_acc = [balanced_accuracy(Y[te, j], p.predict(Z[te])) if len(te) else None
                for j, p in enumerate(suite.probes)]
    out = {"probes": {"hyper": suite.hyper, "val_balanced_accuracy": suite.val_balanced_accuracy,
                      "test_balanced_accuracy": test_acc, "labels": suite.factor_labels},
           "dci": None, "lime_global": None, "shap_global": None, "attribution": {}}
    F = importance_from_suite(suite)
    try:
        out["dci"] = dci_scores(F).to_dict()
    except NoImportanceError as exc:
        logger.warning("DCI unavailable: %s", exc)
    for method in settings.methods:
        budget = settings.lime_samples if method == "lime" else settings.shap_coalitions
        S = build_attribution_matrix(suite, Z, method, budget=budget, seed=seed,
                                     n_users=settings.attribution_users,
                                     background_size=settings.background_size)
        out[f"{method}_global"] = _finite_or_none(global_score(S, method).value)
        out["attribution"][method] = S.tolist()
    return out


def evaluate_effectiveness(interactions: InteractionMatrix, config: LearnerConfig,
                           cutoffs: Sequence[int] = DEFAULT_CUTOFFS):
    """Split with the config seed, train, and rank the test items.

    Test ranking uses train plus validation as history. Returns
    ``(learner, split, scores dict)``.
    """
    split = split_per_user(interactions, seed=config.seed)
    learner = make_learner(config).fit(split.train, split.validation)
    history = union(split.train, split.validation)
    return learner, split, evaluate(learner.scores(history), split.test, cutoffs).to_dict()


def evaluate_run(model: str, dataset: Dataset, config: LearnerConfig, seed: int,
                 settings: EvalSettings | None = None) -> RunRecord:
    """One matrix cell: split, train, rank-evaluate on test, probe the representation."""
    settings = settings or EvalSettings()
    start = time.perf_counter()
    cfg = replace(config, model=model, seed=seed)
    rec = RunRecord(model, dataset.name, seed, cfg.to_dict(),
                    provenance=provenance_for(model, dataset, config, seed, settings))
    learner, split, rec.effectiveness = evaluate_effectiveness(dataset.interactions, cfg, settings.cutoffs)
    if model != "top_popular":
        Z = learner.encode(split.train).values
        rep = representation_scores(Z, dataset.factors, seed, settings)
        rec.dci, rec.probes, rec.attribution = rep["dci"], rep["probes"], rep["attribution"]
        rec.lime_global, rec.shap_global = rep["lime_global"], rep["shap_global"]
    rec.wall_clock = time.perf_counter() - start
    return rec


def _atomic_write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(obj, fh, indent=1, sort_keys=True)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def record_path(out_dir, record_hash: str, model: str, dataset: str, seed: int) -> Path:
    return Path(out_dir) / f"{dataset}__{model}__seed{seed}__{record_hash[:16]}.json"


def save_record(record: RunRecord, out_dir) -> Path:
    path = record_path(out_dir, record.provenance["record"], record.model, record.dataset, record.seed)
    _atomic_write_json(path, record.to_dict())
    return path


def load_records(directory) -> list[RunRecord]:
    out = []
    for p in sorted(Path(directory).glob("*.json")):
        d = json.loads(p.read_text())
        if isinstance(d, dict) and {"model", "dataset", "seed", "provenance"} <= d.keys():
            out.append(RunRecord.from_dict(d))
    return out


def _cell(args) -> RunRecord:
    model, dataset, config, seed, settings = args
    try:
        return evaluate_run(model, dataset, config, seed, settings)
    except Exception as exc:  # a failing cell must not stop the matrix
        logger.exception("run %s/%s/seed %d failed", dataset.name, model, seed)
        return RunRecord(model, dataset.name, seed, replace(config, model=model, seed=seed).to_dict(),
                         provenance=provenance_for(model, dataset, config, seed, settings),
                         status="failed", error=f"{type(exc).__name__}: {exc}")


def run_matrix(models: Sequence[str], datasets: Sequence[Dataset], seeds: Sequence[int],
               configs: dict, out_dir, settings: EvalSettings | None = None,
               workers: int = 1) -> list[RunRecord]:
    """Evaluate every (model, dataset, seed) cell, skipping cells already on disk.

    ``configs`` maps a model name, or a ``(model, dataset)`` pair, to its
    LearnerConfig. Records land in ``out_dir`` as one JSON file each.
    """
    settings = settings or EvalSettings()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs, records = [], {}
    for ds in datasets:
        for model in models:
            cfg = configs.get((model, ds.name)) or configs.get(model) or LearnerConfig(model)
            for seed in seeds:
                prov = provenance_for(model, ds, cfg, seed, settings)
                path = record_path(out_dir, prov["record"], model, ds.name, seed)
                key = (ds.name, model, seed)
                if path.exists():
                    rec = RunRecord.from_dict(json.loads(path.read_text()))
                    if rec.status == "ok":
                        records[key] = rec
                        continue
                jobs.append((key, (model, ds, cfg, seed, settings)))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell, [a for _, a in jobs]))
    else:
        results = [_cell(a) for _, a in jobs]
    for (key, _), rec in zip(jobs, results):
        save_record(rec, out_dir)
        records[key] = rec
    order = [(ds.name, m, s) for ds in datasets for m in models for s in seeds]
    return [records[k] for k in order]


# --- aggregation & reporting ---------------------------------------------------------------

def _measures_of(rec: RunRecord) -> dict:
    out = dict((rec.effectiveness or {}).get("scores", {}))
    out["D"] = (rec.dci or {}).get("D")
    out["C"] = (rec.dci or {}).get("C")
    out["lime_global"] = rec.lime_global
    out["shap_global"] = rec.shap_global
    return out


def aggregate(records: Sequence[RunRecord], measures: Sequence[str] = DEFAULT_MEASURES) -> dict:
    """(dataset, model) -> measure -> (mean, sample std, n) over successful seeds.

    A single observation has std 0; measures with no values are omitted.
    """
    buckets: dict = {}
    for rec in records:
        if rec.status != "ok":
            continue
        vals = _measures_of(rec)
        cell = buckets.setdefault((rec.dataset, rec.model), {})
        for m in measures:
            if vals.get(m) is not None:
                cell.setdefault(m, []).append(float(vals[m]))
    out = {}
    for key, cell in buckets.items():
        out[key] = {}
        for m, xs in cell.items():
            a = np.asarray(xs)
            std = float(a.std(ddof=1)) if len(a) > 1 else 0.0
            out[key][m] = (float(a.mean()), std, len(a))
    return out


def _table_rows(agg: dict, dataset: str, measures: Sequence[str]):
    models = sorted(m for d, m in agg if d == dataset)
    best = {}
    for meas in measures:
        means = [agg[(dataset, m)][meas][0] for m in models if meas in agg[(dataset, m)]]
        if means:
            best[meas] = max(means)
    return models, best


def _markdown_table(agg: dict, measures: Sequence[str], title: str) -> str:
    lines = [f"## {title}", ""]
    for dataset in sorted({d for d, _ in agg}):
        models, best = _table_rows(agg, dataset, measures)
        lines += [f"### {dataset}", "", "| model | " + " | ".join(measures) + " |",
                  "|---" * (len(measures) + 1) + "|"]
        for m in models:
            cells = []
            for meas in measures:
                if meas not in agg[(dataset, m)]:
                    cells.append("-")
                    continue
                mean, std, _ = agg[(dataset, m)][meas]
                text = f"{mean:.4f} ± {std:.4f}"
                cells.append(f"**{text}**" if mean == best[meas] else text)
            lines.append(f"| {m} | " + " | ".join(cells) + " |")
        lines.append("")
    return "\n".join(lines)


def _csv_table(agg: dict, measures: Sequence[str]) -> str:
    lines = ["dataset,model,measure,mean,std,n"]
    for (dataset, model) in sorted(agg):
        for meas in measures:
            if meas in agg[(dataset, model)]:
                mean, std, n = agg[(dataset, model)][meas]
                lines.append(f"{dataset},{model},{meas},{mean:.10g},{std:.10g},{n}")
    return "\n".join(lines) + "\n"


def _grid_markdown(grids: dict, grouping: str, measures: Sequence[str]) -> str:
    lines = [f"## rmcorr ({grouping.replace('_', ' ')})", "", "`*` marks p < 0.05.", ""]
    for outer, cells in grids.items():
        lines += [f"### {outer}", "", "| | " + " | ".join(measures) + " |",
                  "|---" * (len(measures) + 1) + "|"]
        for mx in measures:
            row = []
            for my in measures:
                res = cells.get((mx, my))
                row.append("n/a" if res is None else f"{res.r:.2f}{'*' if res.significant else ''}")
            lines.append(f"| {mx} | " + " | ".join(row) + " |")
        lines.append("")
    return "\n".join(lines)


def report(records: Sequence[RunRecord], out_dir=None,
           measures: Sequence[str] = DEFAULT_MEASURES) -> dict[str, str]:
    """Effectiveness and representation tables plus rmcorr grids, as CSV and markdown.

    Returns file name -> content; files are also written when ``out_dir`` is given.
    """
    if not records:
        raise ValueError("report needs at least one record")
    eff = [m for m in measures if m in EFFECTIVENESS_MEASURES]
    rep = [m for m in measures if m in REPRESENTATION_MEASURES]
    agg = aggregate(records, measures)
    ok = [r.to_dict() for r in records if r.status == "ok"]
    bundle = {
        "effectiveness.csv": _csv_table(agg, eff),
        "effectiveness.md": _markdown_table(agg, eff, "Effectiveness (mean ± std over seeds)"),
        "representation.csv": _csv_table(agg, rep),
        "representation.md": _markdown_table(agg, rep, "Disentanglement and interpretability"),
    }
    for grouping in ("by_dataset", "by_model"):
        grids = correlation_grid(ok, grouping, measures)
        bundle[f"rmcorr_{grouping}.md"] = _grid_markdown(grids, grouping, measures)
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            write_grid_csv(grids, Path(out_dir) / f"rmcorr_{grouping}.csv", grouping)
    failed = [r for r in records if r.status != "ok"]
    if failed:
        bundle["failures.md"] = "\n".join(
            f"- {r.dataset}/{r.model}/seed {r.seed}: {r.error}" for r in failed) + "\n"
    if out_dir is not None:
        for name, text in bundle.items():
            (Path(out_dir) / name).write_text(text)
    return bundle


# --- declarative run configuration -------------------------------------------------------

def load_dataset(entry: dict, base_dir: Path = Path(".")) -> Dataset:
    """A dataset entry is either ``{name, snapshot, factors}`` or ``{name, synth: {...}}``."""
    name = entry["name"]
    if "synth" in entry:
        from .synth import SynthSpec, generate, random_orthogonal
        params = dict(entry["synth"])
        mixing = params.pop("mixing", "identity")
        mixing_seed = params.pop("mixing_seed", 0)
        spec = SynthSpec(**params)
        if mixing == "rotation":
            spec.mixing = random_orthogonal(spec.M, mixing_seed)
        elif mixing != "identity":
            spec.mixing = np.asarray(mixing, dtype=np.float64)
        inter, factors, _ = generate(spec)
        return Dataset(name, inter, factors)
    snap = load_snapshot(base_dir / entry["snapshot"])
    return Dataset(name, snap, load_factors(base_dir / entry["factors"]))


def run_from_config(path, out_dir=None, workers: int | None = None) -> list[RunRecord]:
    """Tune (once per model and dataset, cached on disk) and run the configured matrix."""
    path = Path(path)
    conf = json.loads(path.read_text())
    out = Path(out_dir or conf.get("out_dir", "runs"))
    workers = workers or int(conf.get("workers", 1))
    datasets = [load_dataset(e, path.parent) for e in conf["datasets"]]
    settings = EvalSettings.from_dict(conf.get("evaluation", {}))
    tuning = conf.get("tuning", {})
    fixed = conf.get("configs", {})
    configs = {}
    for ds in datasets:
        for model in conf["models"]:
            if model in fixed:
                configs[(model, ds.name)] = LearnerConfig.from_dict(dict(fixed[model], model=model))
                continue
            cfg_path = out / "configs" / f"{ds.name}__{model}.json"
            if cfg_path.exists():
                configs[(model, ds.name)] = LearnerConfig.from_dict(json.loads(cfg_path.read_text()))
                continue
            tseed = int(tuning.get("seed", 0))
            space = SearchSpace(n_trials=int(tuning.get("n_trials", 50)))
            result = tune(model, split_per_user(ds.interactions, seed=tseed), space, seed=tseed,
                          base=tuning.get("overrides", {}), strategy=tuning.get("strategy", "random"),
                          log_path=out / "configs" / f"{ds.name}__{model}.trials.json")
            _atomic_write_json(cfg_path, result.config.to_dict())
            configs[(model, ds.name)] = result.config
    records = run_matrix(conf["models"], datasets, conf.get("seeds", [0, 1, 2, 3, 4]), configs,
                         out / "records", settings, workers)
    report(records, out / "report")
    return records
