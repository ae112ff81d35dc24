"""Experiment protocols built on the pipeline: robustness, ablations, sweeps,
neighbor pruning and overhead timing.

A :class:`RunSpec` fully describes one run apart from its seed, so every
record can be re-executed from its stored config and seed.
"""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..gnn import TrainConfig, predict_proba, train_gcn
from ..graph import WeightedAdjacency, normalize, read_graph
from ..gsl import GslConfig, StructureLearner
from ..plugin import pipeline
from ..reweight import ThresholdVector, UnGslConfig, reweight
from ..seeding import stream
from ..uncertainty import UncertaintyVector, entropy_rows
from .noise import NoiseSpec, inject_noise
from .records import ExperimentRecord, mean_std
from .sbm import SbmConfig, generate_sbm

#: Desk-scale benchmark graph: 800 nodes, 4 classes, edge homophily about 0.6.
BENCHMARK_SBM = SbmConfig(n=800, K=4, p_in=0.03, p_out=0.0067, d=32, signal=1.5)

LEARNERS = ("metric_knn", "similarity_residual")


@dataclass
class RunSpec:
    """Dataset, noise and model configuration of a run, minus the seed.

    ``dataset`` is an :class:`SbmConfig` (its seed is replaced by the run
    seed) or a directory holding a graph in the text format.
    """

    dataset: object = BENCHMARK_SBM
    noise: tuple = ()
    gsl: GslConfig = field(default_factory=GslConfig)
    ungsl: UnGslConfig = field(default_factory=UnGslConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ungsl_on: bool = True
    fixed_fraction: float | None = None
    symmetrize: bool = False
    uncertainty_source: str = "entropy"

    def __post_init__(self):
        self.noise = tuple((str(k), float(v)) for k, v in self.noise)

    # ------------------------------------------------------------ (de)serialize
    def to_config(self):
        if isinstance(self.dataset, SbmConfig):
            ds = {k: v for k, v in self.dataset.to_dict().items() if k != "seed"}
            ds = {"sbm": ds}
        else:
            ds = {"path": str(self.dataset)}
        gsl = asdict(self.gsl)
        gsl["regularizers"] = list(gsl["regularizers"])
        train = {k: v for k, v in asdict(self.train).items() if k != "seed"}
        return {"dataset": ds, "noise": [list(x) for x in self.noise], "gsl": gsl,
                "ungsl": asdict(self.ungsl), "train": train, "ungsl_on": self.ungsl_on,
                "fixed_fraction": self.fixed_fraction, "symmetrize": self.symmetrize,
                "uncertainty_source": self.uncertainty_source}

    @classmethod
    def from_config(cls, cfg):
        ds = cfg["dataset"]
        dataset = SbmConfig(**ds["sbm"]) if "sbm" in ds else ds["path"]
        gsl = dict(cfg["gsl"])
        gsl["regularizers"] = tuple(gsl.get("regularizers", ()))
        return cls(dataset, tuple(tuple(x) for x in cfg["noise"]), GslConfig(**gsl),
                   UnGslConfig(**cfg["ungsl"]), TrainConfig(**cfg["train"]), cfg["ungsl_on"],
                   cfg["fixed_fraction"], cfg["symmetrize"], cfg["uncertainty_source"])

    def base_key(self):
        """Part of the config that determines the stage-1 learner."""
        c = self.to_config()
        return (repr(c["dataset"]), repr(c["noise"]), repr(c["gsl"]), repr(c["train"]))

    def with_(self, **changes):
        return replace(self, **changes)


def load_graph(spec, seed):
    if isinstance(spec.dataset, SbmConfig):
        graph = generate_sbm(replace(spec.dataset, seed=seed))
    else:
        graph = read_graph(spec.dataset)
    for kind, level in spec.noise:
        graph = inject_noise(graph, NoiseSpec(kind, level, seed))
    return graph


def _report_metrics(report):
    d = report.to_dict()
    d.pop("seconds", None)
    return d


def run(spec, seed, graph=None, base_learner=None):
    """Execute one run; returns ``(record, PipelineResult or None, base learner)``."""
    graph = load_graph(spec, seed) if graph is None else graph
    train_cfg = replace(spec.train, seed=seed)
    timings = {}
    if base_learner is None:
        t0 = time.perf_counter()
        base_learner = StructureLearner(spec.gsl, graph, train_cfg)
        base_learner.fit()
        timings["pretrain"] = time.perf_counter() - t0
    metrics = {"base": _report_metrics(base_learner.report)}
    result = None
    if spec.ungsl_on:
        result = pipeline(graph, spec.gsl, spec.ungsl, train_cfg, base_learner=base_learner,
                          uncertainty_source=spec.uncertainty_source,
                          fixed_fraction=spec.fixed_fraction, symmetrize=spec.symmetrize)
        metrics["enhanced"] = _report_metrics(result.enhanced)
        metrics["psi_evals_per_epoch"] = int(result.learner.psi_evals[0]) if result.learner.psi_evals else 0
        timings.update({k: v for k, v in result.timings.items() if k != "pretrain"})
    record = ExperimentRecord("pipeline" if spec.ungsl_on else "base", spec.to_config(), seed,
                              metrics, timings)
    return record, result, base_learner


def replay(record):
    """Re-execute a record from its config and seed."""
    spec = RunSpec.from_config(record.config)
    return run(spec, record.seed)[0]


def same_outcome(a, b, acc_tol=1e-9):
    """Loss series equal bit for bit and accuracies within ``acc_tol`` for every stage."""
    if a.fingerprint != b.fingerprint or a.seed != b.seed:
        return False
    for stage in ("base", "enhanced"):
        if (stage in a.metrics) != (stage in b.metrics):
            return False
        if stage not in a.metrics:
            continue
        ma, mb = a.metrics[stage], b.metrics[stage]
        if ma["losses"] != mb["losses"] or ma["best_epoch"] != mb["best_epoch"]:
            return False
        for key in ("test_acc", "best_val_acc"):
            if abs(ma[key] - mb[key]) > acc_tol:
                return False
    return True


# ------------------------------------------------------------------ execution

def _run_group(payload):
    """Run specs sharing one stage-1 learner for one seed; returns record dicts."""
    configs, seed = payload
    specs = [RunSpec.from_config(c) for c in configs]
    out, bases = [], {}
    for spec in specs:
        key = spec.base_key()
        graph, learner = bases.get(key, (None, None))
        if graph is None:
            graph = load_graph(spec, seed)
        record, _, learner = run(spec, seed, graph=graph, base_learner=learner)
        bases[key] = (graph, learner)
        out.append(record)
    return out


def execute(groups, seeds, jobs=1, log=None):
    """Run every group of specs for every seed; records come back in a fixed order."""
    payloads = [([s.to_config() for s in group], seed) for group in groups for seed in seeds]
    if jobs > 1 and len(payloads) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_group, payloads))
    else:
        results = [_run_group(p) for p in payloads]
    records = [r for chunk in results for r in chunk]
    if log is not None:
        for r in records:
            log.append(r)
    return records


def _by_spec(records, specs):
    fps = {}
    for s in specs:
        fps[ExperimentRecord("pipeline" if s.ungsl_on else "base", s.to_config(), 0, {}).fingerprint] = s
    grouped = {fp: [] for fp in fps}
    for r in records:
        if r.fingerprint in grouped:
            grouped[r.fingerprint].append(r)
    return grouped


@dataclass
class Comparison:
    """Paired accuracies of two arms over the same seeds."""

    label_a: str
    label_b: str
    seeds: list
    a: list
    b: list

    @property
    def mean_a(self):
        return float(np.mean(self.a))

    @property
    def mean_b(self):
        return float(np.mean(self.b))

    @property
    def delta(self):
        return self.mean_a - self.mean_b

    def rows(self):
        return [[s, x, y] for s, x, y in zip(self.seeds, self.a, self.b)]


# ------------------------------------------------------------------ protocols

def robustness(spec, levels, seeds, kind="edge_add", learners=LEARNERS, jobs=1, log=None):
    """Base versus UnGSL accuracy per learner and noise level.

    Returns ``{(learner, level): Comparison(ungsl, base)}`` and the records.
    """
    groups, keys = [], []
    for method in learners:
        for level in levels:
            noise = tuple(x for x in spec.noise if x[0] != kind) + (((kind, level),) if level > 0 else ())
            s = spec.with_(gsl=replace(spec.gsl, method=method), noise=noise, ungsl_on=True)
            groups.append([s])
            keys.append((method, level))
    records = execute(groups, seeds, jobs, log)
    out = {}
    for key, group in zip(keys, groups):
        (rs,) = _by_spec(records, group).values()
        out[key] = Comparison("ungsl", "base", list(seeds), [r.accuracy("enhanced") for r in rs],
                              [r.accuracy("base") for r in rs])
    return out, records


def _paired(spec_a, spec_b, seeds, labels, jobs, log):
    records = execute([[spec_a, spec_b]], seeds, jobs, log)
    grouped = _by_spec(records, [spec_a, spec_b])
    fa, fb = list(grouped)
    return Comparison(labels[0], labels[1], list(seeds), [r.accuracy() for r in grouped[fa]],
                      [r.accuracy() for r in grouped[fb]]), records


def ablation_fixed_epsilon(spec, seeds, fixed_fraction=0.3, jobs=1, log=None):
    """Learnable thresholds versus per-node confidence quantiles at ``fixed_fraction``."""
    if not 0.0 <= fixed_fraction <= 1.0:
        raise ValueError("fixed_fraction must lie in [0, 1]")
    learn = spec.with_(ungsl_on=True, fixed_fraction=None)
    fixed = spec.with_(ungsl_on=True, fixed_fraction=float(fixed_fraction))
    return _paired(learn, fixed, seeds, ("learnable", "fixed"), jobs, log)


def ablation_symmetrize(spec, seeds, jobs=1, log=None):
    """Asymmetric refined structure versus its per-epoch symmetrization."""
    asym = spec.with_(ungsl_on=True, symmetrize=False)
    sym = spec.with_(ungsl_on=True, symmetrize=True)
    return _paired(asym, sym, seeds, ("asymmetric", "symmetrized"), jobs, log)


SWEEP_PARAMS = ("beta", "tau", "level")


def sweep(spec, param, values, seeds, kind="edge_add", jobs=1, log=None):
    """One pipeline per value and seed; returns ``[(value, base accs, ungsl accs)]``."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {param!r}")
    if len(values) == 0:
        raise ValueError("sweep needs at least one value")
    specs = []
    for v in values:
        if param == "level":
            noise = tuple(x for x in spec.noise if x[0] != kind) + (((kind, float(v)),) if v > 0 else ())
            specs.append(spec.with_(noise=noise, ungsl_on=True))
        else:
            specs.append(spec.with_(ungsl=replace(spec.ungsl, **{param: float(v)}), ungsl_on=True))
    groups = [[s] for s in specs] if param == "level" else [specs]
    records = execute(groups, seeds, jobs, log)
    grouped = _by_spec(records, specs)
    series = []
    for v, rs in zip(values, grouped.values()):
        series.append((v, [r.accuracy("base") for r in rs], [r.accuracy("enhanced") for r in rs]))
    return series, records


def series_rows(series):
    rows = []
    for v, base, enh in series:
        bm, bs = mean_std(base)
        em, es = mean_std(enh)
        rows.append([v, len(base), bm, bs, em, es])
    return rows


# ------------------------------------------------------------------ pruning

@dataclass
class PruneCurve:
    ratios: list
    entropy_guided: list
    random: list
    per_seed: dict = field(default_factory=dict)

    def rows(self):
        return [[r, e, q] for r, e, q in zip(self.ratios, self.entropy_guided, self.random)]


def prune_counts(deg, ratio):
    """Neighbors removed per node: ``floor(ratio * deg)``, always leaving one."""
    deg = np.asarray(deg)
    return np.minimum(np.floor(ratio * deg + 1e-12).astype(np.int64), np.maximum(deg - 1, 0))


def prune_in_neighbors(adj, scores, ratio, rng=None):
    """Drop, per receiving node, the in-neighbors with the highest ``scores``
    (or uniformly random ones when ``rng`` is given)."""
    if not 0.0 <= ratio < 1.0:
        raise ValueError("prune ratio must lie in [0, 1)")
    off = adj.offdiag_mask()
    rows, cols, vals = adj.rows[off], adj.indices[off], adj.data[off]
    n = adj.shape[0]
    deg = np.bincount(rows, minlength=n)
    drop = prune_counts(deg, ratio)
    if rng is None:
        key = -np.asarray(scores, dtype=np.float64)[cols]
        tie = cols
    else:
        key = rng.random(len(rows))
        tie = np.zeros(len(rows))
    order = np.lexsort((tie, key, rows))
    start = np.concatenate([[0], np.cumsum(deg)[:-1]])
    rank = np.empty(len(rows), dtype=np.int64)
    rank[order] = np.arange(len(rows)) - start[rows[order]]
    keep = rank >= drop[rows]
    return WeightedAdjacency.from_coo(rows[keep], cols[keep], vals[keep], (n, n))


def prune_experiment(spec, ratios, seeds, structure=None):
    """Accuracy of a GCN after removing high-entropy versus random in-neighbors.

    Neighbor entropies come from a GCN pretrained on the unpruned structure;
    each pruned graph trains a GCN from the same seed.
    """
    ratios = [float(r) for r in ratios]
    if any(r >= 1 or r < 0 for r in ratios):
        raise ValueError("prune ratios must lie in [0, 1)")
    acc_e = {r: [] for r in ratios}
    acc_r = {r: [] for r in ratios}
    for seed in seeds:
        graph = load_graph(spec, seed)
        adj = graph.adjacency if structure is None else structure
        cfg = replace(spec.train, seed=seed)
        report, model = train_gcn(graph, normalize(adj, "row", True), cfg)
        u = entropy_rows(predict_proba(model, normalize(adj, "row", True), graph.features))
        for r in ratios:
            if r == 0:
                acc_e[r].append(report.test_acc)
                acc_r[r].append(report.test_acc)
                continue
            pruned = prune_in_neighbors(adj, u, r)
            acc_e[r].append(train_gcn(graph, normalize(pruned, "row", True), cfg)[0].test_acc)
            rnd = prune_in_neighbors(adj, u, r, rng=stream(seed, f"prune/random/{r}"))
            acc_r[r].append(train_gcn(graph, normalize(rnd, "row", True), cfg)[0].test_acc)
    return PruneCurve(ratios, [float(np.mean(acc_e[r])) for r in ratios],
                      [float(np.mean(acc_r[r])) for r in ratios],
                      {"seeds": list(seeds), "entropy_guided": acc_e, "random": acc_r})


# ------------------------------------------------------------------ overhead

@dataclass
class OverheadReport:
    """Reweight scaling over ``sizes`` and matched-epoch training cost over ``train_sizes``."""

    sizes: list
    edges: list
    psi_evals: list
    reweight_seconds: list
    r_squared: float
    train_sizes: list
    base_seconds: list
    ungsl_seconds: list

    @property
    def relative_overhead(self):
        return [u / b - 1.0 for u, b in zip(self.ungsl_seconds, self.base_seconds)]

    def scaling_rows(self):
        return [list(x) for x in zip(self.sizes, self.edges, self.psi_evals, self.reweight_seconds)]

    def training_rows(self):
        return [list(x) for x in zip(self.train_sizes, self.base_seconds, self.ungsl_seconds,
                                     self.relative_overhead)]


def linear_r_squared(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    tot = np.sum((y - y.mean()) ** 2)
    return float(1.0 - resid @ resid / tot) if tot > 0 else 1.0


def _time_reweight(S, uv, eps, cfg, repeats=7):
    inner = max(5, int(2e6 // max(S.nnz, 1)))
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            reweight(S, uv, eps, cfg)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def matched_epoch_timing(spec, seed=0, epochs=100, graph=None):
    """Seconds for ``epochs`` training steps without and with reweighting.

    Early stopping is disabled so both runs take exactly ``epochs`` steps;
    the reweighted run uses uncertainty from the first run.
    """
    cfg = replace(spec.train, seed=seed, epochs=epochs, patience=epochs + 1)
    graph = load_graph(spec, seed) if graph is None else graph
    base = StructureLearner(spec.gsl, graph, cfg)
    t0 = time.perf_counter()
    base.fit()
    base_seconds = time.perf_counter() - t0
    res = pipeline(graph, spec.gsl, spec.ungsl, cfg, base_learner=base)
    return base_seconds, res.timings["retrain"], res


def overhead_report(spec, sizes, seed=0, epochs=100, train_sizes=None):
    """Reweight cost against stored edges at each SBM size in ``sizes`` plus
    matched-epoch training time with and without reweighting at
    ``train_sizes`` (default: ``spec.dataset.n``)."""
    if len(sizes) < 2 or not isinstance(spec.dataset, SbmConfig):
        raise ValueError("overhead needs an SBM dataset and at least two sizes")
    edges, psi, rw = [], [], []
    rng = stream(seed, "overhead/uncertainty")
    for n in sizes:
        s = spec.with_(dataset=replace(spec.dataset, n=int(n)))
        graph = load_graph(s, seed)
        S = StructureLearner(s.gsl, graph, replace(s.train, seed=seed)).build(training=False).S
        uv = UncertaintyVector.from_u(rng.uniform(0.0, np.log(graph.n_classes), graph.n))
        eps = ThresholdVector(graph.n, stream(seed, "ungsl/eps"), s.ungsl)
        edges.append(int(S.num_offdiag()))
        psi.append(reweight(S, uv, eps, s.ungsl).n_psi_evals)
        rw.append(_time_reweight(S, uv, eps, s.ungsl))
    train_sizes = [spec.dataset.n] if train_sizes is None else list(train_sizes)
    base_t, ungsl_t = [], []
    for n in train_sizes:
        b, u, _ = matched_epoch_timing(spec.with_(dataset=replace(spec.dataset, n=int(n))), seed, epochs)
        base_t.append(b)
        ungsl_t.append(u)
    return OverheadReport(list(sizes), edges, psi, rw, linear_r_squared(edges, rw),
                          train_sizes, base_t, ungsl_t)


__all__ = [
    "BENCHMARK_SBM", "LEARNERS", "RunSpec", "load_graph", "run", "replay", "same_outcome",
    "execute", "Comparison", "robustness", "ablation_fixed_epsilon", "ablation_symmetrize",
    "sweep", "series_rows", "PruneCurve", "prune_counts", "prune_in_neighbors",
    "prune_experiment", "OverheadReport", "linear_r_squared", "matched_epoch_timing", "overhead_report",
]
