"""Suite configuration, pipeline stages and run manifests.

Stages talk to each other only through files under the output directory:

    data/            generated datasets (CSV) + manifest.json
    partitions/s1/   varied-k sweeps, one JSON per dataset
    partitions/s2/   fixed-k candidates
    partitions/s3/   constructed ranked sets
    eval/s{1,2,3}/   records.csv, summary.csv, rejects.csv
    stats/stats.csv
    manifest.json
"""
from __future__ import annotations

import hashlib
import itertools
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import io
from .clustering import ALGORITHMS, SweepSpec, compute_k_max, sweep_varied_k
from .core import Dataset
from .datagen import IMBALANCE_MODES, GenConfig, generate_dataset
from .evaluation import (S3_VARIANTS, ScenarioResult, ScenarioSpec, run_scenario1, run_scenario2, run_scenario3,
                         scenario2_collections, scenario3_sets, summary_rows, SUMMARY_COLUMNS)
from .internal import INDEX_IDS
from .stats import GROUP_PROPERTIES, NUMERIC_PROPERTIES, property_association, wilcoxon_pairwise

log = logging.getLogger(__name__)

DECLARED_DEVIATIONS = (
    "external reference aggregates 5 indexes (Jaccard, SS3, ARI, NMI, NID); Powers and CDistance omitted",
    "Ratkowsky-Lance uses the attribute-pooled between/total ratio so the value is rotation invariant",
)

_LIST_KEYS = ("k_star", "dimensions", "distribution", "imbalance", "compactness", "noise", "scenarios",
              "indexes", "algorithms", "cluster_size")
_SCALAR_KEYS = ("name", "seed", "datasets", "runs", "kmeans_runs", "total_cap")

BUILTIN_SUITES = {
    "desk-small": """
        name = desk-small
        k_star = 4, 6, 8
        dimensions = 2, 4, 6
        distribution = gaussian
        imbalance = balanced, half_floor
        compactness = 0.1, 0.8
        noise = 0
        datasets = 4
        cluster_size = 20, 60
        scenarios = 1, 2, 3
        indexes = all
    """,
    "desk": """
        name = desk
        k_star = 2, 4, 6, 8, 10, 15, 20, 30, 50
        dimensions = 2, 4, 6, 8, 10, 15, 25, 50, 80, 120, 200
        distribution = gaussian, uniform, logistic
        imbalance = balanced, half_floor, tenth_floor
        compactness = 0.1, 0.8, random_unit
        noise = 0, 0.1
        datasets = 100
        scenarios = 1, 2
        indexes = all
    """,
}


class PipelineError(RuntimeError):
    def __init__(self, stage: str, dataset: str | None, message: str):
        self.stage, self.dataset = stage, dataset
        where = f" on dataset {dataset}" if dataset else ""
        super().__init__(f"stage {stage} failed{where}: {message}")


@dataclass(frozen=True)
class SuiteConfig:
    name: str = "custom"
    seed: int = 0
    k_star: tuple = (4,)
    dimensions: tuple = (2,)
    distribution: tuple = ("gaussian",)
    imbalance: tuple = ("balanced",)
    compactness: tuple = (0.1,)
    noise: tuple = (0.0,)
    datasets: int | None = None
    scenarios: tuple = (1, 2, 3)
    indexes: tuple = INDEX_IDS
    algorithms: tuple = ALGORITHMS
    cluster_size: tuple = (20, 100)
    total_cap: int = 1000
    runs: int = 5
    kmeans_runs: int = 10

    def validate(self) -> None:
        for key in ("k_star", "dimensions", "distribution", "imbalance", "compactness", "noise"):
            if not getattr(self, key):
                raise ValueError(f"empty dataset grid: '{key}' has no values")
        if self.datasets is not None and self.datasets < 1:
            raise ValueError("datasets must be >= 1")
        if not self.scenarios or set(self.scenarios) - {1, 2, 3}:
            raise ValueError(f"scenarios must be a non-empty subset of 1, 2, 3, got {self.scenarios}")
        if set(self.imbalance) - set(IMBALANCE_MODES):
            raise ValueError(f"unknown imbalance modes {sorted(set(self.imbalance) - set(IMBALANCE_MODES))}")
        if set(self.indexes) - set(INDEX_IDS):
            raise ValueError(f"unknown indexes {sorted(set(self.indexes) - set(INDEX_IDS))}")
        if set(self.algorithms) - set(ALGORITHMS):
            raise ValueError(f"unknown algorithms {sorted(set(self.algorithms) - set(ALGORITHMS))}")
        if len(self.cluster_size) != 2:
            raise ValueError("cluster_size takes two values: min, max")
        if 3 in self.scenarios:
            if set(self.distribution) != {"gaussian"}:
                raise ValueError("scenario 3 requires Gaussian clusters: set distribution = gaussian")
            if any(n > 0 for n in self.noise):
                raise ValueError("scenario 3 requires noise-free data: set noise = 0")
        # surface bad generator settings now rather than mid-run
        for cfg in self.dataset_configs()[:1]:
            GenConfig(**cfg)

    def scenario_spec(self) -> ScenarioSpec:
        return ScenarioSpec(indexes=tuple(self.indexes), algorithms=tuple(self.algorithms),
                            kmeans_runs=self.kmeans_runs, variants=S3_VARIANTS, runs=self.runs, seed=self.seed)

    def text(self) -> str:
        d = asdict(self)
        return "\n".join(f"{k} = {_render(d[k])}" for k in sorted(d)) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()

    def dataset_configs(self) -> list[dict]:
        """Generator settings per dataset. Dataset i depends only on (seed, i)."""
        grid = list(itertools.product(self.k_star, self.dimensions, self.distribution, self.imbalance,
                                      self.compactness, self.noise))
        if self.datasets is None:
            picks = grid
        else:
            picks = []
            for i in range(self.datasets):
                rng = np.random.default_rng(np.random.SeedSequence([self.seed, i, 1]))
                picks.append(grid[int(rng.integers(len(grid)))])
        out = []
        for i, (k, d, dist, imb, comp, noise) in enumerate(picks):
            out.append(dict(k_star=int(k), dimensions=int(d), distribution=dist, imbalance_mode=imb,
                            compactness=comp, noise_fraction=float(noise),
                            cluster_size_range=tuple(int(c) for c in self.cluster_size),
                            total_cap=self.total_cap, seed=dataset_seed(self.seed, i)))
        return out


def _render(v) -> str:
    if isinstance(v, (tuple, list)):
        return ", ".join(str(x) for x in v)
    return "" if v is None else str(v)


def dataset_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0])


def _number(s: str):
    try:
        return int(s)
    except ValueError:
        return float(s)


def parse_config(text: str, seed: int | None = None) -> SuiteConfig:
    """Plain `key = value` lines; lists are comma separated; '#' starts a comment."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _LIST_KEYS + _SCALAR_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        items = [s.strip() for s in val.split(",") if s.strip()]
        if key in ("k_star", "dimensions", "scenarios", "cluster_size"):
            values[key] = tuple(int(s) for s in items)
        elif key == "noise":
            values[key] = tuple(float(s) for s in items)
        elif key == "compactness":
            values[key] = tuple(s if s in ("random", "random_unit") else float(s) for s in items)
        elif key == "indexes":
            values[key] = INDEX_IDS if items == ["all"] else tuple(items)
        elif key == "algorithms":
            values[key] = ALGORITHMS if items == ["all"] else tuple(items)
        elif key in _LIST_KEYS:
            values[key] = tuple(items)
        elif key == "name":
            values[key] = val
        else:
            values[key] = _number(val)
    if seed is not None:
        values["seed"] = seed
    config = SuiteConfig(**values)
    config.validate()
    return config


def load_suite(name_or_path: str, seed: int | None = None) -> SuiteConfig:
    if name_or_path in BUILTIN_SUITES:
        return parse_config(BUILTIN_SUITES[name_or_path], seed)
    path = Path(name_or_path)
    if not path.exists():
        raise ValueError(f"unknown suite {name_or_path!r}: not a built-in ({', '.join(BUILTIN_SUITES)}) nor a file")
    return parse_config(path.read_text(), seed)


@dataclass
class RunManifest:
    suite: str
    seed: int
    config_hash: str
    dataset_seeds: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)
    declared_deviations: list = field(default_factory=lambda: list(DECLARED_DEVIATIONS))
    counts: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)

    def write(self, path: Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def versions() -> dict:
    return {"cvbench": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# ------------------------------------------------------------------ helpers

def _pmap(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _guard(stage: str, fn, ds: Dataset, *args):
    try:
        return fn(ds, *args)
    except PipelineError:
        raise
    except Exception as exc:  # noqa: BLE001 - reported with stage and dataset
        raise PipelineError(stage, ds.id, f"{type(exc).__name__}: {exc}") from exc


# ------------------------------------------------------------------- stages

def stage_generate(config: SuiteConfig, out: Path, jobs: int = 1) -> list[Dataset]:
    data_dir = Path(out) / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    cfgs = config.dataset_configs()
    ids = [f"ds{i:04d}" for i in range(len(cfgs))]
    datasets = _pmap(_generate_one, list(zip(cfgs, ids)), jobs)
    entries = []
    for cfg, ds in zip(cfgs, datasets):
        io.write_dataset(ds, data_dir / f"{ds.id}.csv")
        entries.append({"id": ds.id, "file": f"{ds.id}.csv", "seed": cfg["seed"],
                        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()},
                        "tags": ds.meta.as_dict()})
    io.write_data_manifest(entries, data_dir / "manifest.json")
    return datasets


def _generate_one(args):
    cfg, ds_id = args
    try:
        return generate_dataset(GenConfig(**cfg), ds_id)
    except Exception as exc:  # noqa: BLE001
        raise PipelineError("generate", ds_id, f"{type(exc).__name__}: {exc}") from exc


def _s1_partitions(ds: Dataset, config: SuiteConfig):
    sweep = SweepSpec(k_max=compute_k_max(ds.truth.k_star), algorithms=tuple(config.algorithms), seed=config.seed)
    return [p for parts in sweep_varied_k(ds, sweep).values() for p in parts]


def _s2_partitions(ds: Dataset, config: SuiteConfig):
    by_target = scenario2_collections(ds, config.scenario_spec())
    return [p for t in sorted(by_target) for p in by_target[t]]


def _cluster_one(args):
    ds, config, scenario = args
    fn = _s1_partitions if scenario == 1 else _s2_partitions
    return _guard("cluster", fn, ds, config)


def stage_cluster(config: SuiteConfig, out: Path, scenarios=(1, 2), jobs: int = 1) -> None:
    datasets = io.load_datasets(Path(out) / "data")
    for s in scenarios:
        parts = _pmap(_cluster_one, [(ds, config, s) for ds in datasets], jobs)
        for ds, ps in zip(datasets, parts):
            io.write_partitions(ps, Path(out) / "partitions" / f"s{s}" / f"{ds.id}.json")


def _s3_one(args):
    ds, config = args
    return _guard("scenario3-gen", lambda d: scenario3_sets(d, config.scenario_spec()), ds)


def stage_scenario3(config: SuiteConfig, out: Path, jobs: int = 1) -> list:
    datasets = io.load_datasets(Path(out) / "data")
    results = _pmap(_s3_one, [(ds, config) for ds in datasets], jobs)
    rejects = []
    for ds, (sets, rej) in zip(datasets, results):
        io.write_ranked_sets(sets, Path(out) / "partitions" / "s3" / f"{ds.id}.json")
        rejects.extend(rej)
    return rejects


def _group(parts, key):
    out: dict = {}
    for p in parts:
        out.setdefault(p.extra[key], []).append(p)
    return out


def _eval_one(args):
    ds, config, scenario, part_path = args
    spec = config.scenario_spec()

    def work(d):
        if scenario == 1:
            by_algo = _group(io.read_partitions(part_path), "algorithm")
            return run_scenario1([d], spec, {d.id: by_algo})
        if scenario == 2:
            by_target = _group(io.read_partitions(part_path), "target_k")
            return run_scenario2([d], spec, {d.id: {int(k): v for k, v in by_target.items()}})
        return run_scenario3([d], spec, {d.id: io.read_ranked_sets(part_path)})

    return _guard("eval", work, ds)


def stage_eval(config: SuiteConfig, out: Path, scenario: int, jobs: int = 1, data_dir: Path | None = None,
               partitions_dir: Path | None = None, extra_rejects=()) -> ScenarioResult:
    out = Path(out)
    datasets = io.load_datasets(data_dir or out / "data")
    part_dir = Path(partitions_dir) if partitions_dir else out / "partitions" / f"s{scenario}"
    paths = [io.require(part_dir / f"{ds.id}.json", f"scenario {scenario} partitions for {ds.id}") for ds in datasets]
    result = ScenarioResult()
    for r in _pmap(_eval_one, [(ds, config, scenario, p) for ds, p in zip(datasets, paths)], jobs):
        result.extend(r)
    result.rejects = list(extra_rejects) + result.rejects
    eval_dir = out / "eval" / f"s{scenario}"
    io.write_records(result.records, eval_dir / "records.csv")
    io.write_rows(eval_dir / "summary.csv", summary_rows(result.records), ("group", "index", "n") + SUMMARY_COLUMNS)
    io.write_rejects(result.rejects, eval_dir / "rejects.csv")
    if scenario == 3:
        io.write_records(result.external_records, eval_dir / "external_records.csv")
        io.write_rows(eval_dir / "external_summary.csv", summary_rows(result.external_records, ("all", "source")),
                      ("group", "index", "n") + SUMMARY_COLUMNS)
    return result


STATS_COLUMNS = ("table", "scenario", "property", "a", "b", "statistic", "p_value", "adjusted_p", "n", "method",
                 "significant")


def stats_rows(records) -> list[dict]:
    """Pairwise Wilcoxon on rho_all and property associations, per scenario."""
    rows = []
    for scenario in sorted({r.scenario for r in records}):
        recs = [r for r in records if r.scenario == scenario]
        cells: dict = {}
        for r in recs:
            if r.rho_all is not None:
                cells.setdefault((r.dataset, r.source), {})[r.index] = r.rho_all
        indexes = sorted({r.index for r in recs})
        complete = [c for c in sorted(cells) if len(cells[c]) == len(indexes)]
        if len(indexes) >= 2 and complete:
            samples = {i: [cells[c][i] for c in complete] for i in indexes}
            for (a, b), t in wilcoxon_pairwise(samples).items():
                rows.append(dict(table="wilcoxon", scenario=scenario, a=a, b=b, statistic=t.statistic,
                                 p_value=t.p_value, adjusted_p=t.adjusted_p, n=t.n, method=t.method,
                                 significant=t.significant))
        if scenario == 3:
            continue
        for prop in NUMERIC_PROPERTIES + GROUP_PROPERTIES:
            for index, t in property_association(recs, prop).items():
                row = dict(table="property", scenario=scenario, property=prop, a=index)
                if t is not None:
                    row.update(statistic=t.statistic, p_value=t.p_value, adjusted_p=t.adjusted_p, n=t.n,
                               method=t.method, significant=t.significant)
                rows.append(row)
    return rows


def stage_stats(out: Path, records_paths=None, out_path: Path | None = None) -> list[dict]:
    out = Path(out)
    if records_paths is None:
        records_paths = sorted(out.glob("eval/s*/records.csv"))
        if not records_paths:
            raise io.ArtifactMissing(f"no evaluation records under {out / 'eval'} (run eval first)")
    records = [r for p in records_paths for r in io.read_records(p)]
    rows = stats_rows(records)
    io.write_rows(out_path or out / "stats" / "stats.csv", rows, STATS_COLUMNS)
    return rows


def run_pipeline(config: SuiteConfig, out: Path, jobs: int = 1) -> RunManifest:
    config.validate()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "suite.cfg").write_text(config.text())
    manifest = RunManifest(config.name, config.seed, config.hash(), versions=versions())
    datasets = stage_generate(config, out, jobs)
    manifest.dataset_seeds = {ds.id: cfg["seed"] for ds, cfg in zip(datasets, config.dataset_configs())}
    manifest.stages.append("generate")
    clustered = [s for s in (1, 2) if s in config.scenarios]
    if clustered:
        stage_cluster(config, out, clustered, jobs)
        manifest.stages.append("cluster")
    s3_rejects = []
    if 3 in config.scenarios:
        s3_rejects = stage_scenario3(config, out, jobs)
        manifest.stages.append("scenario3-gen")
    for s in sorted(config.scenarios):
        res = stage_eval(config, out, s, jobs, extra_rejects=s3_rejects if s == 3 else ())
        manifest.counts[f"s{s}_records"] = len(res.records)
        manifest.counts[f"s{s}_rejected"] = len(res.rejects)
    manifest.stages.append("eval")
    stage_stats(out)
    manifest.stages.append("stats")
    manifest.write(out / "manifest.json")
    return manifest
