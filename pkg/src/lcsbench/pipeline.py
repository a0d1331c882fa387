"""File-based pipeline stages and the run manifest.

Each stage reads its inputs from the run directory (or configured paths),
writes its outputs under ``<out>/<stage>/`` and returns the paths written.
Stage outputs depend only on their inputs, the config and the seed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

import lcsbench
from lcsbench import aggregator, features, generator, likelihood, scoring
from lcsbench.core import INTERVAL_SECONDS, parse_iso
from lcsbench.detectors import (
    AnnSpec,
    GruSpec,
    TrainConfig,
    WeightsBundle,
    reconstruction_error,
    train,
    write_loss_curve,
)
from lcsbench.errors import ConfigError, IntegrityError, MissingInputError
from lcsbench.groundtruth import load_ground_truth, write_ground_truth
from lcsbench.records import read_records, write_records

log = logging.getLogger(__name__)

DETECTION_COLUMNS = ["interval_start", "sum5xx_norm", "recon_error", "likelihood", "flag"]
SWEEP_PARAM_COLUMNS = ["long_window", "short_window", "threshold"]
MANIFEST_FILE = "manifest.json"
MANIFEST_VERSION = 1

_T0 = 1706486400  # 2024-01-29 00:00 UTC
_WEEK = 7 * 86_400


def _time(value) -> int:
    """Epoch seconds from an int or an ISO-8601 string."""
    if isinstance(value, bool):
        raise ConfigError(f"not a timestamp: {value!r}")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, str):
        try:
            return int(value) if value.lstrip("-").isdigit() else parse_iso(value)[0]
        except Exception as exc:
            raise ConfigError(f"bad timestamp {value!r}: {exc}") from exc
    raise ConfigError(f"not a timestamp: {value!r}")


def _range(value) -> tuple[int, int] | None:
    if value is None:
        return None
    if isinstance(value, str):
        if ".." not in value:
            raise ConfigError(f"range must look like start..end, got {value!r}")
        value = value.split("..", 1)
    if len(value) != 2:
        raise ConfigError(f"range needs two bounds, got {value!r}")
    lo, hi = _time(value[0]), _time(value[1])
    if not lo < hi:
        raise ConfigError(f"empty range {value!r}")
    return lo, hi


def _strict(cls, data: dict, section: str) -> dict:
    unknown = set(data) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"{section}: unknown option(s) {sorted(unknown)}")
    return data


@dataclass(frozen=True)
class AggregationConfig:
    interval_seconds: int = INTERVAL_SECONDS
    range: tuple[int, int] | None = None
    on_malformed: str = "skip"
    max_malformed_fraction: float = 0.01

    def __post_init__(self) -> None:
        if self.interval_seconds < 1:
            raise ConfigError("interval_seconds must be positive")
        if self.on_malformed not in ("skip", "fail"):
            raise ConfigError("on_malformed must be 'skip' or 'fail'")
        if not 0.0 <= self.max_malformed_fraction <= 1.0:
            raise ConfigError("max_malformed_fraction must lie in [0, 1]")


@dataclass(frozen=True)
class DetectorConfig:
    kind: str = "gru"
    spec: dict = field(default_factory=dict)
    train: TrainConfig = TrainConfig()

    def __post_init__(self) -> None:
        if self.kind not in ("ann", "gru"):
            raise ConfigError(f"detector kind must be 'ann' or 'gru', got {self.kind!r}")
        cls = AnnSpec if self.kind == "ann" else GruSpec
        bad = set(self.spec) - {f.name for f in fields(cls)} | ({"input_dim"} & set(self.spec))
        if bad:
            raise ConfigError(f"detector.spec: unsupported option(s) {sorted(bad)}")

    def build_spec(self, input_dim: int):
        opts = dict(self.spec)
        if self.kind == "ann":
            if "widths" in opts:
                opts["widths"] = tuple(opts["widths"])
            return AnnSpec(input_dim=input_dim, **opts)
        return GruSpec(input_dim=input_dim, **opts)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 7
    out: str = "run"
    generator: generator.GeneratorConfig = field(default_factory=generator.default_config)
    aggregation: AggregationConfig = AggregationConfig()
    split: features.SplitSpec = features.SplitSpec(
        train=(_T0, _T0 + 4 * _WEEK), test=(_T0 + 4 * _WEEK, _T0 + 6 * _WEEK)
    )
    detector: DetectorConfig = DetectorConfig()
    likelihood: likelihood.LikelihoodParams = likelihood.LikelihoodParams()
    profiles: tuple[str, ...] = ("standard", "reward_low_fn")
    records_path: str | None = None
    ground_truth_path: str | None = None

    def __post_init__(self) -> None:
        unknown = [p for p in self.profiles if p not in scoring.PROFILES]
        if unknown or not self.profiles:
            raise ConfigError(f"profiles must be a non-empty subset of {sorted(scoring.PROFILES)}")
        object.__setattr__(self, "generator", replace(self.generator, seed=self.seed))
        self.generator.validate()

    # locations within the run directory
    @property
    def root(self) -> Path:
        return Path(self.out)

    @property
    def records_file(self) -> Path:
        return Path(self.records_path) if self.records_path else self.root / "raw" / "records.csv"

    @property
    def ground_truth_dir(self) -> Path:
        return Path(self.ground_truth_path) if self.ground_truth_path else self.root / "ground_truth"

    @property
    def train_config(self) -> TrainConfig:
        return self.detector.train

    @property
    def time_range(self) -> tuple[int, int]:
        if self.aggregation.range is not None:
            return self.aggregation.range
        iv = self.aggregation.interval_seconds
        return self.generator.start - self.generator.start % iv, self.generator.end

    def profile_objects(self) -> list[scoring.CostProfile]:
        return [scoring.PROFILES[p] for p in self.profiles]

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "out": self.out,
            "generator": self.generator.to_dict(),
            "aggregation": asdict(self.aggregation),
            "split": {
                "train": list(self.split.train),
                "test": list(self.split.test),
                "anomaly_buffer_minutes": self.split.anomaly_buffer_minutes,
            },
            "detector": {"kind": self.detector.kind, "spec": dict(self.detector.spec), "train": self.train_config.to_dict()},
            "likelihood": asdict(self.likelihood),
            "profiles": list(self.profiles),
            "records_path": self.records_path,
            "ground_truth_path": self.ground_truth_path,
        }

    def digest(self) -> str:
        """Hash of the resolved config, independent of the output location."""
        d = self.to_dict()
        d.pop("out")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=list)
        return hashlib.sha256(blob.encode()).hexdigest()

    @classmethod
    def from_mapping(cls, data: dict | None, seed: int | None = None, out: str | None = None) -> "PipelineConfig":
        data = dict(data or {})
        top = {"seed", "out", "generator", "aggregation", "split", "detector", "likelihood", "profiles", "paths"}
        unknown = set(data) - top
        if unknown:
            raise ConfigError(f"unknown config section(s) {sorted(unknown)}")
        s = int(seed if seed is not None else data.get("seed", 7))
        kw: dict = {"seed": s, "out": str(out if out is not None else data.get("out", "run"))}

        gen = dict(data.get("generator") or {})
        preset = gen.pop("preset", "default")
        if preset not in ("default", "none"):
            raise ConfigError(f"generator.preset must be 'default' or 'none', got {preset!r}")
        gen.pop("seed", None)
        for k in ("start", "end"):
            if k in gen:
                gen[k] = _time(gen[k])
        for k in ("anomaly_specs", "downtime_specs"):
            if k in gen:
                gen[k] = [dict(x, start=_time(x["start"]), end=_time(x["end"])) for x in gen[k]]
        base = generator.default_config(s) if preset == "default" else generator.GeneratorConfig(seed=s)
        merged = {**base.to_dict(), **gen}
        kw["generator"] = generator.GeneratorConfig.from_dict(merged)

        agg = _strict(AggregationConfig, dict(data.get("aggregation") or {}), "aggregation")
        if "range" in agg:
            agg["range"] = _range(agg["range"])
        kw["aggregation"] = AggregationConfig(**agg)

        if "split" in data:
            sp = _strict(features.SplitSpec, dict(data["split"]), "split")
            kw["split"] = features.SplitSpec(
                train=_range(sp.get("train", cls.split.train)),
                test=_range(sp.get("test", cls.split.test)),
                anomaly_buffer_minutes=float(sp.get("anomaly_buffer_minutes", 0.0)),
            )

        det = dict(data.get("detector") or {})
        bad = set(det) - {"kind", "spec", "train"}
        if bad:
            raise ConfigError(f"detector: unknown option(s) {sorted(bad)}")
        tr = _strict(TrainConfig, dict(det.get("train") or {}), "detector.train")
        tr.setdefault("seed", s)
        kw["detector"] = DetectorConfig(
            kind=det.get("kind", "gru"), spec=dict(det.get("spec") or {}), train=TrainConfig(**tr)
        )

        if "likelihood" in data:
            kw["likelihood"] = likelihood.LikelihoodParams(
                **_strict(likelihood.LikelihoodParams, dict(data["likelihood"]), "likelihood")
            )
        if "profiles" in data:
            kw["profiles"] = tuple(data["profiles"])
        paths = dict(data.get("paths") or {})
        bad = set(paths) - {"records", "ground_truth"}
        if bad:
            raise ConfigError(f"paths: unknown option(s) {sorted(bad)}")
        kw["records_path"] = paths.get("records")
        kw["ground_truth_path"] = paths.get("ground_truth")
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | Path | None, seed: int | None = None, out: str | None = None) -> PipelineConfig:
    """Read a YAML or JSON config file (or use defaults when ``path`` is None)."""
    import yaml

    data = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise MissingInputError(f"config file not found: {p}")
        try:
            data = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{p}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{p}: top level must be a mapping")
    return PipelineConfig.from_mapping(data, seed=seed, out=out)


def _require(*paths: Path) -> None:
    for p in paths:
        if not Path(p).exists():
            raise MissingInputError(f"required input missing: {p}")


def _stage_dir(cfg: PipelineConfig, name: str) -> Path:
    d = cfg.root / name
    d.mkdir(parents=True, exist_ok=True)
    return d


# --- stages ------------------------------------------------------------------


def cmd_generate(cfg: PipelineConfig) -> list[Path]:
    batch, gt = generator.generate(cfg.generator)
    raw = _stage_dir(cfg, "raw") / "records.csv"
    write_records(batch, raw)
    windows, downtimes = write_ground_truth(gt, _stage_dir(cfg, "ground_truth"))
    log.info("generated %d records, %d anomaly windows", len(batch), len(gt.windows))
    return [raw, windows, downtimes]


def cmd_aggregate(cfg: PipelineConfig) -> list[Path]:
    _require(cfg.records_file)
    a = cfg.aggregation
    batch = read_records(cfg.records_file, on_malformed=a.on_malformed, max_malformed_fraction=a.max_malformed_fraction)
    if batch.malformed:
        log.warning("skipped %d malformed record(s)", batch.malformed)
    rng = cfg.time_range
    table = aggregator.aggregate(batch, interval=a.interval_seconds, time_range=rng)
    lo = rng[0] - rng[0] % a.interval_seconds
    frame = aggregator.pivot(table, time_range=(lo, rng[1]), interval=a.interval_seconds)
    d = _stage_dir(cfg, "aggregate")
    aggregator.write_unpivoted(table, d / "unpivoted.csv")
    aggregator.write_pivoted(frame, d / "pivoted.csv")
    log.info("aggregated into %d rows, frame %s", len(table), frame.shape)
    return [d / "unpivoted.csv", d / "pivoted.csv"]


def _load_5xx_frame(cfg: PipelineConfig) -> aggregator.PivotedFrame:
    path = cfg.root / "aggregate" / "pivoted.csv"
    _require(path)
    return aggregator.read_pivoted(path, columns=features.is_5xx_count)


def _windows(cfg: PipelineConfig):
    d = cfg.ground_truth_dir
    _require(d / "anomaly_windows.csv", d / "location_downtime.csv")
    return load_ground_truth(d)


def cmd_train(cfg: PipelineConfig) -> list[Path]:
    frame = _load_5xx_frame(cfg)
    inputs = features.build_inputs(frame)
    windows = _windows(cfg).windows if cfg.split.anomaly_buffer_minutes > 0 else ()
    tr, _ = features.split(inputs, cfg.split, windows)
    scaler = features.fit_scaler(tr)
    x = features.apply_scaler(scaler, tr).values
    spec = cfg.detector.build_spec(x.shape[1])
    net, losses = train(spec, x, cfg.train_config)
    d = _stage_dir(cfg, "model")
    WeightsBundle.from_network(net, cfg.train_config.seed).save(d / "weights.bin")
    scaler.save(d / "scaler.json")
    write_loss_curve(losses, d / "loss_curve.csv")
    log.info("trained %s on %s, final loss %.6g", spec.kind, x.shape, losses[-1])
    return [d / "weights.bin", d / "scaler.json", d / "loss_curve.csv"]


def cmd_detect(cfg: PipelineConfig) -> list[Path]:
    mdir = cfg.root / "model"
    _require(mdir / "weights.bin", mdir / "scaler.json")
    frame = _load_5xx_frame(cfg)
    test = frame.take_rows((frame.intervals >= cfg.split.test[0]) & (frame.intervals < cfg.split.test[1]))
    if not test.intervals.size:
        raise ConfigError("test split is empty")
    scaler = features.MinMaxScaler.load(mdir / "scaler.json")
    net = WeightsBundle.load(mdir / "weights.bin").to_network()
    x = features.apply_scaler(scaler, features.build_inputs(test)).values
    err = reconstruction_error(net, x)
    lik, flags = likelihood.detect(err, cfg.likelihood)
    out = pd.DataFrame(
        {
            "interval_start": test.intervals,
            "sum5xx_norm": features.minmax_normalize(features.sum_5xx(test)),
            "recon_error": err,
            "likelihood": lik,
            "flag": flags.astype(np.int64),
        }
    )
    d = _stage_dir(cfg, "detect")
    out.to_csv(d / "detections.csv", index=False, lineterminator="\n")
    log.info("flagged %d of %d intervals", int(flags.sum()), flags.size)
    return [d / "detections.csv"]


def read_detections(path: str | Path) -> pd.DataFrame:
    _require(Path(path))
    df = pd.read_csv(path, float_precision="round_trip")
    if list(df.columns) != DETECTION_COLUMNS:
        raise IntegrityError(f"{path}: columns {list(df.columns)} != {DETECTION_COLUMNS}")
    return df


def cmd_score(cfg: PipelineConfig) -> list[Path]:
    det = read_detections(cfg.root / "detect" / "detections.csv")
    gt = _windows(cfg)
    report = scoring.score(
        det["flag"].to_numpy(bool),
        gt.windows,
        axis=det["interval_start"].to_numpy(np.int64),
        profiles=cfg.profile_objects(),
        downtimes=gt.downtimes,
    )
    d = _stage_dir(cfg, "score")
    report.save(d / "report.json", d / "report.csv")
    return [d / "report.json", d / "report.csv"]


def sweep_table(errors: np.ndarray, axis: np.ndarray, windows, profiles, grid=None) -> pd.DataFrame:
    """One scored row per likelihood parameter set."""
    rows = []
    for params in grid if grid is not None else likelihood.parameter_grid():
        _, flags = likelihood.detect(errors, params)
        row = {"long_window": params.long_window, "short_window": params.short_window, "threshold": params.threshold}
        row.update(scoring.score(flags, windows, axis=axis, profiles=profiles).flat_row())
        rows.append(row)
    return pd.DataFrame(rows)


def cmd_sweep(cfg: PipelineConfig) -> list[Path]:
    det = read_detections(cfg.root / "detect" / "detections.csv")
    gt = _windows(cfg)
    table = sweep_table(
        det["recon_error"].to_numpy(np.float64),
        det["interval_start"].to_numpy(np.int64),
        gt.windows,
        cfg.profile_objects(),
    )
    d = _stage_dir(cfg, "sweep")
    table.to_csv(d / "sweep.csv", index=False, lineterminator="\n")
    return [d / "sweep.csv"]


STAGES: dict[str, Callable[[PipelineConfig], list[Path]]] = {
    "generate": cmd_generate,
    "aggregate": cmd_aggregate,
    "train": cmd_train,
    "detect": cmd_detect,
    "score": cmd_score,
    "sweep": cmd_sweep,
}


# --- manifest ----------------------------------------------------------------


def sha256_file(path: str | Path, chunk: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while block := fh.read(chunk):
            h.update(block)
    return h.hexdigest()


def output_digests(root: str | Path) -> dict[str, str]:
    root = Path(root)
    return {
        p.relative_to(root).as_posix(): sha256_file(p)
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name != MANIFEST_FILE
    }


@dataclass
class RunManifest:
    config_hash: str
    seeds: dict[str, int]
    versions: dict[str, str]
    timings: dict[str, float]
    outputs: dict[str, str]
    config: dict
    version: int = MANIFEST_VERSION

    def without_timings(self) -> dict:
        d = asdict(self)
        d.pop("timings")
        return d

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))

    def verify(self, root: str | Path) -> list[str]:
        """Relative paths whose current digest differs from the recorded one."""
        now = output_digests(root)
        return sorted(k for k in set(now) | set(self.outputs) if now.get(k) != self.outputs.get(k))


def versions() -> dict[str, str]:
    return {
        "lcsbench": lcsbench.__version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
    }


def run_all(cfg: PipelineConfig, stages=tuple(STAGES)) -> RunManifest:
    cfg.root.mkdir(parents=True, exist_ok=True)
    timings = {}
    for name in stages:
        t = time.perf_counter()
        STAGES[name](cfg)
        timings[name] = round(time.perf_counter() - t, 3)
        log.info("stage %s done in %.1fs", name, timings[name])
    manifest = RunManifest(
        config_hash=cfg.digest(),
        seeds={"generator": cfg.generator.seed, "train": cfg.train_config.seed},
        versions=versions(),
        timings=timings,
        outputs=output_digests(cfg.root),
        config={k: v for k, v in cfg.to_dict().items() if k != "out"},
    )
    manifest.save(cfg.root / MANIFEST_FILE)
    return manifest
