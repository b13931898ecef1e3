"""Experiment orchestration: configs, seeded runs, sweeps, growth fits and curve files."""
from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import envs
from .mdp import ConfigurationError, LinearMixtureMDP
from .oracles import NOISE_MODES, NoiseModel
from .records import RunRecord

ALGORITHMS = ("qucrl", "qucrl-vtr", "classical-ucrl", "classical-vtr")
# fields that do not change what a run computes
_UNHASHED = {"seed", "output_dir"}


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str = "qucrl"
    T: int = 10_000
    delta: float = 0.1
    env_path: str | None = None
    env_kind: str = "tabular"
    S: int = 3
    A: int = 2
    H: int = 3
    d: int = 2
    gap: float | None = None
    env_seed: int = 0
    c1: float = 1.0
    c_amp: float | None = None  # None: largest value consistent with c1
    c_mean: float = 1.0
    c_K: float = 4.0
    lam: float = 1.0
    epsilon_floor: float = 2.0 ** -20
    c_classical: float = 1.0
    c_beta: float = 1.0
    noise: str = "uniform"
    failure_injection: bool = False
    seed: int = 0
    output_dir: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.noise not in NOISE_MODES:
            raise ConfigurationError(f"noise must be one of {NOISE_MODES}, got {self.noise!r}")
        if not isinstance(self.T, int) or self.T < 1:
            raise ConfigurationError("T must be a positive integer")
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError("delta must lie in (0, 1)")
        for name in ("c1", "c_mean", "c_K", "lam", "epsilon_floor", "c_classical", "c_beta"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.c_amp is not None and not self.c_amp > 0:
            raise ConfigurationError("c_amp must be positive")
        if self.env_path is not None:
            if not Path(self.env_path).is_file():
                raise ConfigurationError(f"environment file {self.env_path} does not exist")
        else:
            if self.env_kind not in ("tabular", "linmix"):
                raise ConfigurationError(f"env_kind must be 'tabular' or 'linmix', got {self.env_kind!r}")
            if min(self.S, self.A, self.H, self.d) < 1:
                raise ConfigurationError("S, A, H and d must be positive")
            if self.algorithm in ("qucrl", "classical-ucrl") and self.T < self.H:
                raise ConfigurationError(f"T={self.T} must be at least H={self.H} for tabular algorithms")

    def semantic_fields(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name not in _UNHASHED}
        if self.env_path is not None:
            # the file content matters, not where it lives
            out["env_path"] = hashlib.sha256(Path(self.env_path).read_bytes()).hexdigest()
        return out

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic_fields(), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def build_env(self):
        if self.env_path is not None:
            return envs.load(self.env_path)
        return envs.generate(self.env_kind, S=self.S, A=self.A, H=self.H, d=self.d, gap=self.gap, seed=self.env_seed)


def run(config: ExperimentConfig) -> RunRecord:
    """One seeded run; deterministic given the config."""
    from .baselines import run_classical_ucrl, run_classical_ucrl_vtr
    from .tabular import run_quantum_ucrl
    from .vtr import run_quantum_ucrl_vtr

    mdp = config.build_env()
    rng = np.random.default_rng(config.seed)
    noise = NoiseModel(config.noise, config.failure_injection)
    needs_linear = config.algorithm in ("qucrl-vtr", "classical-vtr")
    if needs_linear and not isinstance(mdp, LinearMixtureMDP):
        raise ConfigurationError(f"{config.algorithm} needs a linear mixture environment")
    if config.algorithm in ("qucrl", "classical-ucrl") and config.T < mdp.H:
        raise ConfigurationError(f"T={config.T} must be at least H={mdp.H}")
    if config.algorithm == "qucrl":
        rec = run_quantum_ucrl(mdp, config.T, config.delta, c1=config.c1, c_amp=config.c_amp, noise=noise, rng=rng)
    elif config.algorithm == "qucrl-vtr":
        rec = run_quantum_ucrl_vtr(mdp, config.T, config.delta, lam=config.lam, c_mean=config.c_mean, c_K=config.c_K,
                                   epsilon_floor=config.epsilon_floor, noise=noise, rng=rng)
    elif config.algorithm == "classical-ucrl":
        rec = run_classical_ucrl(mdp, config.T, config.delta, c=config.c_classical, rng=rng)
    else:
        rec = run_classical_ucrl_vtr(mdp, config.T, config.delta, c_beta=config.c_beta, lam=config.lam, rng=rng)
    rec.config_hash = config.config_hash()
    rec.seed = config.seed
    return rec


def expand_grid(template: ExperimentConfig, grid: Mapping[str, Sequence]) -> list[ExperimentConfig]:
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    if not isinstance(grid, Mapping):
        raise ConfigurationError("grid must map field names to value lists")
    for key, values in grid.items():
        if key not in names:
            raise ConfigurationError(f"unknown grid field {key!r}")
        if isinstance(values, (str, bytes)) or not isinstance(values, Sequence) or len(values) == 0:
            raise ConfigurationError(f"grid field {key!r} needs a non-empty list of values")
    keys = sorted(grid)
    return [template.replace(**dict(zip(keys, combo))) for combo in itertools.product(*(grid[k] for k in keys))]


def sweep(template: ExperimentConfig, grid: Mapping[str, Sequence], workers: int = 1) -> list[RunRecord]:
    """Run every grid point; results are sorted by (config hash, seed) so grid order is irrelevant."""
    configs = expand_grid(template, grid)
    if workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(run, configs))
    else:
        records = [run(c) for c in configs]
    order = sorted(range(len(configs)), key=lambda i: (configs[i].config_hash(), configs[i].seed, configs[i].algorithm))
    return [records[i] for i in order]


# ----------------------------------------------------------------- fitting


@dataclass(frozen=True)
class GrowthFit:
    algorithm: str
    config_hash: str
    n_runs: int
    T: int
    final_regret: float
    quarter_ratio: float  # mean Regret(T) / mean Regret(T/4)
    log_coef: tuple[float, float]  # (a, b) of a log t + b
    sqrt_coef: tuple[float, float]
    log_residual: float  # relative l2 residual over the window
    sqrt_residual: float

    @property
    def verdict(self) -> str:
        return "log" if self.log_residual <= self.sqrt_residual else "sqrt"

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["verdict"] = self.verdict
        return out


def _fit(t: np.ndarray, y: np.ndarray, basis) -> tuple[tuple[float, float], float]:
    X = np.column_stack([basis(t), np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    scale = float(np.linalg.norm(y))
    rel = float(np.linalg.norm(resid)) / scale if scale > 0 else float(np.linalg.norm(resid))
    return (float(coef[0]), float(coef[1])), rel


def fit_growth(t: np.ndarray, regret: np.ndarray, window: tuple[float, float] = (0.25, 1.0)):
    """Least-squares fits of a log t + b and a sqrt t + b over t in [lo T, hi T]."""
    t = np.asarray(t, dtype=float)
    regret = np.asarray(regret, dtype=float)
    T = t.max()
    mask = (t >= window[0] * T) & (t <= window[1] * T)
    return _fit(t[mask], regret[mask], np.log), _fit(t[mask], regret[mask], np.sqrt)


def _groups(records: Iterable[RunRecord]) -> dict[tuple[str, str], list[RunRecord]]:
    out: dict[tuple[str, str], list[RunRecord]] = {}
    for rec in records:
        out.setdefault((rec.algorithm, rec.config_hash), []).append(rec)
    return out


def mean_curve(records: Sequence[RunRecord]) -> tuple[np.ndarray, np.ndarray]:
    n = min(r.n_episodes for r in records)
    curve = np.mean([r.cumulative_regret[:n] for r in records], axis=0)
    return np.arange(1, n + 1, dtype=float), curve


def summarize(records: Iterable[RunRecord]) -> list[GrowthFit]:
    """Growth fits per (algorithm, config) over the window [T/4, T], seeds averaged."""
    fits = []
    for (algorithm, chash), group in sorted(_groups(records).items()):
        t, curve = mean_curve(group)
        if t.size == 0:
            continue
        (log_coef, log_res), (sqrt_coef, sqrt_res) = fit_growth(t, curve)
        T = int(t[-1])
        quarter = curve[max(T // 4, 1) - 1]
        ratio = float(curve[-1] / quarter) if quarter > 0 else (1.0 if curve[-1] == 0 else math.inf)
        fits.append(GrowthFit(algorithm, chash, len(group), T, float(curve[-1]), ratio, log_coef, sqrt_coef,
                              log_res, sqrt_res))
    return fits


def emit_plot_data(records: Iterable[RunRecord], directory, max_points: int = 2000) -> list[Path]:
    """Write two-column (T, regret) series: the seed-mean curve and both fitted curves."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for (algorithm, chash), group in sorted(_groups(records).items()):
        t, curve = mean_curve(group)
        if t.size == 0:
            continue
        idx = np.unique(np.linspace(0, t.size - 1, min(max_points, t.size)).astype(int))
        (la, lb), _ = fit_growth(t, curve)[0]
        (sa, sb), _ = fit_growth(t, curve)[1]
        stem = f"{algorithm}-{chash[:12]}"
        series = {
            "curve": curve[idx],
            "logfit": la * np.log(t[idx]) + lb,
            "sqrtfit": sa * np.sqrt(t[idx]) + sb,
        }
        for name, values in series.items():
            path = directory / f"{stem}.{name}.tsv"
            lines = [f"{int(ti)}\t{v!r}" for ti, v in zip(t[idx], values.tolist())]
            path.write_text("T\tregret\n" + "\n".join(lines) + "\n")
            written.append(path)
    return written


def load_records(directory) -> list[RunRecord]:
    directory = Path(directory)
    paths = sorted(directory.glob("*.csv"))
    return [RunRecord.read(p) for p in paths if p.with_name(p.name[:-4] + ".summary.json").exists()]
