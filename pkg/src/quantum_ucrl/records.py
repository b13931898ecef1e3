"""Per-episode run records and their CSV / JSON persistence."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .oracles import EpisodeLedger

BASE_COLUMNS = ("episode", "phase", "instantaneous_regret", "cumulative_regret")
INT_COLUMNS = {"episode", "phase", "updates_so_far", "feature_cost", "target_cost", "degenerate_flag"}


@dataclass(eq=False)
class RunRecord:
    algorithm: str
    columns: dict[str, np.ndarray]
    summary: dict
    config_hash: str = ""
    seed: int = 0
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def n_episodes(self) -> int:
        return int(self.columns["episode"].shape[0])

    @property
    def cumulative_regret(self) -> np.ndarray:
        return self.columns["cumulative_regret"]

    @property
    def final_regret(self) -> float:
        cum = self.cumulative_regret
        return float(cum[-1]) if cum.size else 0.0

    def regret_at(self, t: int) -> float:
        """Cumulative regret after ``t`` episodes (0 for t = 0)."""
        if t <= 0:
            return 0.0
        return float(self.cumulative_regret[min(t, self.n_episodes) - 1])

    def to_csv(self) -> str:
        names = list(self.columns)
        cols = []
        for name in names:
            col = self.columns[name]
            if name in INT_COLUMNS:
                cols.append([str(int(v)) for v in col])
            else:
                cols.append([repr(float(v)) for v in col])
        lines = [",".join(names)]
        lines.extend(",".join(row) for row in zip(*cols))
        return "\n".join(lines) + "\n"

    def summary_json(self) -> str:
        payload = {"algorithm": self.algorithm, "config_hash": self.config_hash, "seed": self.seed, **self.summary}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def write(self, directory, stem: str | None = None) -> dict[str, Path]:
        """Write ``<stem>.csv``, ``<stem>.summary.json`` and a wall-time sidecar.

        Wall time lives in its own file so the record files stay byte-identical
        across reruns with the same seed.
        """
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        stem = stem or f"{self.algorithm}-{self.config_hash[:12]}-s{self.seed}"
        paths = {
            "rows": directory / f"{stem}.csv",
            "summary": directory / f"{stem}.summary.json",
            "timing": directory / f"{stem}.timing.json",
        }
        paths["rows"].write_text(self.to_csv())
        paths["summary"].write_text(self.summary_json())
        paths["timing"].write_text(json.dumps({"wall_time_s": self.wall_time}) + "\n")
        return paths

    @classmethod
    def read(cls, rows_path, summary_path=None) -> "RunRecord":
        rows_path = Path(rows_path)
        if summary_path is None:
            summary_path = rows_path.with_name(rows_path.name[: -len(".csv")] + ".summary.json")
        text = rows_path.read_text().splitlines()
        names = text[0].split(",")
        data = np.array([line.split(",") for line in text[1:]], dtype=object).reshape(len(text) - 1, len(names))
        columns = {}
        for j, name in enumerate(names):
            dtype = np.int64 if name in INT_COLUMNS else float
            columns[name] = data[:, j].astype(dtype) if data.size else np.zeros(0, dtype=dtype)
        meta = json.loads(Path(summary_path).read_text())
        algorithm = meta.pop("algorithm")
        config_hash = meta.pop("config_hash", "")
        seed = meta.pop("seed", 0)
        return cls(algorithm, columns, meta, config_hash, seed)


def rows_from_ledger(ledger: EpisodeLedger, regret_by_policy: Mapping[int, float],
                     phase_columns: Mapping[str, Mapping[int, float]] | None = None,
                     episode_columns: Mapping[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
    """Expand the charge log into one row per executed episode.

    ``phase_columns`` maps column name -> {phase: value}; ``episode_columns``
    supplies arrays already aligned with episodes.
    """
    charges = ledger.charges
    counts = np.array([c.episodes for c in charges], dtype=np.int64)
    phases = np.repeat(np.array([c.phase for c in charges], dtype=np.int64), counts)
    regret = np.repeat(np.array([regret_by_policy[c.policy_id] for c in charges], dtype=float), counts)
    n = int(counts.sum())
    cols = {
        "episode": np.arange(1, n + 1, dtype=np.int64),
        "phase": phases,
        "instantaneous_regret": regret,
        "cumulative_regret": np.cumsum(regret),
    }
    for name, by_phase in (phase_columns or {}).items():
        dtype = np.int64 if name in INT_COLUMNS else float
        lookup = np.array([by_phase.get(int(k), 0) for k in range(int(phases.max(initial=0)) + 1)], dtype=dtype)
        cols[name] = lookup[phases] if n else np.zeros(0, dtype=dtype)
    for name, values in (episode_columns or {}).items():
        cols[name] = np.asarray(values)[:n]
    return cols


class RegretCache:
    """V*_1(s1) - V^pi_1(s1), memoized per distinct policy."""

    def __init__(self, mdp):
        from .mdp import as_tabular, exact_optimal_values

        self.mdp = as_tabular(mdp)
        self.v_star = float(exact_optimal_values(self.mdp)[0].V[0, self.mdp.s1])
        self._cache: dict[bytes, float] = {}

    def __call__(self, pi) -> float:
        from .mdp import exact_policy_evaluation

        key = pi.key()
        value = self._cache.get(key)
        if value is None:
            v = float(exact_policy_evaluation(self.mdp, pi).V[0, self.mdp.s1])
            value = max(self.v_star - v, 0.0) if abs(self.v_star - v) < 1e-12 else self.v_star - v
            self._cache[key] = value
        return value
