"""Environment generators and the on-disk environment format.

Environment files are JSON objects with the fields ``kind`` (``tabular`` or
``linmix``), ``S``, ``A``, ``H``, ``d`` (linmix only), ``P`` or
``psi``/``theta``, ``R`` and ``s1``. Innermost arrays are written one per line
so validation errors can point at the offending row.
"""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .mdp import (
    ConfigurationError,
    InvalidModelError,
    LinearMixtureMDP,
    MDP,
    TabularMDP,
)


class EnvironmentFileError(ValueError):
    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = f"{path or '<env>'}:{line}" if line is not None else (path or "<env>")
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------- generators


def random_tabular_mdp(S: int, A: int, H: int, rng: np.random.Generator, alpha: float = 1.0) -> TabularMDP:
    """Dirichlet(alpha) transition rows and Uniform[0, 1] rewards, s1 = 0."""
    P = rng.dirichlet(np.full(S, alpha), size=(H, S, A))
    R = rng.uniform(0.0, 1.0, size=(H, S, A))
    return TabularMDP(P=P, R=R, s1=0)


def gap_tabular_mdp(S: int, A: int, H: int, gap: float, rng: np.random.Generator, alpha: float = 1.0) -> TabularMDP:
    """Action-independent transitions; reward 0.5 + gap on one action per (h, s), 0.5 elsewhere.

    Since actions do not move the state distribution, every suboptimal action
    costs exactly ``gap``; exploration difficulty is set by that one knob.
    """
    rows = rng.dirichlet(np.full(S, alpha), size=(H, S))
    P = np.repeat(rows[:, :, None, :], A, axis=2)
    R = np.full((H, S, A), 0.5)
    best = rng.integers(0, A, size=(H, S))
    np.put_along_axis(R, best[..., None], 0.5 + gap, axis=-1)
    return TabularMDP(P=P, R=np.clip(R, 0.0, 1.0), s1=0)


def _mixture_parts(d: int, S: int, A: int, rng: np.random.Generator, alpha: float):
    # psi_i = u_i * Q_i with u a non-negative unit vector: sum_{s'} psi = u, so
    # theta_h = u gives valid rows with ||theta|| = 1 and ||phi_V|| <= 1.
    weights = rng.dirichlet(np.ones(d))
    u = np.sqrt(weights)
    base = rng.dirichlet(np.full(S, alpha), size=(d, S, A))
    psi = np.einsum("i,isat->sati", u, base)
    return psi, u


def random_linear_mixture_mdp(d: int, S: int, A: int, H: int, rng: np.random.Generator, alpha: float = 1.0) -> LinearMixtureMDP:
    """Mixture of ``d`` random base kernels satisfying the norm conditions by construction."""
    psi, u = _mixture_parts(d, S, A, rng, alpha)
    theta = np.tile(u, (H, 1))
    R = rng.uniform(0.0, 1.0, size=(H, S, A))
    return LinearMixtureMDP(psi=psi, theta=theta, R=R, s1=0)


def gap_linear_mixture_mdp(d: int, S: int, A: int, H: int, gap: float, rng: np.random.Generator,
                           alpha: float = 1.0, spread: float = 0.3) -> LinearMixtureMDP:
    """Mixture where only the mass sent to state 0 depends on the action.

    Reward is 1 in state 0 and 0 elsewhere. Component i sends mass
    0.5 + gap [a = a*(s)] + spread c_{a,i} to state 0, where c_a has zero mean
    under the mixture weights: the mixture itself moves exactly ``gap`` more
    mass for the best action, while single components disagree by up to
    ``spread``. The rest of the mass follows a fixed per-state law over the
    other states, so step-h action gaps are gap (V_{h+1}(0) - E V_{h+1}(rest)).
    """
    if S < 2:
        raise ConfigurationError("the gap mixture needs S >= 2")
    if not 0.0 <= gap <= 0.2 or not 0.0 <= spread <= 0.3:
        raise ConfigurationError("gap must lie in [0, 0.2] and spread in [0, 0.3]")
    weights = rng.dirichlet(np.ones(d))
    u = np.sqrt(weights)
    best = rng.integers(0, A, size=S)
    rest = rng.dirichlet(np.full(S - 1, alpha), size=S)
    c = rng.standard_normal((S, A, d))
    c -= (c @ weights)[..., None]
    scale = np.abs(c).max(axis=-1, keepdims=True)
    c = np.divide(c, scale, out=np.zeros_like(c), where=scale > 0)
    to_zero = 0.5 + spread * c
    to_zero[np.arange(S), best] += gap
    base = np.empty((d, S, A, S))
    base[..., 0] = np.moveaxis(to_zero, -1, 0)
    base[..., 1:] = (1.0 - np.moveaxis(to_zero, -1, 0))[..., None] * rest[None, :, None, :]
    psi = np.einsum("i,isat->sati", u, base)
    theta = np.tile(u, (H, 1))
    R = np.zeros((H, S, A))
    R[:, 0, :] = 1.0
    return LinearMixtureMDP(psi=psi, theta=theta, R=R, s1=0)


def chain_mdp(S: int, A: int, H: int) -> TabularMDP:
    """Deterministic chain: every action moves s -> min(s + 1, S - 1); reward 1 for action 0."""
    P = np.zeros((H, S, A, S))
    for s in range(S):
        P[:, s, :, min(s + 1, S - 1)] = 1.0
    R = np.zeros((H, S, A))
    R[:, :, 0] = 1.0
    return TabularMDP(P=P, R=R, s1=0)


def generate(kind: str, *, S: int, A: int, H: int, d: int = 2, gap: float | None = None, seed: int = 0) -> MDP:
    rng = np.random.default_rng(seed)
    if kind == "tabular":
        return random_tabular_mdp(S, A, H, rng) if gap is None else gap_tabular_mdp(S, A, H, gap, rng)
    if kind == "linmix":
        if gap is None:
            return random_linear_mixture_mdp(d, S, A, H, rng)
        return gap_linear_mixture_mdp(d, S, A, H, gap, rng)
    raise ConfigurationError(f"unknown environment kind {kind!r}")


# --------------------------------------------------------------- file format


def _format(x, indent: int) -> str:
    if isinstance(x, list) and x and not isinstance(x[0], list):
        return "[" + ", ".join(repr(float(v)) for v in x) + "]"
    pad = " " * (indent + 1)
    inner = (",\n" + pad).join(_format(v, indent + 1) for v in x)
    return "[\n" + pad + inner + "\n" + " " * indent + "]"


def dumps(mdp: MDP) -> str:
    fields: list[tuple[str, object]] = []
    if isinstance(mdp, LinearMixtureMDP):
        fields += [("kind", "linmix"), ("S", mdp.S), ("A", mdp.A), ("H", mdp.H), ("d", mdp.d)]
        fields += [("psi", mdp.psi.tolist()), ("theta", mdp.theta.tolist())]
    else:
        fields += [("kind", "tabular"), ("S", mdp.S), ("A", mdp.A), ("H", mdp.H), ("P", mdp.P.tolist())]
    fields += [("R", mdp.R.tolist()), ("s1", mdp.s1)]
    body = []
    for key, value in fields:
        text = _format(value, 2) if isinstance(value, list) else json.dumps(value)
        body.append(f'  "{key}": {text}')
    return "{\n" + ",\n".join(body) + "\n}\n"


def save(mdp: MDP, path) -> None:
    Path(path).write_text(dumps(mdp))


def _key_line(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _row_line(text: str, key: str, ndim: int, flat_row: int) -> int | None:
    """Line of the ``flat_row``-th innermost array of field ``key``."""
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    if m is None:
        return None
    depth = 0
    seen = -1
    for pos in range(m.end(), len(text)):
        ch = text[pos]
        if ch == "[":
            depth += 1
            if depth == ndim:
                seen += 1
                if seen == flat_row:
                    return text.count("\n", 0, pos) + 1
        elif ch == "]":
            depth -= 1
            if depth == 0:
                break
    return _key_line(text, key)


def loads(text: str, path: str | None = None) -> MDP:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise EnvironmentFileError(exc.msg, exc.lineno, path) from None
    if not isinstance(raw, dict):
        raise EnvironmentFileError("top level must be an object", 1, path)

    def fail(msg, key=None, line=None):
        raise EnvironmentFileError(msg, line if line is not None else (_key_line(text, key) if key else 1), path)

    kind = raw.get("kind")
    if kind not in ("tabular", "linmix"):
        fail(f"kind must be 'tabular' or 'linmix', got {kind!r}", "kind")
    required = ["S", "A", "H", "R", "s1"] + (["P"] if kind == "tabular" else ["d", "psi", "theta"])
    for key in required:
        if key not in raw:
            fail(f"missing field {key!r}")
    dims = {}
    for key in ("S", "A", "H") + (("d",) if kind == "linmix" else ()):
        value = raw[key]
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            fail(f"{key} must be a positive integer", key)
        dims[key] = value
    S, A, H = dims["S"], dims["A"], dims["H"]

    def array(key, shape):
        try:
            arr = np.array(raw[key], dtype=float)
        except (TypeError, ValueError):
            fail(f"{key} is not a numeric array", key)
        if arr.shape != shape:
            fail(f"{key} has shape {arr.shape}, expected {shape}", key)
        if not np.all(np.isfinite(arr)):
            fail(f"{key} contains non-finite values", key)
        return arr

    R = array("R", (H, S, A))
    bad = np.argwhere((R < 0) | (R > 1))
    if bad.size:
        h, s, _ = bad[0]
        fail(f"reward R[{h}][{s}] outside [0, 1]", line=_row_line(text, "R", 3, h * S + s))
    s1 = raw["s1"]
    if not isinstance(s1, int) or isinstance(s1, bool) or not 0 <= s1 < S:
        fail(f"s1 must be an integer in [0, {S})", "s1")

    if kind == "tabular":
        P = array("P", (H, S, A, S))
        sums = P.sum(axis=-1)
        bad = np.argwhere((P.min(axis=-1) < 0) | (np.abs(sums - 1.0) > 1e-12))
        if bad.size:
            h, s, a = bad[0]
            fail(f"P[{h}][{s}][{a}] is not a probability distribution",
                 line=_row_line(text, "P", 4, (h * S + s) * A + a))
        return TabularMDP(P=P, R=R, s1=s1)

    d = dims["d"]
    psi = array("psi", (S, A, S, d))
    theta = array("theta", (H, d))
    P = np.einsum("sand,hd->hsan", psi, theta)
    bad = np.argwhere((P.min(axis=-1) < -1e-12) | (np.abs(P.sum(axis=-1) - 1.0) > 1e-10))
    if bad.size:
        h, s, a = bad[0]
        fail(f"psi(s={s}, a={a}, .)^T theta_{h} is not a probability distribution",
             line=_row_line(text, "psi", 3, s * A + a))
    try:
        return LinearMixtureMDP(psi=psi, theta=theta, R=R, s1=s1)
    except (InvalidModelError, ConfigurationError) as exc:
        key = "theta" if "theta" in str(exc) else "psi"
        fail(str(exc), key)


def load(path) -> MDP:
    path = str(path)
    return loads(Path(path).read_text(), path)
