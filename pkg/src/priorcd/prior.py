"""Language-model prior knowledge: prompting, answer parsing and prior matrices.

Each unordered variable pair is asked once with a four-way multiple-choice
prompt. Verdicts fold into a binary prior ``K``; repeated runs average into
``K_mean`` and a per-edge certainty ``C = eps / (std + eps)``.
"""
from __future__ import annotations

import json
import logging
import os
import re
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .graph import _check_names, _frozen
from .synthetic import make_rng

log = logging.getLogger(__name__)

__all__ = [
    "ANSWERS",
    "PromptResponseError",
    "MissingTags",
    "InvalidLetter",
    "PairVerdict",
    "PriorMatrix",
    "MeanPrior",
    "CertaintyMatrix",
    "render_prompt",
    "parse_response",
    "assemble_prior",
    "aggregate_mean",
    "certainty",
    "random_prior",
    "RecordedResponseSource",
    "HttpPromptSource",
    "load_prior",
    "acquire_prior",
]

ANSWERS = ("A", "B", "C", "D")

PROMPT_TEMPLATE = (
    "Which of the following causal relationship is correct?\n"
    "\n"
    "A. Changing {a} can directly change {b}.\n"
    "B. Changing {b} can directly change {a}.\n"
    "C. Both A and B are true.\n"
    "D. None of the above. No direct relationship exists.\n"
    "\n"
    "Let's think step-by-step to make sure that we have the right answer.\n"
    "Then provide your final answer within the tags, <Answer>A/B/C/D</Answer>"
)

_TAG_PAIR = re.compile(r"<Answer>(.*?)</Answer>", re.DOTALL | re.IGNORECASE)


class PromptResponseError(ValueError):
    """A model response that does not carry a usable verdict."""


class MissingTags(PromptResponseError):
    pass


class InvalidLetter(PromptResponseError):
    pass


@dataclass(frozen=True)
class PairVerdict:
    var_a: str
    var_b: str
    answer: str

    def __post_init__(self):
        if self.var_a == self.var_b:
            raise ValueError(f"a verdict needs two distinct variables, got {self.var_a!r} twice")
        if self.answer not in ANSWERS:
            raise ValueError(f"answer must be one of {ANSWERS}, got {self.answer!r}")


def _check_square01(k):
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError(f"prior must be square, got shape {k.shape}")
    if np.any(k < 0) or np.any(k > 1) or not np.all(np.isfinite(k)):
        raise ValueError("prior entries must lie in [0, 1]")
    if np.any(np.diag(k)):
        raise ValueError("prior diagonal must be zero")
    return k


@dataclass(frozen=True, eq=False)
class PriorMatrix:
    """Binary prior ``k``; 2-cycles and longer cycles are representable."""

    names: tuple[str, ...]
    k: np.ndarray = field(repr=False)

    def __post_init__(self):
        k = _check_square01(self.k)
        if not np.isin(k, (0, 1)).all():
            raise ValueError("prior entries must be 0 or 1")
        object.__setattr__(self, "names", _check_names(self.names, k.shape[0]))
        object.__setattr__(self, "k", _frozen(k.astype(np.int8)))

    @property
    def n_edges(self) -> int:
        return int(self.k.sum())

    @property
    def values(self) -> np.ndarray:
        return self.k.astype(float)

    def __eq__(self, other):
        if not isinstance(other, PriorMatrix):
            return NotImplemented
        return self.names == other.names and np.array_equal(self.k, other.k)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "adj": self.k.astype(int).tolist()}


@dataclass(frozen=True, eq=False)
class MeanPrior:
    names: tuple[str, ...]
    k_mean: np.ndarray = field(repr=False)
    run_count: int = 1

    def __post_init__(self):
        k = _check_square01(self.k_mean)
        if int(self.run_count) < 1:
            raise ValueError("run_count must be at least 1")
        object.__setattr__(self, "names", _check_names(self.names, k.shape[0]))
        object.__setattr__(self, "k_mean", _frozen(k))
        object.__setattr__(self, "run_count", int(self.run_count))

    @property
    def values(self) -> np.ndarray:
        return np.array(self.k_mean)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "adj": self.k_mean.tolist(),
                "run_count": self.run_count}


@dataclass(frozen=True, eq=False)
class CertaintyMatrix:
    names: tuple[str, ...]
    c: np.ndarray = field(repr=False)
    epsilon: float = 1.0

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"certainty must be square, got shape {c.shape}")
        if np.any(c <= 0) or np.any(c > 1):
            raise ValueError("certainty entries must lie in (0, 1]")
        object.__setattr__(self, "names", _check_names(self.names, c.shape[0]))
        object.__setattr__(self, "c", _frozen(c))

    def to_dict(self) -> dict:
        return {"names": list(self.names), "c": self.c.tolist(), "epsilon": self.epsilon}


def render_prompt(var_a: str, var_b: str) -> str:
    if not var_a or not var_b:
        raise ValueError("variable names must be nonempty")
    if var_a == var_b:
        raise ValueError(f"cannot ask about a variable and itself ({var_a!r})")
    return PROMPT_TEMPLATE.format(a=var_a, b=var_b)


def parse_response(text: str) -> str:
    """Letter inside the last complete ``<Answer>...</Answer>`` pair."""
    matches = _TAG_PAIR.findall(text)
    if not matches:
        raise MissingTags("response has no complete <Answer>...</Answer> pair")
    letter = matches[-1].strip().upper()
    if letter not in ANSWERS:
        raise InvalidLetter(f"answer {matches[-1].strip()!r} is not one of A/B/C/D")
    return letter


def assemble_prior(verdicts: Iterable[PairVerdict], names: Sequence[str]) -> PriorMatrix:
    names = tuple(names)
    index = {n: i for i, n in enumerate(names)}
    k = np.zeros((len(names), len(names)), dtype=np.int8)
    seen = set()
    for v in verdicts:
        for n in (v.var_a, v.var_b):
            if n not in index:
                raise KeyError(f"unknown variable {n!r}")
        pair = frozenset((v.var_a, v.var_b))
        if pair in seen:
            raise ValueError(f"pair {sorted(pair)} has more than one verdict")
        seen.add(pair)
        a, b = index[v.var_a], index[v.var_b]
        if v.answer in ("A", "C"):
            k[a, b] = 1
        if v.answer in ("B", "C"):
            k[b, a] = 1
    return PriorMatrix(names, k)


def _stack(priors):
    priors = list(priors)
    if not priors:
        raise ValueError("need at least one prior")
    names = priors[0].names
    for p in priors[1:]:
        if p.names != names:
            raise ValueError(f"prior names differ: {p.names} vs {names}")
    return names, np.stack([p.k.astype(float) for p in priors])


def aggregate_mean(priors: Sequence[PriorMatrix]) -> MeanPrior:
    names, stack = _stack(priors)
    return MeanPrior(names, stack.mean(axis=0), len(stack))


def certainty(priors: Sequence[PriorMatrix], epsilon: float) -> CertaintyMatrix:
    """Per-edge ``eps / (sqrt(Var) + eps)`` with the population variance."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    names, stack = _stack(priors)
    c = epsilon / (np.sqrt(stack.var(axis=0)) + epsilon)
    return CertaintyMatrix(names, c, float(epsilon))


def random_prior(d: int, edge_count: int, names: Sequence[str] | None, seed: int) -> PriorMatrix:
    """``edge_count`` off-diagonal cells drawn uniformly without replacement."""
    cells = [(i, j) for i in range(d) for j in range(d) if i != j]
    if not 0 <= edge_count <= len(cells):
        raise ValueError(f"edge_count must be in [0, {len(cells)}], got {edge_count}")
    chosen = make_rng(seed).choice(len(cells), size=edge_count, replace=False)
    k = np.zeros((d, d), dtype=np.int8)
    for c in chosen:
        k[cells[c]] = 1
    names = tuple(names) if names is not None else tuple(f"X{i}" for i in range(d))
    return PriorMatrix(names, k)


def load_prior(path) -> PriorMatrix | MeanPrior:
    """Read prior JSON; a ``run_count`` key marks an averaged prior."""
    obj = json.loads(Path(path).read_text())
    if "run_count" in obj:
        return MeanPrior(tuple(obj["names"]), np.asarray(obj["adj"], dtype=float), obj["run_count"])
    return PriorMatrix(tuple(obj["names"]), np.asarray(obj["adj"]))


# -- prior sources --------------------------------------------------------------
#
# A source maps a (pair index, rendered prompt) to response text. Sources are
# queried once per unordered pair (i < j); verdicts are folded in pair order,
# so the assembled prior never depends on the order responses arrive in.


class RecordedResponseSource:
    """Directory holding one ``<i>_<j>.txt`` response per pair, ``i < j``."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def __call__(self, i: int, j: int, prompt: str) -> str:
        path = self.directory / f"{i}_{j}.txt"
        if not path.exists():
            raise FileNotFoundError(f"no recorded response for pair ({i}, {j}): {path}")
        return path.read_text(encoding="utf-8")

    @staticmethod
    def write(directory, responses: dict[tuple[int, int], str]) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for (i, j), text in responses.items():
            if not i < j:
                raise ValueError(f"pair indices must satisfy i < j, got ({i}, {j})")
            (directory / f"{i}_{j}.txt").write_text(text, encoding="utf-8")


class HttpPromptSource:
    """POSTs ``{"prompt": ...}`` and reads ``{"text": ...}`` back.

    ``auth_env`` names an environment variable whose value, when set, is sent
    as the ``Authorization`` header.
    """

    def __init__(self, url: str, timeout: float = 60.0, retries: int = 2,
                 auth_env: str | None = "PRIORCD_HTTP_AUTH"):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.auth_env = auth_env

    def __call__(self, i: int, j: int, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.auth_env) if self.auth_env else None
        if token:
            headers["Authorization"] = token
        body = json.dumps({"prompt": prompt}).encode()
        last = None
        for _ in range(self.retries + 1):
            req = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return json.loads(resp.read().decode("utf-8"))["text"]
            except (urllib.error.URLError, TimeoutError, KeyError, json.JSONDecodeError) as exc:
                last = exc
                log.warning("prompt request for pair (%d, %d) failed: %s", i, j, exc)
        raise ConnectionError(f"prompt source {self.url} failed for pair ({i}, {j})") from last


def acquire_prior(source, names: Sequence[str], labels: dict[str, str] | None = None,
                  on_invalid: str = "treat-as-d", max_attempts: int = 3,
                  workers: int = 1) -> PriorMatrix:
    """Query ``source`` for every unordered pair and assemble the prior.

    ``labels`` maps column names to the descriptive names used in prompts.
    ``on_invalid`` is ``"treat-as-d"`` (log a warning, record D), ``"retry"``
    (ask again up to ``max_attempts`` times, then fall back to D) or
    ``"raise"``.
    """
    if on_invalid not in ("treat-as-d", "retry", "raise"):
        raise ValueError(f"unknown invalid-response policy {on_invalid!r}")
    names = tuple(names)
    labels = labels or {}
    pairs = list(combinations(range(len(names)), 2))

    def ask(pair):
        i, j = pair
        prompt = render_prompt(labels.get(names[i], names[i]), labels.get(names[j], names[j]))
        attempts = max_attempts if on_invalid == "retry" else 1
        for attempt in range(attempts):
            try:
                return parse_response(source(i, j, prompt))
            except PromptResponseError as exc:
                if on_invalid == "raise":
                    raise
                log.warning("unusable response for (%s, %s), attempt %d: %s",
                            names[i], names[j], attempt + 1, exc)
        log.warning("treating (%s, %s) as answer D", names[i], names[j])
        return "D"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            answers = list(pool.map(ask, pairs))
    else:
        answers = [ask(p) for p in pairs]
    verdicts = [PairVerdict(names[i], names[j], a) for (i, j), a in zip(pairs, answers)]
    return assemble_prior(verdicts, names)
