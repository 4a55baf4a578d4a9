"""Solution proposers: scripted mock, seeded stochastic heuristic, remote client.

All proposers implement ``propose(request) -> response`` where the request
carries a rendered prompt, a sampling temperature, a seed and the round
index. The mock replays fixture texts (for deterministic pipeline tests),
the stochastic proposer builds solutions whose diversity genuinely scales
with temperature, and the remote client speaks the chat-completions JSON
shape to any configured endpoint.
"""

from __future__ import annotations

import json
import math
import os
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import requests

from .core import Assignment, DispatchError, DispatchInstance, manhattan
from .prompt import PromptBundle, render_solution_lines


class ProposerError(DispatchError):
    """Base class for proposer failures."""


class FixtureExhaustedError(ProposerError):
    pass


class RemoteTransportError(ProposerError):
    pass


class RemoteStatusError(ProposerError):
    def __init__(self, status: int, body: str):
        super().__init__(f"endpoint returned status {status}")
        self.status = status
        self.body = body


class RemoteDecodeError(ProposerError):
    pass


@dataclass(frozen=True)
class ProposerRequest:
    prompt: PromptBundle
    temperature: float
    seed: Optional[int] = None
    round_index: int = 0

    def __post_init__(self) -> None:
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError(f"temperature must be finite and >= 0, got {self.temperature}")


@dataclass(frozen=True)
class ProposerResponse:
    text: str
    latency: float
    provider: str
    retry_count: int = 0


class MockProposer:
    """Replays fixture texts in round order; raises once they run out."""

    provider = "mock"

    def __init__(self, fixtures: Sequence[str]):
        self._fixtures = list(fixtures)

    @classmethod
    def from_directory(cls, path: Path) -> "MockProposer":
        files = sorted(Path(path).glob("*.txt"))
        if not files:
            raise FixtureExhaustedError(f"no .txt fixtures in {path}")
        return cls([f.read_text(encoding="utf-8") for f in files])

    def propose(self, req: ProposerRequest) -> ProposerResponse:
        if req.round_index >= len(self._fixtures):
            raise FixtureExhaustedError(
                f"no fixture for round {req.round_index} (have {len(self._fixtures)})")
        return ProposerResponse(text=self._fixtures[req.round_index],
                                latency=0.0, provider=self.provider)


def _instance_distance_scale(inst: DispatchInstance) -> float:
    """Mean Manhattan distance over all point pairs; makes temperature dimensionless."""
    points = list(inst.empty_vehicles) + list(inst.one_order_vehicles) + list(inst.users)
    if len(points) < 2:
        return 1.0
    total = 0.0
    pairs = 0
    for a_idx in range(len(points)):
        for b_idx in range(a_idx + 1, len(points)):
            total += manhattan(points[a_idx], points[b_idx])
            pairs += 1
    mean = total / pairs
    return mean if mean > 0 else 1.0


# option tuple: (marginal_cost, order_key, apply_fn)
def _user_options(inst: DispatchInstance, u: int,
                  x_assigned: dict[int, int], y_assigned: dict[int, tuple[int, int]],
                  z_assigned: dict[int, int]):
    opts = []
    order = 0
    for i in range(inst.m):
        if i in x_assigned or i in y_assigned:
            continue
        cost = manhattan(inst.empty_vehicles[i], inst.users[u])
        opts.append((cost, order, ("x", i)))
        order += 1
    for i, j in sorted(x_assigned.items()):
        cost = manhattan(inst.users[j], inst.users[u])  # append u as second rider
        opts.append((cost, order, ("y", i)))
        order += 1
    for i in range(inst.n):
        if i in z_assigned:
            continue
        cost = manhattan(inst.one_order_vehicles[i], inst.users[u])
        opts.append((cost, order, ("z", i)))
        order += 1
    return opts


def _construct_once(inst: DispatchInstance, temperature: float,
                    rng: random.Random, scale: float) -> tuple[Assignment, bool]:
    users = list(range(inst.p))
    if temperature > 0:
        # processing-order noise also cools with temperature, so cold rounds
        # converge to the index-order greedy construction
        users.sort(key=lambda u: u + rng.gauss(0.0, temperature * inst.p))
    x_assigned: dict[int, int] = {}
    y_assigned: dict[int, tuple[int, int]] = {}
    z_assigned: dict[int, int] = {}
    feasible = True
    for u in users:
        opts = _user_options(inst, u, x_assigned, y_assigned, z_assigned)
        if not opts:
            feasible = False
            continue
        if temperature == 0:
            cost, _, action = min(opts, key=lambda o: (o[0], o[1]))
        else:
            c_min = min(o[0] for o in opts)
            weights = [math.exp(-(o[0] - c_min) / (temperature * scale)) for o in opts]
            action = rng.choices([o[2] for o in opts], weights=weights, k=1)[0]
        kind, i = action
        if kind == "x":
            x_assigned[i] = u
        elif kind == "y":
            j = x_assigned.pop(i)
            y_assigned[i] = (j, u)
        else:
            z_assigned[i] = u
    sol = Assignment(
        x_pairs=frozenset((i, j) for i, j in x_assigned.items()),
        y_triples=frozenset((i, jk[0], jk[1]) for i, jk in y_assigned.items()),
        z_pairs=frozenset((i, j) for i, j in z_assigned.items()),
    )
    return sol, feasible


def stochastic_construct(inst: DispatchInstance, temperature: float, seed: int,
                         exemplars: Sequence[Assignment] = (),
                         max_tabu_retries: int = 10) -> tuple[Assignment, bool]:
    """Build one solution user-by-user, sampling options by Boltzmann weight.

    ``temperature`` 0 is the greedy argmin (identical for every seed); higher
    values flatten the option distribution. Solutions equal to an exemplar are
    resampled up to ``max_tabu_retries`` times, then accepted anyway.
    """
    if temperature < 0:
        raise ValueError("temperature must be >= 0")
    rng = random.Random(seed)
    scale = _instance_distance_scale(inst)
    tabu = set(exemplars)
    sol, feasible = _construct_once(inst, temperature, rng, scale)
    retries = 0
    while temperature > 0 and sol in tabu and retries < max_tabu_retries:
        sol, feasible = _construct_once(inst, temperature, rng, scale)
        retries += 1
    return sol, feasible


class StochasticProposer:
    """Reference proposer: renders a stochastic construction as answer text."""

    provider = "stochastic"

    def propose(self, req: ProposerRequest) -> ProposerResponse:
        t0 = time.perf_counter()
        inst = req.prompt.instance
        exemplars = [sol for sol, _, _ in req.prompt.exemplars_included]
        seed = req.seed if req.seed is not None else 0
        sol, feasible = stochastic_construct(inst, req.temperature, seed, exemplars)
        x_line, y_line, z_line = render_solution_lines(sol)
        note = "" if feasible else "note: could not cover every user\n"
        text = f"{note}{x_line}\n{y_line}\n{z_line}\n"
        return ProposerResponse(text=text, latency=time.perf_counter() - t0,
                                provider=self.provider)


ENV_ENDPOINT = "POOLDISPATCH_ENDPOINT"
ENV_MODEL = "POOLDISPATCH_MODEL"
ENV_API_KEY = "POOLDISPATCH_API_KEY"

# transport: (url, payload, headers, timeout) -> (status_code, body_text)
Transport = Callable[[str, dict, dict, float], tuple[int, str]]


def _requests_transport(url: str, payload: dict, headers: dict,
                        timeout: float) -> tuple[int, str]:
    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise RemoteTransportError(str(exc)) from exc
    return resp.status_code, resp.text


@dataclass
class RemoteProposer:
    """Chat-completions client; retries transient failures with backoff."""

    endpoint: str
    model: str
    api_key: Optional[str] = None
    max_retries: int = 3
    backoff_seconds: float = 0.5
    timeout: float = 30.0
    transport: Transport = field(default=_requests_transport)
    sleep: Callable[[float], None] = field(default=time.sleep)
    redact_logged_content: bool = True

    provider = "remote"

    @classmethod
    def from_env(cls, **overrides) -> "RemoteProposer":
        endpoint = os.environ.get(ENV_ENDPOINT)
        model = os.environ.get(ENV_MODEL)
        if not endpoint or not model:
            raise ProposerError(
                f"remote proposer needs {ENV_ENDPOINT} and {ENV_MODEL} set")
        return cls(endpoint=endpoint, model=model,
                   api_key=os.environ.get(ENV_API_KEY), **overrides)

    def propose(self, req: ProposerRequest) -> ProposerResponse:
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": req.prompt.full_text}],
            "temperature": req.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        t0 = time.perf_counter()
        retries = 0
        while True:
            try:
                status, body = self.transport(self.endpoint, payload, headers, self.timeout)
            except RemoteTransportError:
                if retries >= self.max_retries:
                    raise
                self.sleep(self.backoff_seconds * 2 ** retries)
                retries += 1
                continue
            if status == 429 or 500 <= status < 600:
                if retries >= self.max_retries:
                    raise RemoteStatusError(status, body)
                self.sleep(self.backoff_seconds * 2 ** retries)
                retries += 1
                continue
            if status != 200:
                raise RemoteStatusError(status, body)
            text = self._extract_text(body)
            return ProposerResponse(text=text, latency=time.perf_counter() - t0,
                                    provider=self.provider, retry_count=retries)

    @staticmethod
    def _extract_text(body: str) -> str:
        try:
            doc = json.loads(body)
        except json.JSONDecodeError as exc:
            raise RemoteDecodeError(f"response body is not JSON: {exc}") from exc
        try:
            choice = doc["choices"][0]
        except (KeyError, IndexError, TypeError):
            raise RemoteDecodeError("response JSON missing field 'choices[0]'") from None
        text = None
        if isinstance(choice, dict):
            message = choice.get("message")
            if isinstance(message, dict):
                text = message.get("content")
            if text is None:
                text = choice.get("text")
        if not text:
            raise RemoteDecodeError(
                "response JSON missing field 'choices[0].message.content'")
        return text
