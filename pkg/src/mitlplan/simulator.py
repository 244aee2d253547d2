"""Policy rollouts through the product and empirical success estimation.

Rollouts sample successors from the product kernel with a splitmix64
stream, so a (model, policy, seed, max_steps) quadruple always reproduces
the same trajectory byte for byte.  Batch estimation derives stream i from
(seed, i) the same way in both kernel backends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import (
    resolve_backend,
    rollout_batch,
    splitmix_init,
    splitmix_next,
)
from .product_mdp import ProductMdp, describe_spec_state


@dataclass
class Trajectory:
    outcome: str                      # "accept" | "sink" | "step-limit"
    state_indices: list[int]
    actions: list[str]
    lines: list[str] = field(default_factory=list)

    def render(self) -> str:
        return "\n".join(self.lines) + "\n"

    @property
    def steps(self) -> int:
        return len(self.actions)


def _state_line(m: ProductMdp, z: int) -> str:
    ps = m.states[z]
    return f"({ps.game.brief()}, {describe_spec_state(ps.spec)})"


def _absorption_class(m: ProductMdp, z: int) -> str | None:
    if m.accepting[z]:
        return "accept"
    if m.sink[z]:
        return "sink"
    return None


def default_max_steps(m: ProductMdp) -> int:
    """Step budget after which the bus-style missions are fully classified:
    every event clock is capped, and windows expire within their bounds."""
    points = getattr(m.sta, "points", {})
    max_t = max(points.values(), default=0)
    trunc = getattr(m.sta, "trunc", None)
    max_win = 0
    if trunc is not None:
        max_win = max((T for name, T in trunc.points
                       if name not in points), default=0)
    return max_t + max_win + 8


def rollout(m: ProductMdp, policy, seed: int, max_steps: int | None = None
            ) -> Trajectory:
    """Sample one trajectory following `policy` from the initial state."""
    if max_steps is None:
        max_steps = default_max_steps(m)
    state = splitmix_init(seed)
    z = m.z0
    indices = [z]
    actions: list[str] = []
    lines = [_state_line(m, z)]
    outcome = "step-limit"
    for t in range(max_steps + 1):
        cls = _absorption_class(m, z)
        if cls is not None:
            outcome = cls
            break
        if t == max_steps:
            break
        a_name = policy.action_name(z)
        if a_name not in m.actions:
            raise ValueError(f"policy action {a_name!r} undefined at state {z}")
        a = m.action_index(a_name)
        u, state = splitmix_next(state)
        cols, probs = m.row(z, a)
        acc = 0.0
        nxt = int(cols[-1])
        for c, p in zip(cols.tolist(), probs.tolist()):
            acc += p
            if u < acc:
                nxt = c
                break
        occurred = m.states[nxt].game.occurred
        lines.append(f"--{a_name}--> ({_state_line(m, z)}, {a_name})")
        lines.append(f"--e={{{','.join(sorted(occurred))}}}--> "
                     f"{_state_line(m, nxt)}")
        actions.append(a_name)
        indices.append(nxt)
        z = nxt
    lines.append(f"terminal: {outcome}")
    return Trajectory(outcome, indices, actions, lines)


@dataclass
class SuccessEstimate:
    rate: float
    ci_low: float
    ci_high: float
    successes: int
    samples: int
    outcomes: dict = field(default_factory=dict)


def estimate_success(m: ProductMdp, policy, n: int, seed: int,
                     max_steps: int | None = None,
                     backend: str | None = None) -> SuccessEstimate:
    """Fraction of n independent rollouts ending in acceptance, with a
    normal-approximation 95% confidence interval."""
    if n < 1:
        raise ValueError("need at least one rollout")
    if max_steps is None:
        max_steps = default_max_steps(m)
    backend = resolve_backend(backend)
    policy_row = m.n_actions * np.arange(m.n_states) + policy.action_index
    outcomes = rollout_batch(backend, m.row_ptr, m.cols, m.probs,
                             policy_row, m.accepting, m.sink,
                             m.z0, n, seed, max_steps)
    successes = int((outcomes == 1).sum())
    rate = successes / n
    half = 1.959963984540054 * math.sqrt(max(rate * (1 - rate), 0.0) / n)
    tally = {
        "accept": successes,
        "sink": int((outcomes == 2).sum()),
        "step-limit": int((outcomes == 0).sum()),
    }
    return SuccessEstimate(rate, max(rate - half, 0.0),
                           min(rate + half, 1.0), successes, n, tally)
