"""Hot numeric kernels: Bellman sweeps and batch rollouts.

Each kernel ships in two versions, a numba ``@njit`` build and a pure
numpy build.  The backend is picked by the ``MITLPLAN_KERNELS`` env var
("numba" or "numpy"); default is numba when importable, numpy otherwise.
Both rollout kernels draw from the same splitmix64 streams, so results are
identical across backends for a fixed seed.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_INV53 = 1.0 / float(1 << 53)


def default_backend() -> str:
    env = os.environ.get("MITLPLAN_KERNELS", "").strip().lower()
    if env == "numpy":
        return "numpy"
    if env == "numba":
        if not HAVE_NUMBA:
            warnings.warn("MITLPLAN_KERNELS=numba but numba is unavailable; "
                          "falling back to numpy")
            return "numpy"
        return "numba"
    return "numba" if HAVE_NUMBA else "numpy"


def resolve_backend(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise ValueError("numba backend requested but numba is unavailable")
    return backend


# ---------------------------------------------------------------------------
# splitmix64 (single-stream helpers usable from plain python)
# ---------------------------------------------------------------------------

def splitmix_init(seed: int, index: int = 0) -> int:
    return (int(seed) + (index + 1) * int(_GOLDEN)) & 0xFFFFFFFFFFFFFFFF


def splitmix_next(state: int) -> tuple[float, int]:
    """Next uniform in [0,1) and the advanced state."""
    state = (state + int(_GOLDEN)) & 0xFFFFFFFFFFFFFFFF
    z = state
    z = ((z ^ (z >> 30)) * int(_MIX1)) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * int(_MIX2)) & 0xFFFFFFFFFFFFFFFF
    z = z ^ (z >> 31)
    return (z >> 11) * _INV53, state


# ---------------------------------------------------------------------------
# Bellman sweep
# ---------------------------------------------------------------------------

def bellman_sweep_numpy(row_ptr, cols, probs, reward_row, absorbing, values,
                        n_actions):
    """One synchronous sweep; returns (new values, max-norm residual)."""
    contrib = probs * values[cols]
    q = reward_row + np.add.reduceat(contrib, row_ptr[:-1])
    new_values = q.reshape(-1, n_actions).max(axis=1)
    new_values[absorbing] = 0.0
    residual = float(np.abs(new_values - values).max())
    return new_values, residual


@njit(cache=True)
def _bellman_sweep_jit(row_ptr, cols, probs, reward_row, absorbing, values,
                       new_values, n_actions):
    n = values.shape[0]
    residual = 0.0
    for z in range(n):
        if absorbing[z]:
            new_values[z] = 0.0
            continue
        best = -1.0
        for a in range(n_actions):
            r = z * n_actions + a
            q = reward_row[r]
            for k in range(row_ptr[r], row_ptr[r + 1]):
                q += probs[k] * values[cols[k]]
            if q > best:
                best = q
        new_values[z] = best
        diff = abs(best - values[z])
        if diff > residual:
            residual = diff
    return residual


def bellman_sweep_numba(row_ptr, cols, probs, reward_row, absorbing, values,
                        n_actions):
    new_values = np.empty_like(values)
    residual = _bellman_sweep_jit(row_ptr, cols, probs, reward_row, absorbing,
                                  values, new_values, n_actions)
    return new_values, float(residual)


def bellman_sweep(backend, *args):
    if backend == "numba":
        return bellman_sweep_numba(*args)
    return bellman_sweep_numpy(*args)


# ---------------------------------------------------------------------------
# Batch rollouts
# ---------------------------------------------------------------------------
# Outcome codes: 0 step-limit, 1 accept, 2 sink.

@njit(cache=True)
def _rollout_batch_jit(row_ptr, cols, probs, policy_row, accepting, sink,
                       z0, n_rollouts, seed, max_steps):
    golden = np.uint64(0x9E3779B97F4A7C15)
    mix1 = np.uint64(0xBF58476D1CE4E5B9)
    mix2 = np.uint64(0x94D049BB133111EB)
    outcomes = np.zeros(n_rollouts, dtype=np.int8)
    for i in range(n_rollouts):
        state = np.uint64(seed) + np.uint64(i + 1) * golden
        z = z0
        for t in range(max_steps + 1):
            if accepting[z]:
                outcomes[i] = 1
                break
            if sink[z]:
                outcomes[i] = 2
                break
            if t == max_steps:
                break
            state = state + golden
            u64 = state
            u64 = (u64 ^ (u64 >> np.uint64(30))) * mix1
            u64 = (u64 ^ (u64 >> np.uint64(27))) * mix2
            u64 = u64 ^ (u64 >> np.uint64(31))
            u = (u64 >> np.uint64(11)) * (1.0 / 9007199254740992.0)
            r = policy_row[z]
            lo = row_ptr[r]
            hi = row_ptr[r + 1]
            nxt = cols[hi - 1]
            acc = 0.0
            for k in range(lo, hi):
                acc += probs[k]
                if u < acc:
                    nxt = cols[k]
                    break
            z = nxt
    return outcomes


def rollout_batch_numba(row_ptr, cols, probs, policy_row, accepting, sink,
                        z0, n_rollouts, seed, max_steps):
    return _rollout_batch_jit(row_ptr, cols, probs, policy_row, accepting,
                              sink, z0, n_rollouts, seed, max_steps)


def rollout_batch_numpy(row_ptr, cols, probs, policy_row, accepting, sink,
                        z0, n_rollouts, seed, max_steps):
    """Lockstep vectorized rollouts; decision-identical to the jit kernel."""
    n_rows = len(row_ptr) - 1
    lengths = np.diff(row_ptr)
    max_len = int(lengths.max())
    # per-row cumulative probabilities, padded wide so a comparison count
    # yields the sampled offset
    cum_global = np.cumsum(probs)
    base = np.concatenate(([0.0], cum_global))[row_ptr[:-1]]
    edge_row = np.repeat(np.arange(n_rows), lengths)
    edge_pos = np.arange(len(probs)) - row_ptr[edge_row]
    cum2d = np.full((n_rows, max_len), 2.0)
    cum2d[edge_row, edge_pos] = cum_global - base[edge_row]

    states = np.full(n_rollouts, z0, dtype=np.int64)
    outcomes = np.zeros(n_rollouts, dtype=np.int8)
    rng_state = (np.uint64(seed)
                 + (np.arange(1, n_rollouts + 1, dtype=np.uint64)) * _GOLDEN)
    active = np.ones(n_rollouts, dtype=bool)
    for t in range(max_steps + 1):
        acc_now = active & accepting[states]
        outcomes[acc_now] = 1
        sink_now = active & sink[states]
        outcomes[sink_now] = 2
        active &= ~(acc_now | sink_now)
        if t == max_steps or not active.any():
            break
        rng_state = rng_state + _GOLDEN
        z = rng_state.copy()
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        z = z ^ (z >> np.uint64(31))
        u = (z >> np.uint64(11)).astype(np.float64) * _INV53
        rows = policy_row[states[active]]
        offsets = (cum2d[rows] <= u[active, None]).sum(axis=1)
        offsets = np.minimum(offsets, lengths[rows] - 1)
        states[active] = cols[row_ptr[rows] + offsets]
    return outcomes


def rollout_batch(backend, *args):
    if backend == "numba":
        return rollout_batch_numba(*args)
    return rollout_batch_numpy(*args)
