"""Stochastic timed automata: automaton states augmented with pending-event
sets and event clocks, probabilistic outcomes, and clock truncation.

A state tracks which external events are still pending and, for each, an
event clock counting the steps elapsed since the start.  Each unit step the
environment resolves an outcome e (a subset of the pending events); its
probability is the product of per-event hazards::

    P(e) = prod_{a in e} h_a(t_a + 1) * prod_{b in pending \\ e} (1 - h_b(t_b + 1))

where h is the conditional first-occurrence probability.  Occurred events
have their clocks reset to zero and stopped.  Event random variables are
assumed mutually independent, which is exactly what the product form says.

Truncation caps every pending event clock at its truncation point: a step
that would push a pending clock past the cap redirects the whole step (all
outcomes) to an absorbing, non-accepting sink.  That convention makes the
total sink mass of a single-event model equal the distribution tail at the
cap, which is the bound the truncation argument promises.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .formula import DistributionSpec, EventSet, FiniteTable, Geometric
from .timed_automata import (
    ClockVector,
    Dta,
    ExplicitDta,
    ProgressionDta,
    TimedWord,
    constraint_constants,
)


class StaError(ValueError):
    pass


@dataclass(frozen=True)
class StaState:
    """Automaton configuration plus event clocks and the pending set."""

    config: object
    clocks: tuple[int, ...]
    pending: frozenset[str]
    sink: bool = False

    def clock_vector(self, names) -> ClockVector:
        stopped = tuple(n not in self.pending for n in names)
        return ClockVector(tuple(names), self.clocks, stopped)


SINK = StaState(config=None, clocks=(), pending=frozenset(), sink=True)


def _subsets(names) -> list[frozenset[str]]:
    """Deterministic enumeration of all subsets (by size, then name)."""
    names = sorted(names)
    out = []
    for mask in range(1 << len(names)):
        out.append(frozenset(n for i, n in enumerate(names) if mask >> i & 1))
    out.sort(key=lambda s: (len(s), tuple(sorted(s))))
    return out


class StaModel:
    """Deterministic timed automaton plus external-event distributions."""

    def __init__(self, dta: Dta, events: EventSet):
        self.dta = dta
        self.events = events
        self.event_names = tuple(events.names)
        self._dist = {name: d for name, d in events}

    def dist(self, name) -> DistributionSpec:
        return self._dist[name]

    def initial(self, symbol) -> tuple[StaState, float]:
        """Zero-time move consuming the initial symbol.

        No clock advances, so no event can occur yet; a symbol claiming an
        event at time zero gets probability 0.
        """
        symbol = frozenset(symbol)
        config = self.dta.step_config(self.dta.initial_config(), symbol, 0)
        state = StaState(config, (0,) * len(self.event_names),
                         frozenset(self.event_names))
        p = 0.0 if symbol & set(self.event_names) else 1.0
        return state, p

    def hazards(self, q: StaState) -> dict[str, float]:
        """Per-pending-event occurrence probability for the next step."""
        out = {}
        for i, name in enumerate(self.event_names):
            if name in q.pending:
                out[name] = self._dist[name].hazard(q.clocks[i] + 1)
        return out

    def env_outcome_dist(self, q: StaState) -> dict[frozenset[str], float]:
        """Distribution over event outcomes e for the next unit step."""
        if q.sink:
            raise StaError("no outcomes from the sink state")
        haz = self.hazards(q)
        dist = {}
        for e in _subsets(q.pending):
            p = 1.0
            for name in q.pending:
                p *= haz[name] if name in e else 1.0 - haz[name]
            dist[e] = p
        return dist

    def _advanced_clocks(self, q: StaState) -> tuple[int, ...]:
        return tuple(
            c + 1 if name in q.pending else c
            for name, c in zip(self.event_names, q.clocks))

    def step(self, q: StaState, symbol) -> tuple[StaState, float]:
        """One unit step consuming `symbol`; returns successor and its
        probability (the outcome probability of symbol's event part)."""
        if q.sink:
            return q, 1.0
        symbol = frozenset(symbol)
        e = symbol & set(self.event_names)
        if not e <= q.pending:
            raise StaError(
                f"events {sorted(e - q.pending)} already occurred")
        haz = self.hazards(q)
        p = 1.0
        for name in q.pending:
            p *= haz[name] if name in e else 1.0 - haz[name]
        clocks = self._advanced_clocks(q)
        clocks = tuple(0 if name in e else c
                       for name, c in zip(self.event_names, clocks))
        config = self.dta.step_config(q.config, symbol, 1)
        return StaState(config, clocks, q.pending - e), p

    def is_accepting(self, q: StaState) -> bool:
        return not q.sink and self.dta.is_accepting(q.config)

    def is_rejecting(self, q: StaState) -> bool:
        return not q.sink and self.dta.is_rejecting(q.config)

    def is_absorbing(self, q: StaState) -> bool:
        return q.sink or self.is_accepting(q) or self.is_rejecting(q)

    # -- monitoring ---------------------------------------------------------

    def run_word(self, word: TimedWord):
        """Run a finite word; returns (verdict, likelihood, states).

        verdict: 'accept' once an accepting location is visited, 'reject'
        when the residual can no longer be satisfied given the events that
        already fired, else 'inconclusive-prefix'.  The likelihood is the
        product of the step probabilities of the observed event pattern.
        """
        symbols = list(word)
        if not symbols:
            q, _ = self.initial(frozenset())
            verdict = "accept" if self.dta.is_accepting(self.dta.initial_config()) \
                else "inconclusive-prefix"
            return verdict, 1.0, [q]
        q, p = self.initial(symbols[0])
        likelihood = p
        states = [q]
        accepted = self.is_accepting(q)
        for symbol in symbols[1:]:
            q, p = self.step(q, symbol)
            likelihood *= p
            states.append(q)
            accepted = accepted or self.is_accepting(q)
        if accepted:
            return "accept", likelihood, states
        if self.is_rejecting(q) or not self._acceptance_reachable(q):
            return "reject", likelihood, states
        return "inconclusive-prefix", likelihood, states

    def _acceptance_reachable(self, q: StaState) -> bool:
        """Can any future (events firing at most once) reach acceptance?"""
        base_atoms = [a for a in self.dta.atoms if a not in self.event_names]
        cap = None
        if isinstance(self.dta, ExplicitDta):
            consts = [0]
            for e in self.dta.edge_list:
                consts.extend(constraint_constants(e.guard))
            cap = max(consts) + 1
        seen = set()
        stack = [(self._clamp(q.config, cap), frozenset(q.pending))]
        while stack:
            config, pending = stack.pop()
            if (config, pending) in seen:
                continue
            seen.add((config, pending))
            if self.dta.is_accepting(config):
                return True
            if self.dta.is_rejecting(config):
                continue
            for extra in _subsets(pending):
                for mask in range(1 << len(base_atoms)):
                    symbol = frozenset(
                        a for i, a in enumerate(base_atoms) if mask >> i & 1
                    ) | extra
                    nxt = self._clamp(
                        self.dta.step_config(config, symbol, 1), cap)
                    stack.append((nxt, pending - extra))
        return False

    @staticmethod
    def _clamp(config, cap):
        if cap is None or not isinstance(config, tuple):
            return config
        loc, values = config
        return (loc, tuple(min(v, cap) for v in values))


class TruncatedSta(StaModel):
    """Stochastic timed automaton with truncated event clocks.

    Any step from a state where a pending event clock would advance past
    its truncation point goes to the absorbing sink instead, carrying that
    step outcome's probability.  Explicit-automaton clocks are saturated at
    one above the largest guard constant, which preserves the language
    while keeping configurations finite.
    """

    def __init__(self, base: StaModel, trunc):
        super().__init__(base.dta, base.events)
        self.trunc = trunc
        self.points = {}
        for name in self.event_names:
            if name not in trunc:
                raise StaError(f"missing truncation entry for event {name!r}")
            self.points[name] = trunc[name]
        self._dta_cap = None
        if isinstance(self.dta, ExplicitDta):
            consts = [0]
            for e in self.dta.edge_list:
                consts.extend(constraint_constants(e.guard))
            for inv in self.dta.invariants.values():
                consts.extend(constraint_constants(inv))
            self._dta_cap = max(consts) + 1

    def would_sink(self, q: StaState) -> bool:
        """True when the next unit step pushes a pending clock past its cap."""
        for name, c in zip(self.event_names, q.clocks):
            if name in q.pending and c + 1 > self.points[name]:
                return True
        return False

    def step(self, q: StaState, symbol) -> tuple[StaState, float]:
        if q.sink:
            return q, 1.0
        symbol = frozenset(symbol)
        e = symbol & set(self.event_names)
        if not e <= q.pending:
            raise StaError(f"events {sorted(e - q.pending)} already occurred")
        if self.would_sink(q):
            haz = self.hazards(q)
            p = 1.0
            for name in q.pending:
                p *= haz[name] if name in e else 1.0 - haz[name]
            return SINK, p
        q2, p = super().step(q, symbol)
        if self._dta_cap is not None:
            q2 = StaState(self._clamp(q2.config, self._dta_cap),
                          q2.clocks, q2.pending, q2.sink)
        return q2, p


def truncate(m: StaModel, trunc) -> TruncatedSta:
    return TruncatedSta(m, trunc)


# ---------------------------------------------------------------------------
# Monte Carlo check of the truncation error bound
# ---------------------------------------------------------------------------

@dataclass
class MonteCarloEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    hits: int
    samples: int


def _log_binom_cdf(k: int, n: int, p: float) -> float:
    """log P(X <= k) for X ~ Binomial(n, p), stable for small k."""
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return 0.0 if k >= n else -math.inf
    terms = []
    for j in range(k + 1):
        terms.append(math.lgamma(n + 1) - math.lgamma(j + 1)
                     - math.lgamma(n - j + 1)
                     + j * math.log(p) + (n - j) * math.log1p(-p))
    m = max(terms)
    return m + math.log(sum(math.exp(t - m) for t in terms))


def _exact_ci(hits: int, n: int, alpha: float = 0.05) -> tuple[float, float]:
    """Clopper-Pearson interval by bisection on the binomial CDF."""
    if hits == 0:
        low = 0.0
    else:
        lo, hi = 0.0, hits / n
        for _ in range(60):
            mid = (lo + hi) / 2
            # P(X >= hits) at p=mid
            if 1.0 - math.exp(_log_binom_cdf(hits - 1, n, mid)) > alpha / 2:
                hi = mid
            else:
                lo = mid
        low = lo
    if hits == n:
        high = 1.0
    else:
        lo, hi = hits / n, 1.0
        for _ in range(60):
            mid = (lo + hi) / 2
            if math.exp(_log_binom_cdf(hits, n, mid)) > alpha / 2:
                lo = mid
            else:
                hi = mid
        high = hi
    return low, high


def _normal_ci(hits: int, n: int) -> tuple[float, float]:
    p = hits / n
    half = 1.959963984540054 * math.sqrt(max(p * (1.0 - p), 0.0) / n)
    return max(p - half, 0.0), min(p + half, 1.0)


def sample_occurrence_steps(d: DistributionSpec, n: int, rng,
                            never: int) -> np.ndarray:
    """Sample n first-occurrence steps; `never` encodes 'no finite step'."""
    if isinstance(d, Geometric):
        return rng.geometric(d.p, size=n).astype(np.int64)
    if isinstance(d, FiniteTable):
        steps = [k for k, _ in d.entries] + [never]
        probs = [m for _, m in d.entries] + [d.never_mass]
        total = sum(probs)
        probs = [p / total for p in probs]
        return rng.choice(np.array(steps, dtype=np.int64), size=n, p=probs)
    raise StaError(f"cannot sample from {type(d).__name__}")


def truncation_error_estimate(m: StaModel, mt: TruncatedSta, n: int, seed: int,
                         agent_prop_prob: dict[str, float] | None = None,
                         horizon: int | None = None) -> MonteCarloEstimate:
    """Monte Carlo estimate of P(word accepted by m and sunk by mt).

    Words are sampled by drawing each event's first-occurrence step from
    its distribution and filling the remaining propositions independently
    per step with the given probabilities (default: never true).  The
    truncation bound guarantees the true probability is below the achieved
    error bound regardless of the agent word generator.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    if not isinstance(m.dta, ProgressionDta):
        raise StaError("estimate requires a progression-built automaton")
    agent_prop_prob = agent_prop_prob or {}
    points = mt.points
    max_T = max(points.values(), default=0)
    if horizon is None:
        # long enough that a sink step fits inside the sampled words
        horizon = max_T + 16
    if horizon < 1:
        raise ValueError("horizon must be positive")
    never = 1 << 40

    rng = np.random.default_rng(seed)
    occ = {name: sample_occurrence_steps(m.dist(name), n, rng, never)
           for name in m.event_names}

    dta: ProgressionDta = m.dta
    table = np.asarray(dta.table, dtype=np.int64)
    atom_bit = {a: 1 << i for i, a in enumerate(dta.atoms)}
    agent_atoms = [a for a in dta.atoms if a not in m.event_names]

    loc = np.full(n, dta.init_index, dtype=np.int64)
    big = np.int64(1 << 40)
    first_accept = np.full(n, big, dtype=np.int64)
    for t in range(horizon):
        mask = np.zeros(n, dtype=np.int64)
        for name in m.event_names:
            bit = atom_bit.get(name, 0)
            if bit:
                mask |= np.where(occ[name] == t, bit, 0)
        for a in agent_atoms:
            q = agent_prop_prob.get(a, 0.0)
            if q > 0.0:
                mask |= np.where(rng.random(n) < q, atom_bit[a], 0)
        loc = table[loc, mask]
        if dta.accept_index >= 0:
            newly = (loc == dta.accept_index) & (first_accept == big)
            first_accept[newly] = t

    accepted = first_accept < big
    # first step at which a pending clock would exceed its cap
    t_sink = np.full(n, big, dtype=np.int64)
    for name in m.event_names:
        late = occ[name] > points[name]
        t_sink = np.where(late, np.minimum(t_sink, points[name] + 1), t_sink)
    sunk = (t_sink <= first_accept) & (t_sink <= horizon - 1)

    hits = int(np.count_nonzero(accepted & sunk))
    if hits < 10:
        lo, hi = _exact_ci(hits, n)
    else:
        lo, hi = _normal_ci(hits, n)
    return MonteCarloEstimate(hits / n, lo, hi, hits, n)
