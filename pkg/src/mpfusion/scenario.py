"""Benchmark sensing scenario: a small network of sensors watching a band
shared by a few intermittent transmitters.

The default layout is a five-node chain with two transmitters: transmitter 1
reaches nodes (1, 2, 3) and transmitter 2 reaches nodes (3, 4, 5).  Per-link
SNRs are staggered around a common level rho by +-delta_rho so the two
footprints are asymmetric, and node 3 hears both sources coherently.  A node
counts as "occupied" (x_j = +1) when any transmitter covering it is on.

Transmitter on/off dynamics follow coupled two-state chains: each slot,
with probability `coupling` all transmitters copy one fresh Bernoulli(pi)
draw, otherwise each flips independently with the rates that keep
Bernoulli(pi) stationary.  This gives tunable cross-transmitter correlation
with a fixed duty cycle.

Everything here is driven by the keyed streams in `rng`, so campaigns are
reproducible from (seed, index) regardless of what else ran first.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from . import rng, sensing
from .graph import Topology, chain
from .performance import ConditionalStats

_OBS_CHUNK = 2048

# SNR stagger (in units of delta_rho) for three-node footprints, by the
# position of the node within the footprint and the parity of the
# transmitter id.  Footprints of any other size sit flat at rho.
_STAGGER = {1: (1.0, 0.0, -1.0), 0: (0.0, -1.0, 1.0)}

DEFAULT_COVERAGE = {1: (1, 2, 3), 2: (3, 4, 5)}


@dataclass(frozen=True)
class ScenarioConfig:
    """Static description of one benchmark setup."""

    node_count: int = 5
    edges: tuple | None = None          # None -> chain topology
    coverage: dict = field(default_factory=lambda: dict(DEFAULT_COVERAGE))
    rho_db: float = -5.0
    delta_rho_db: float = 1.0
    sample_count: int = 100
    noise_var: float = 1.0
    far: float = 0.1
    on_prob: tuple = (0.5, 0.5)
    flip: float = 0.2
    coupling: float = 0.5
    sensing_mode: str = "energy"
    initial_activity: tuple | None = None

    def __post_init__(self) -> None:
        if self.node_count < 1:
            raise ValueError("need at least one node")
        cov = {int(p): tuple(sorted(int(n) for n in nodes))
               for p, nodes in self.coverage.items()}
        object.__setattr__(self, "coverage", cov)
        if not cov:
            raise ValueError("need at least one transmitter")
        covered = set()
        for p, nodes in cov.items():
            if not nodes:
                raise ValueError(f"transmitter {p} covers no nodes")
            for node in nodes:
                if not 1 <= node <= self.node_count:
                    raise ValueError(f"transmitter {p} covers unknown node {node}")
            if len(set(nodes)) != len(nodes):
                raise ValueError(f"transmitter {p} lists a node twice")
            covered.update(nodes)
        if covered != set(range(1, self.node_count + 1)):
            missing = sorted(set(range(1, self.node_count + 1)) - covered)
            raise ValueError(f"nodes {missing} are covered by no transmitter")
        pi = self.on_prob
        if np.isscalar(pi):
            pi = tuple(float(pi) for _ in cov)
        else:
            pi = tuple(float(x) for x in pi)
        if len(pi) != len(cov):
            raise ValueError("on_prob must give one duty cycle per transmitter")
        object.__setattr__(self, "on_prob", pi)
        for x in pi:
            if not 0.0 <= x <= 1.0:
                raise ValueError("duty cycles must lie in [0, 1]")
        if not 0.0 <= self.coupling <= 1.0:
            raise ValueError("coupling must lie in [0, 1]")
        if self.coupling > 0.0 and len(set(pi)) > 1:
            raise ValueError("coupled transmitters need equal duty cycles")
        if not 0.0 <= self.flip <= 1.0:
            raise ValueError("flip rate must lie in [0, 1]")
        if any(2.0 * self.flip * max(x, 1.0 - x) > 1.0 for x in pi):
            raise ValueError("flip rate too high for the requested duty cycle")
        if self.sensing_mode not in ("energy", "matched"):
            raise ValueError(f"unknown sensing mode {self.sensing_mode!r}")
        if self.noise_var <= 0:
            raise ValueError("noise variance must be positive")
        if self.sample_count < 1:
            raise ValueError("need at least one sample per slot")
        if not 0.0 < self.far < 1.0:
            raise ValueError("false-alarm target must lie in (0, 1)")
        if self.initial_activity is not None:
            ia = tuple(int(b) for b in self.initial_activity)
            if len(ia) != len(cov) or any(b not in (0, 1) for b in ia):
                raise ValueError("initial_activity must be one 0/1 flag per transmitter")
            object.__setattr__(self, "initial_activity", ia)
        if self.edges is not None:
            object.__setattr__(
                self, "edges",
                tuple((int(a), int(b)) for a, b in self.edges))

    @property
    def pu_ids(self) -> tuple:
        return tuple(sorted(self.coverage))

    @property
    def pu_count(self) -> int:
        return len(self.coverage)

    def topology(self) -> Topology:
        if self.edges is None:
            return chain(self.node_count)
        return Topology(self.node_count, self.edges)

    @property
    def tau0(self) -> float:
        return sensing.energy_threshold(self.noise_var, self.sample_count, self.far)


def snr_assignment(config: ScenarioConfig) -> dict:
    """Per (node, transmitter) link SNR in dB.

    Three-node footprints get the staggered pattern (one link delta_rho
    above rho, one at rho, one below, with the order depending on the
    transmitter id's parity); any other footprint size sits flat at rho.
    """
    out = {}
    for p in config.pu_ids:
        nodes = config.coverage[p]
        if len(nodes) == 3:
            offsets = _STAGGER[p % 2]
        else:
            offsets = (0.0,) * len(nodes)
        for node, off in zip(nodes, offsets):
            out[(node, p)] = config.rho_db + off * config.delta_rho_db
    return out


def link_amplitudes(config: ScenarioConfig) -> np.ndarray:
    """(N, P) per-sample received amplitudes a[j, p]; zero where uncovered.

    The link SNR is per-sample: E_link = K * sigma^2 * 10^(snr/10), so the
    amplitude sqrt(E_link / K) does not depend on the window length.
    """
    snr = snr_assignment(config)
    amp = np.zeros((config.node_count, config.pu_count))
    for col, p in enumerate(config.pu_ids):
        for node in config.coverage[p]:
            db = snr[(node, p)]
            amp[node - 1, col] = np.sqrt(config.noise_var * 10.0 ** (db / 10.0))
    return amp


def nominal_templates(config: ScenarioConfig) -> np.ndarray:
    """(N,) per-sample template amplitude: all covering transmitters on."""
    return link_amplitudes(config).sum(axis=1)


# ---------------------------------------------------------------------------
# transmitter activity process


def pu_configs(config: ScenarioConfig) -> np.ndarray:
    """(2^P, P) matrix of 0/1 activity patterns, little-endian by row index."""
    p = config.pu_count
    idx = np.arange(2 ** p, dtype=np.int64)
    return ((idx[:, None] >> np.arange(p)) & 1).astype(np.int8)


def _transition_matrix(config: ScenarioConfig) -> np.ndarray:
    pats = pu_configs(config)
    m = pats.shape[0]
    pi = np.array(config.on_prob)
    kappa = config.coupling
    f = config.flip
    up = 2.0 * f * pi            # P(off -> on) per chain
    down = 2.0 * f * (1.0 - pi)  # P(on -> off) per chain
    trans = np.zeros((m, m))
    all_on = m - 1
    for a in range(m):
        stay = np.where(pats[a] == 1, 1.0 - down, 1.0 - up)
        move = np.where(pats[a] == 1, down, up)
        for b in range(m):
            trans[a, b] = (1.0 - kappa) * np.prod(
                np.where(pats[b] == pats[a], stay, move))
        if kappa > 0.0:
            trans[a, all_on] += kappa * pi[0]
            trans[a, 0] += kappa * (1.0 - pi[0])
    return trans


def stationary_activity(config: ScenarioConfig) -> np.ndarray:
    """Stationary distribution over the 2^P activity patterns.

    Solved exactly from the one-slot transition kernel, so it reflects the
    cross-transmitter correlation induced by the common-draw coupling (it is
    a product law only at coupling = 0).
    """
    if config.pu_count > 10:
        raise ValueError("stationary solve limited to 10 transmitters")
    trans = _transition_matrix(config)
    m = trans.shape[0]
    a = trans.T - np.eye(m)
    a[-1, :] = 1.0
    b = np.zeros(m)
    b[-1] = 1.0
    probs = np.linalg.solve(a, b)
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def step_activity(activity: np.ndarray, config: ScenarioConfig,
                  gen: np.random.Generator) -> np.ndarray:
    """Advance the coupled on/off chains by one slot."""
    pi = np.array(config.on_prob)
    if gen.random() < config.coupling:
        z = 1 if gen.random() < pi[0] else 0
        return np.full(config.pu_count, z, dtype=np.int8)
    r = gen.random(config.pu_count)
    up = 2.0 * config.flip * pi
    down = 2.0 * config.flip * (1.0 - pi)
    flip_prob = np.where(activity == 1, down, up)
    return np.where(r < flip_prob, 1 - activity, activity).astype(np.int8)


def draw_activity(config: ScenarioConfig, slots: int,
                  gen: np.random.Generator,
                  forced: tuple | None = None) -> np.ndarray:
    """(T, P) activity matrix; starts from the stationary law (or the
    configured/forced pattern) and walks the coupled chains."""
    p = config.pu_count
    if forced is not None:
        pattern = np.asarray(forced, dtype=np.int8)
        if pattern.shape != (p,) or not np.all(np.isin(pattern, (0, 1))):
            raise ValueError("forced activity must be one 0/1 flag per transmitter")
        return np.tile(pattern, (slots, 1))
    out = np.empty((slots, p), dtype=np.int8)
    if config.initial_activity is not None:
        state = np.array(config.initial_activity, dtype=np.int8)
    else:
        probs = stationary_activity(config)
        pick = int(np.searchsorted(np.cumsum(probs), gen.random()))
        state = pu_configs(config)[min(pick, probs.size - 1)].copy()
    for t in range(slots):
        out[t] = state
        state = step_activity(state, config, gen)
    return out


def node_states(config: ScenarioConfig, activity: np.ndarray) -> np.ndarray:
    """Map (T, P) activity to (N, T) node occupancy in {-1, +1} (OR rule)."""
    amp = link_amplitudes(config) > 0
    hit = amp @ activity.T.astype(np.int64)
    return np.where(hit > 0, 1, -1).astype(np.int8)


# ---------------------------------------------------------------------------
# campaigns


@dataclass(frozen=True)
class SlotRecord:
    t: int
    activity: tuple
    states: tuple
    scores: tuple


@dataclass(frozen=True)
class Campaign:
    """One simulated stretch of slots: activity, truth, and local scores."""

    config: ScenarioConfig
    activity: np.ndarray          # (T, P) 0/1
    x: np.ndarray                 # (N, T) +-1
    gamma: np.ndarray             # (N, T) local scores
    seed: int
    index: int
    observations: np.ndarray | None = None   # (N, T, K) if kept

    @property
    def slots(self) -> int:
        return self.activity.shape[0]

    def slot_records(self) -> Iterator[SlotRecord]:
        for t in range(self.slots):
            yield SlotRecord(
                t,
                tuple(int(b) for b in self.activity[t]),
                tuple(int(v) for v in self.x[:, t]),
                tuple(float(g) for g in self.gamma[:, t]),
            )

    def to_csv(self, path) -> None:
        n = self.config.node_count
        header = (["t"] + [f"pu{i}" for i in self.config.pu_ids]
                  + [f"x{j}" for j in range(1, n + 1)]
                  + [f"gamma{j}" for j in range(1, n + 1)])
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for rec in self.slot_records():
                row = ([rec.t] + list(rec.activity) + list(rec.states)
                       + [f"{g:.9g}" for g in rec.scores])
                writer.writerow(row)


def run_campaign(config: ScenarioConfig, slots: int, seed: int, index: int = 0,
                 forced_activity: tuple | None = None,
                 keep_observations: bool = False) -> Campaign:
    """Simulate `slots` sensing slots.

    Reproducible from (config, slots, seed, index): transmitter activity and
    receiver noise come from separately keyed streams, so campaigns with
    different indices are independent while a repeated call is bit-identical.
    `forced_activity` pins the transmitter pattern for every slot, which is
    how conditioned sampling is done.
    """
    if slots < 1:
        raise ValueError("need at least one slot")
    act_gen = rng.stream(seed, rng.PU_ACTIVITY, index)
    obs_gen = rng.stream(seed, rng.OBSERVATIONS, index)

    activity = draw_activity(config, slots, act_gen, forced_activity)
    x = node_states(config, activity)

    amp = link_amplitudes(config)                   # (N, P)
    slot_amp = amp @ activity.T.astype(float)       # (N, T)
    sigma = np.sqrt(config.noise_var)
    k = config.sample_count
    n = config.node_count

    templates = nominal_templates(config)
    tau0 = config.tau0 if config.sensing_mode == "energy" else None

    gamma = np.empty((n, slots))
    kept = np.empty((n, slots, k)) if keep_observations else None
    for start in range(0, slots, _OBS_CHUNK):
        stop = min(start + _OBS_CHUNK, slots)
        noise = obs_gen.standard_normal((n, stop - start, k))
        y = slot_amp[:, start:stop, None] + sigma * noise
        if config.sensing_mode == "energy":
            gamma[:, start:stop] = np.mean(y * y, axis=2) - tau0
        else:
            s = y.sum(axis=2)
            gamma[:, start:stop] = (templates[:, None] * s
                                    - k * templates[:, None] ** 2 / 2.0)
        if keep_observations:
            kept[:, start:stop, :] = y
    return Campaign(config, activity, x, gamma, seed, index, kept)


# ---------------------------------------------------------------------------
# analytic conditional statistics


@dataclass(frozen=True)
class ScenarioStats:
    """Exact per-pattern score moments for one scenario.

    Column c corresponds to the activity pattern `patterns[c]`; `x_table`
    gives each node's occupancy under that pattern, and `gamma_mean` /
    `gamma_var` the score moments (scores are conditionally independent
    across nodes given the pattern).
    """

    config: ScenarioConfig
    patterns: np.ndarray       # (M, P)
    probs: np.ndarray          # (M,)
    x_table: np.ndarray        # (N, M)
    gamma_mean: np.ndarray     # (N, M)
    gamma_var: np.ndarray      # (N, M)


def scenario_stats(config: ScenarioConfig) -> ScenarioStats:
    """Compute the exact pattern probabilities and score moments."""
    pats = pu_configs(config)
    probs = stationary_activity(config)
    amp = link_amplitudes(config)
    slot_amp = amp @ pats.T.astype(float)            # (N, M)
    x_table = np.where((amp > 0) @ pats.T > 0, 1, -1).astype(np.int8)

    n, m = slot_amp.shape
    k = config.sample_count
    mean = np.empty((n, m))
    var = np.empty((n, m))
    if config.sensing_mode == "energy":
        tau0 = config.tau0
        for j in range(n):
            for c in range(m):
                mean[j, c], var[j, c] = sensing.energy_moments(
                    k * slot_amp[j, c] ** 2, config.noise_var, k, tau0)
    else:
        templates = nominal_templates(config)
        for j in range(n):
            e_t = k * templates[j] ** 2
            for c in range(m):
                cross = k * templates[j] * slot_amp[j, c]
                mean[j, c], var[j, c] = sensing.matched_moments(
                    e_t, cross, config.noise_var)
    return ScenarioStats(config, pats, probs, x_table, mean, var)


def stats_for_weights(stats: ScenarioStats, weight_matrix, offsets) -> dict:
    """ConditionalStats for linear rules lambda = W gamma + w0, exactly.

    Conditional on an activity pattern the scores are independent Gaussians,
    so each pattern contributes one exact mixture component.  Patterns with
    zero stationary probability are dropped; if a node has no mass on one
    hypothesis (e.g. perpetually occupied), that node raises.
    """
    w_mat = np.asarray(weight_matrix, dtype=float)
    w0 = np.asarray(offsets, dtype=float)
    n = stats.config.node_count
    if w_mat.shape != (n, n) or w0.shape != (n,):
        raise ValueError("need square weights and per-node offsets")
    live = stats.probs > 0
    out = {}
    for j in range(1, n + 1):
        row = w_mat[j - 1]
        comp_mean = row @ stats.gamma_mean + w0[j - 1]       # (M,)
        comp_var = (row ** 2) @ stats.gamma_var
        weights_by_v, means_by_v, stds_by_v = {}, {}, {}
        for v in (-1, 1):
            sel = live & (stats.x_table[j - 1] == v)
            total = stats.probs[sel].sum()
            if total <= 0:
                raise ValueError(
                    f"node {j} never has state {v:+d} under this scenario")
            weights_by_v[v] = stats.probs[sel] / total
            means_by_v[v] = comp_mean[sel]
            stds_by_v[v] = np.sqrt(comp_var[sel])
        out[j] = ConditionalStats(j, weights_by_v, means_by_v, stds_by_v)
    return out


def empirical_conditional_stats(lam: np.ndarray, x: np.ndarray,
                                activity: np.ndarray,
                                min_cell: int = 5) -> dict:
    """Fit per-pattern Gaussian components to sampled decision variables.

    For each node and hypothesis, slots are split by the activity pattern;
    each cell contributes one component with its sample mean/std and its
    relative frequency.  Cells thinner than `min_cell` slots are folded away
    (dropped and the rest renormalized) — their moments would be noise.
    """
    lam = np.asarray(lam, dtype=float)
    n, slots = lam.shape
    if x.shape != (n, slots) or activity.shape[0] != slots:
        raise ValueError("mismatched campaign arrays")
    weights_pow = 1 << np.arange(activity.shape[1])
    labels = activity.astype(np.int64) @ weights_pow
    out = {}
    for j in range(1, n + 1):
        weights_by_v, means_by_v, stds_by_v = {}, {}, {}
        for v in (-1, 1):
            sel = x[j - 1] == v
            total = int(sel.sum())
            if total == 0:
                raise ValueError(
                    f"no calibration slots with node {j} in state {v:+d}")
            cells = []
            for lab in np.unique(labels[sel]):
                cell = sel & (labels == lab)
                count = int(cell.sum())
                if count < min_cell:
                    continue
                samples = lam[j - 1, cell]
                sd = float(np.std(samples, ddof=1))
                if sd <= 0:
                    continue
                cells.append((count, float(np.mean(samples)), sd))
            if not cells:
                raise ValueError(
                    f"all calibration cells for node {j}, state {v:+d} too thin")
            counts = np.array([c for c, _, _ in cells], dtype=float)
            weights_by_v[v] = counts / counts.sum()
            means_by_v[v] = np.array([m for _, m, _ in cells])
            stds_by_v[v] = np.array([s for _, _, s in cells])
        out[j] = ConditionalStats(j, weights_by_v, means_by_v, stds_by_v)
    return out


def conditioned_campaign(config: ScenarioConfig, slots: int, seed: int,
                         pattern: tuple, index: int = 0) -> Campaign:
    """Campaign with the transmitter pattern pinned for every slot."""
    return run_campaign(config, slots, seed, index=index,
                        forced_activity=tuple(pattern))


def with_rho(config: ScenarioConfig, rho_db: float,
             delta_rho_db: float | None = None) -> ScenarioConfig:
    """Copy of the scenario at a different operating SNR."""
    kwargs = {"rho_db": float(rho_db)}
    if delta_rho_db is not None:
        kwargs["delta_rho_db"] = float(delta_rho_db)
    return replace(config, **kwargs)
