"""Continuous quadratic relaxation of max-product, and the fusion weights
it induces.

Relax each node state from {-1,+1} to the real line.  The local evidence
term becomes a concave quadratic in the node state, every message is then a
concave quadratic m_{k->j}(x_j) = a x_j^2 + b x_j (constants dropped — they
cancel in decision variables), and the per-edge maximization has the affine
solution

    xhat_k(x_j) = u + v x_j,   u = -B / (2A),   v = -J_kj / (2A),

with A = alpha_k + sum of incoming a, B = beta_k + sum of incoming b.  Two
bookkeeping conventions for the local quadratic alpha x^2 + beta x are
supported:

* "paper":  alpha = -E/4,  beta = gamma - E/2
            (so u1 = 2 gamma/E - 1, v1 = 2 J/E)
* "exact":  alpha = -E/8,  beta = gamma / 2
            (the literal Gaussian log-likelihood quadratic in the +-1
            parameterization; u1 = 2 gamma/E, v1 = 4 J/E)

Both make the map gamma -> lambda affine, which is the whole point: after
any number of rounds the decision variable is lambda_j = W[j] @ gamma + w0_j,
and `extract_weights` recovers (W, w0) exactly by probing with unit vectors.
Under "exact" the map is homogeneous (w0 = 0); under "paper" the -E/2 shifts
leave constant offsets, which are reported, never hidden.

Couplings enter the relaxation exponent J x_k x_j exactly as stored on the
edge (no merged/raw rescaling here; that distinction belongs to the discrete
engines).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .graph import MrfParams, Topology, neighbors, neighbors_except

PAPER = "paper"
EXACT = "exact"
_CONVENTIONS = (PAPER, EXACT)


class ConcavityError(ValueError):
    """Aggregate curvature at a node failed to stay negative."""

    def __init__(self, node: int):
        self.node = node
        super().__init__(
            f"coupling too strong for continuous relaxation at node {node}: "
            "aggregate quadratic is not concave")


def local_quadratic(gamma_k, energy_k: float, convention: str):
    """(alpha, beta) of the local evidence quadratic alpha x^2 + beta x."""
    if energy_k <= 0:
        raise ValueError("node energy must be positive")
    if convention == PAPER:
        return -energy_k / 4.0, np.asarray(gamma_k, dtype=float) - energy_k / 2.0
    if convention == EXACT:
        return -energy_k / 8.0, np.asarray(gamma_k, dtype=float) / 2.0
    raise ValueError(f"unknown convention {convention!r}")


def init_affine(gamma_k, energy_k: float, coupling: float,
                convention: str = PAPER) -> Tuple[np.ndarray, float]:
    """First-round affine estimate (u, v): no incoming messages yet."""
    alpha, beta = local_quadratic(gamma_k, energy_k, convention)
    u = -beta / (2.0 * alpha)
    v = -coupling / (2.0 * alpha)
    return u, float(v)


def affine_step(gamma_k, energy_k: float, coupling: float,
                incoming_a: Sequence[float], incoming_b,
                convention: str = PAPER,
                node: int = 0) -> Tuple[np.ndarray, float]:
    """Stationary point of the receiving-node optimization with incoming
    quadratic messages: u = -B/(2A), v = -J/(2A)."""
    alpha, beta = local_quadratic(gamma_k, energy_k, convention)
    curv = alpha + sum(incoming_a)
    if not curv < 0:
        raise ConcavityError(node)
    lin = beta
    for b in incoming_b:
        lin = lin + b
    u = -lin / (2.0 * curv)
    v = -coupling / (2.0 * curv)
    return u, float(v)


def quad_from_affine(u, v: float, gamma_k, energy_k: float, coupling: float,
                     incoming_a: Sequence[float] = (), incoming_b=(),
                     convention: str = PAPER, node: int = 0):
    """Expand ln phi_k + incoming messages + J xhat x_j at xhat = u + v x_j.

    Returns the (a, b) of the outgoing quadratic message; the constant term
    is discarded.  Substituting F(x) = A x^2 + B x with A, B the aggregate
    curvature/linear coefficients gives

        a = A v^2 + J v,      b = 2 A u v + B v + J u.
    """
    alpha, beta = local_quadratic(gamma_k, energy_k, convention)
    curv = alpha + sum(incoming_a)
    if not curv < 0:
        raise ConcavityError(node)
    lin = beta
    for b_in in incoming_b:
        lin = lin + b_in
    a_out = curv * v * v + coupling * v
    b_out = 2.0 * curv * u * v + lin * v + coupling * u
    return float(a_out), b_out


@dataclass(frozen=True)
class QuadraticInstance:
    """A relaxation problem: topology + couplings + node energies."""

    topology: Topology
    params: MrfParams
    energies: Tuple[float, ...]
    convention: str = PAPER

    def __post_init__(self) -> None:
        if self.convention not in _CONVENTIONS:
            raise ValueError(f"unknown convention {self.convention!r}")
        if self.params.topology != self.topology:
            raise ValueError("params were built for a different topology")
        e = tuple(float(x) for x in self.energies)
        if len(e) != self.topology.node_count:
            raise ValueError("need one energy per node")
        if any(not (x > 0 and np.isfinite(x)) for x in e):
            raise ValueError("node energies must be positive and finite")
        object.__setattr__(self, "energies", e)


@dataclass
class QuadraticState:
    """Estimates (u, v) and messages (a, b) after `rounds` message rounds."""

    rounds: int
    estimates: Dict[Tuple[int, int], Tuple[np.ndarray, float]]
    messages: Dict[Tuple[int, int], Tuple[float, np.ndarray]]


def run(instance: QuadraticInstance, gamma, rounds: int) -> QuadraticState:
    """Flood `rounds` rounds of quadratic messages from the zero start.

    gamma is (N,) or (N, P); P probe columns run in one pass.  Round r's
    estimates use messages of round r-1, so rounds = 0 leaves lambda = gamma.
    """
    if rounds < 0:
        raise ValueError("rounds must be nonnegative")
    top = instance.topology
    g = np.asarray(gamma, dtype=float)
    if g.shape[0] != top.node_count:
        raise ValueError("gamma row count != node count")
    zeros_like_g = np.zeros(g.shape[1:]) if g.ndim > 1 else 0.0
    messages: Dict[Tuple[int, int], Tuple[float, np.ndarray]] = {
        e: (0.0, zeros_like_g) for e in top.directed_edges()}
    estimates: Dict[Tuple[int, int], Tuple[np.ndarray, float]] = {}
    for _ in range(rounds):
        estimates = {}
        new_messages = {}
        for (k, j) in top.directed_edges():
            coupling = instance.params.coupling(k, j)
            gamma_k = g[k - 1]
            energy_k = instance.energies[k - 1]
            others = neighbors_except(top, k, j)
            inc_a = [messages[(n, k)][0] for n in others]
            inc_b = [messages[(n, k)][1] for n in others]
            u, v = affine_step(gamma_k, energy_k, coupling, inc_a, inc_b,
                               instance.convention, node=k)
            estimates[(k, j)] = (u, v)
            new_messages[(k, j)] = quad_from_affine(
                u, v, gamma_k, energy_k, coupling, inc_a, inc_b,
                instance.convention, node=k)
        messages = new_messages
    return QuadraticState(rounds, estimates, messages)


def decision_variables(instance: QuadraticInstance, state: QuadraticState,
                       gamma) -> np.ndarray:
    """lambda_j = gamma_j + sum over neighbors of 2 b_{k->j}."""
    top = instance.topology
    g = np.asarray(gamma, dtype=float)
    lam = np.array(g, copy=True)
    for (k, j) in top.directed_edges():
        lam[j - 1] = lam[j - 1] + 2.0 * np.asarray(state.messages[(k, j)][1])
    return lam


@dataclass(frozen=True)
class FusionWeights:
    """lambda = W gamma + w0, extracted at a given iteration."""

    weights: np.ndarray  # (N, N): row j holds the gamma_i weights of node j
    offset: np.ndarray   # (N,)
    iteration: int

    def locality_violations(self, top: Topology, tol: float = 1e-12) -> List[Tuple[int, int, float]]:
        """(j, i, w) entries that should be zero by the hop bound but aren't."""
        from .graph import hop_distance
        bad = []
        n = top.node_count
        for j in range(1, n + 1):
            for i in range(1, n + 1):
                w = float(self.weights[j - 1, i - 1])
                if hop_distance(top, i, j) > self.iteration - 1 and abs(w) > tol:
                    bad.append((j, i, w))
        return bad

    def to_csv(self, path) -> None:
        n = self.weights.shape[0]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("node," + ",".join(f"w_gamma{i}" for i in range(1, n + 1)) + ",offset\n")
            for j in range(n):
                row = [f"{self.weights[j, i]:.9g}" for i in range(n)]
                fh.write(f"{j + 1}," + ",".join(row) + f",{self.offset[j]:.9g}\n")


def extract_weights(instance: QuadraticInstance, iteration: int) -> FusionWeights:
    """Recover (W, w0) by affine probing.

    Iteration 1 is the no-message local detector (W = I); each further
    iteration adds one message round, so weights at iteration l are
    supported within l-1 hops.  One engine pass handles all N+1 probes
    (the zero vector plus each unit vector).
    """
    if iteration < 1:
        raise ValueError("iteration must be >= 1")
    n = instance.topology.node_count
    probes = np.concatenate([np.zeros((n, 1)), np.eye(n)], axis=1)
    state = run(instance, probes, iteration - 1)
    lam = decision_variables(instance, state, probes)
    offset = lam[:, 0].copy()
    weights = lam[:, 1:] - offset[:, None]
    return FusionWeights(weights, offset, iteration)


def verify_linearity(instance: QuadraticInstance, iteration: int,
                     trials: int, gen: np.random.Generator,
                     weights: Optional[FusionWeights] = None) -> float:
    """Max |lambda(gamma) - (W gamma + w0)|_inf over random probes.

    Probe gammas are scaled to the energy magnitudes so the check runs in
    the regime the detectors actually see.
    """
    if trials < 1:
        raise ValueError("need at least one probe")
    fw = weights if weights is not None else extract_weights(instance, iteration)
    n = instance.topology.node_count
    scale = np.array(instance.energies)[:, None] / 2.0
    gammas = gen.standard_normal((n, trials)) * scale
    state = run(instance, gammas, iteration - 1)
    lam = decision_variables(instance, state, gammas)
    predicted = fw.weights @ gammas + fw.offset[:, None]
    return float(np.max(np.abs(lam - predicted)))


def mrc_probe(instance: QuadraticInstance, k: int, j: int,
              energy_sweep: Sequence[float]) -> Tuple[Tuple[int, ...], np.ndarray]:
    """|du_kj^(2)/dgamma_n| for n in N_k minus j, at each energy of node k.

    Probes the second-round intercept u_{k->j} as an affine map of gamma
    (difference of unit-vector and zero probes — exact).  Returns the probed
    neighbor ids and a (len(sweep), len(neighbors)) magnitude table; the
    no-other-neighbors case yields an empty table.
    """
    others = neighbors_except(instance.topology, k, j)
    if j not in neighbors(instance.topology, k):
        raise ValueError(f"({k}, {j}) is not an edge")
    mags = np.zeros((len(energy_sweep), len(others)))
    if not others:
        return others, mags
    n = instance.topology.node_count
    probes = np.concatenate([np.zeros((n, 1)), np.eye(n)], axis=1)
    for row, ek in enumerate(energy_sweep):
        energies = list(instance.energies)
        energies[k - 1] = float(ek)
        inst = QuadraticInstance(instance.topology, instance.params,
                                 tuple(energies), instance.convention)
        state = run(inst, probes, 2)
        u = np.asarray(state.estimates[(k, j)][0])
        base = u[0]
        for col, nb in enumerate(others):
            mags[row, col] = abs(u[nb] - base)
    return others, mags
