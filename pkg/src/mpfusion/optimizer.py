"""Design-side tooling: learning couplings from decision histories,
optimizing linear fusion weights against mixture statistics, and a blind
bootstrap that does the whole thing without ground truth.

Two design problems are covered.  The neighbourhood problem ("P2-style")
tunes one coefficient per incident edge, own score fixed at weight one,
maximizing detection probability at a pinned false-alarm rate; searches stay
inside the open stability box |c| < 1/(max_degree - 1) so the same
coefficients can also drive the iterated linear engine.  The network problem
("P1-style") tunes a full weight row per node under per-node false-alarm
targets, optional detection floors, and an optional global false-alarm cost
budget.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .graph import MrfParams, Topology, neighbors
from .performance import ConditionalStats, gfun, solve_threshold
from .scenario import ScenarioStats

_COARSE_POINTS = 11
_SCAN_POINTS = 21
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
_STEP_TOL = 1e-4
_LINE_TOL = 1e-5
_MAX_SWEEPS = 60
_UNBOUNDED_BOX = 10.0


class ContractionWarning(UserWarning):
    """Chosen coefficients leave the iterated-engine stability region."""


# ---------------------------------------------------------------------------
# coupling estimation


def learn_couplings(labels, top: Topology, zeta: float) -> MrfParams:
    """Empirical pairwise agreement, scaled: J_kj = zeta * mean(x_k x_j).

    `labels` is a (N, T) matrix of +-1 decisions (who produced them is the
    caller's business — ground truth, local detectors, or a blind pass).
    Magnitudes never exceed zeta since the agreement average lives in
    [-1, 1].  Returns parameters in the merged-coupling convention.
    """
    x = np.asarray(labels, dtype=float)
    if x.ndim != 2 or x.shape[0] != top.node_count:
        raise ValueError("labels must be (nodes, slots)")
    if not np.all(np.isin(x, (-1.0, 1.0))):
        raise ValueError("labels must be +-1 valued")
    if zeta < 0:
        raise ValueError("zeta must be nonnegative")
    t = x.shape[1]
    couplings = {}
    for (i, j) in top.edges:
        couplings[(i, j)] = zeta * float(np.dot(x[i - 1], x[j - 1]) / t)
    return MrfParams(top, couplings, convention="merged")


# ---------------------------------------------------------------------------
# mixture moments keyed by interferer pattern


@dataclass(frozen=True)
class ComponentMoments:
    """Per-node mixture components with per-node score moments.

    For v in {-1, +1}: `weights[v]` is (M,), `means[v]` and `variances[v]`
    are (M, N) — the conditional mean/variance of every node's score under
    each component.  Entries may be NaN for nodes outside the estimated set
    (blind estimation only sees one hop); touching a NaN in an objective is
    an error, not a silent zero.
    """

    node: int
    weights: dict
    means: dict
    variances: dict

    def stats_for_row(self, indices, row_weights, offset: float = 0.0) -> ConditionalStats:
        """Gaussian mixture of sum_i w_i gamma_i (+offset) over components."""
        idx = np.asarray(indices, dtype=np.intp) - 1
        w = np.asarray(row_weights, dtype=float)
        weights_by_v, means_by_v, stds_by_v = {}, {}, {}
        for v in (-1, 1):
            m = self.means[v][:, idx]
            s2 = self.variances[v][:, idx]
            if np.any(np.isnan(m)) or np.any(np.isnan(s2)):
                raise ValueError(
                    f"component moments for node {self.node} do not cover "
                    f"all requested nodes")
            weights_by_v[v] = self.weights[v]
            means_by_v[v] = m @ w + offset
            stds_by_v[v] = np.sqrt(s2 @ (w ** 2))
        return ConditionalStats(self.node, weights_by_v, means_by_v, stds_by_v)


def moments_from_scenario(stats: ScenarioStats) -> dict:
    """Exact ComponentMoments per node from analytic scenario statistics."""
    out = {}
    n = stats.config.node_count
    live = stats.probs > 0
    for j in range(1, n + 1):
        weights_by_v, means_by_v, vars_by_v = {}, {}, {}
        for v in (-1, 1):
            sel = live & (stats.x_table[j - 1] == v)
            total = stats.probs[sel].sum()
            if total <= 0:
                raise ValueError(
                    f"node {j} never has state {v:+d} under this scenario")
            weights_by_v[v] = stats.probs[sel] / total
            means_by_v[v] = stats.gamma_mean[:, sel].T.copy()
            vars_by_v[v] = stats.gamma_var[:, sel].T.copy()
        out[j] = ComponentMoments(j, weights_by_v, means_by_v, vars_by_v)
    return out


# ---------------------------------------------------------------------------
# neighbourhood design (one coefficient per incident edge)


@dataclass(frozen=True)
class P2Solution:
    node: int
    coefficients: dict            # neighbour -> coefficient
    threshold: float
    pd: float
    pf_target: float
    evaluations: int
    converged: bool


def _row_objective(moments: ComponentMoments, indices, weights, alpha: float):
    stats = moments.stats_for_row(indices, weights)
    tau = solve_threshold(stats, -1, alpha)
    return gfun(tau, 1, stats), tau


def stability_box(top: Topology) -> float:
    """Half-width of the open coefficient box keeping iteration stable."""
    deg = max(len(neighbors(top, j)) for j in top.nodes)
    if deg <= 1:
        return _UNBOUNDED_BOX
    return 1.0 / (deg - 1)


def _line_search(fun, i: int, point: np.ndarray, lo: float, hi: float):
    """Maximize fun over coordinate i by scan + golden refinement."""
    grid = np.linspace(lo, hi, _SCAN_POINTS)
    best_val, best_c = -np.inf, point[i]
    for c in grid:
        point[i] = c
        val = fun(point)
        if val > best_val:
            best_val, best_c = val, c
    step = grid[1] - grid[0]
    a = max(lo, best_c - step)
    b = min(hi, best_c + step)
    # golden-section refinement on the bracketing interval
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    point[i] = x1
    f1 = fun(point)
    point[i] = x2
    f2 = fun(point)
    while b - a > _LINE_TOL:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            point[i] = x2
            f2 = fun(point)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            point[i] = x1
            f1 = fun(point)
    candidates = [(best_val, best_c), (f1, x1), (f2, x2)]
    val, c = max(candidates, key=lambda vc: vc[0])
    point[i] = c
    return val


def _coordinate_ascent(fun, start: np.ndarray, box: float):
    """Cyclic coordinate ascent inside [-box, box]^d; returns (point, value,
    converged)."""
    point = start.copy()
    value = fun(point)
    if point.size == 0:
        return point, value, True
    for _ in range(_MAX_SWEEPS):
        moved = 0.0
        for i in range(point.size):
            before = point[i]
            new_val = _line_search(fun, i, point, -box, box)
            if new_val >= value:
                value = new_val
            else:               # never step downhill
                point[i] = before
            moved = max(moved, abs(point[i] - before))
        if moved < _STEP_TOL:
            return point, value, True
    return point, value, False


def optimize_p2(moments: ComponentMoments, top: Topology, node: int,
                alpha: float, seed: int | None = None) -> P2Solution:
    """Tune neighbour coefficients for one node at a pinned false-alarm rate.

    Own score keeps weight one; the neighbour coefficients live in the open
    stability box.  Multi-start (origin plus a coarse grid or seeded random
    starts) followed by cyclic coordinate ascent; the returned point is never
    worse than the plain local detector, because the origin is always one of
    the evaluated candidates and ascent never steps downhill.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    nbrs = neighbors(top, node)
    dim = len(nbrs)
    box = stability_box(top) * (1.0 - 1e-9)
    indices = np.array([node] + list(nbrs))
    evals = 0

    def fun(c):
        nonlocal evals
        evals += 1
        pd, _ = _row_objective(moments, indices, np.concatenate(([1.0], c)), alpha)
        return pd

    starts = [np.zeros(dim)]
    if 0 < dim <= 2:
        axes = np.linspace(-box, box, _COARSE_POINTS)
        mesh = np.meshgrid(*([axes] * dim), indexing="ij")
        grid = np.stack([m.ravel() for m in mesh], axis=1)
        vals = [fun(c) for c in grid]
        starts.append(grid[int(np.argmax(vals))].copy())
    elif dim > 2:
        gen = rng.stream(0 if seed is None else seed, rng.OPTIMIZER, node)
        for _ in range(8):
            starts.append(gen.uniform(-box, box, size=dim))

    best_point, best_val = np.zeros(dim), -np.inf
    converged = True
    for start in starts:
        point, val, ok = _coordinate_ascent(fun, np.asarray(start, dtype=float), box)
        if val > best_val:
            best_point, best_val, converged = point, val, ok

    pd, tau = _row_objective(
        moments, indices, np.concatenate(([1.0], best_point)), alpha)
    return P2Solution(node, dict(zip(nbrs, (float(c) for c in best_point))),
                      float(tau), float(pd), alpha, evals, converged)


# ---------------------------------------------------------------------------
# network design (full weight row per node)


@dataclass(frozen=True)
class P1Solution:
    weights: np.ndarray           # (N, N), unit diagonal
    thresholds: np.ndarray        # (N,)
    pf: np.ndarray
    pd: np.ndarray
    reward: float
    cost: float
    feasible: bool
    notes: tuple = field(default=())


def optimize_p1(moments: dict, top: Topology, alphas, rewards=None, costs=None,
                budget: float | None = None, betas=None,
                seed: int | None = None, box: float = 2.0) -> P1Solution:
    """Best-effort network design: per-row detection maximization.

    Each node's row (own weight one, all other entries free in [-box, box])
    is tuned to maximize detection at its own false-alarm target; rows are
    seeded with the neighbourhood solution zero-extended, so the result is
    never worse than that design under the same statistics.  If a cost
    budget is given and sum(cost * alpha) exceeds it, the per-node targets
    are scaled down proportionally and thresholds re-solved with weights
    kept — a heuristic, reported as such via `notes`.  Detection floors
    (betas) are checked, not enforced; `feasible` reports the outcome.
    """
    n = top.node_count
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (n,)).copy()
    if np.any((alphas <= 0) | (alphas >= 1)):
        raise ValueError("false-alarm targets must lie in (0, 1)")
    rewards = np.ones(n) if rewards is None else np.asarray(rewards, dtype=float)
    costs = np.ones(n) if costs is None else np.asarray(costs, dtype=float)
    notes = []

    if budget is not None:
        base_cost = float(costs @ alphas)
        if base_cost > budget:
            alphas = alphas * (budget / base_cost)
            notes.append("false-alarm targets scaled to meet the cost budget")

    weight_matrix = np.eye(n)
    thresholds = np.zeros(n)
    pf = np.zeros(n)
    pd = np.zeros(n)
    for j in range(1, n + 1):
        others = [i for i in range(1, n + 1) if i != j]
        indices = np.array([j] + others)
        cm = moments[j]
        evals = 0

        def fun(c):
            nonlocal evals
            evals += 1
            val, _ = _row_objective(cm, indices, np.concatenate(([1.0], c)), alphas[j - 1])
            return val

        hood = optimize_p2(cm, top, j, float(alphas[j - 1]), seed=seed)
        seeded = np.zeros(len(others))
        for pos, i in enumerate(others):
            if i in hood.coefficients:
                seeded[pos] = hood.coefficients[i]
        starts = [np.zeros(len(others)), seeded]
        gen = rng.stream(0 if seed is None else seed, rng.OPTIMIZER, 100 + j)
        starts.append(np.clip(gen.normal(scale=0.3, size=len(others)), -box, box))

        best_point, best_val = seeded, -np.inf
        for start in starts:
            point, val, _ = _coordinate_ascent(fun, start, box)
            if val > best_val:
                best_point, best_val = point, val
        row = np.concatenate(([1.0], best_point))
        stats = cm.stats_for_row(indices, row)
        tau = solve_threshold(stats, -1, float(alphas[j - 1]))
        weight_matrix[j - 1, indices - 1] = row
        thresholds[j - 1] = tau
        pf[j - 1] = gfun(tau, -1, stats)
        pd[j - 1] = gfun(tau, 1, stats)

    cost = float(costs @ pf)
    feasible = budget is None or cost <= budget * (1 + 1e-9)
    if betas is not None:
        floors = np.broadcast_to(np.asarray(betas, dtype=float), (n,))
        if np.any(pd < floors):
            feasible = False
            notes.append("detection floors not met at the requested targets")
    return P1Solution(weight_matrix, thresholds, pf, pd,
                      float(rewards @ pd), cost, feasible, tuple(notes))


# ---------------------------------------------------------------------------
# equal-gain combining


def egc_weights(top: Topology, c0: float) -> dict:
    """One common coefficient on every directed edge.

    Values outside the stability box are allowed (a single fusion pass is
    still well defined) but flagged with a ContractionWarning, since the
    iterated engine may then diverge.
    """
    if c0 >= stability_box(top):
        warnings.warn(
            f"coefficient {c0} is outside the stability box "
            f"(|c| < {stability_box(top):g}); iterated fusion may diverge",
            ContractionWarning, stacklevel=2)
    return {edge: float(c0) for edge in top.directed_edges()}


# ---------------------------------------------------------------------------
# blind bootstrap


@dataclass(frozen=True)
class BlindResult:
    labels: np.ndarray            # (N, T) corrected +-1 labels
    moments: dict                 # node -> ComponentMoments (one-hop support)
    solutions: dict               # node -> P2Solution
    initial_accuracy: float | None = None
    final_accuracy: float | None = None


def _majority_pass(labels: np.ndarray, votes: np.ndarray, top: Topology) -> np.ndarray:
    new = labels.copy()
    for j in top.nodes:
        nbrs = neighbors(top, j)
        tally = labels[j - 1].astype(np.int64).copy()
        for k in nbrs:
            tally += votes[k - 1]
        flip = np.sign(tally)
        new[j - 1] = np.where(flip == 0, labels[j - 1], flip).astype(np.int8)
    return new


def blind_adapt(gamma, top: Topology, alpha: float, rounds: int = 3,
                min_cell: int = 5, truth=None, seed: int | None = None) -> BlindResult:
    """Label, cross-correct, estimate, and re-optimize without ground truth.

    Round zero labels each node by the sign of its own score.  Each round,
    every node forms neighbour votes by thresholding the neighbour's score
    stream at its window mean, then corrects its own label by majority over
    {own label} + {votes}; ties keep the previous label.  The corrected
    labels define one-hop cells from which Gaussian component moments are
    fitted, and a neighbourhood design is run per node on those estimates.

    If `truth` (N, T) is supplied, initial/final label accuracies are
    reported for diagnostics; it never influences the estimates.
    """
    g = np.asarray(gamma, dtype=float)
    n, slots = g.shape
    if n != top.node_count:
        raise ValueError("gamma rows must match the topology")
    labels = np.where(g > 0, 1, -1).astype(np.int8)
    init_acc = None if truth is None else float(np.mean(labels == truth))

    centers = g.mean(axis=1, keepdims=True)
    votes = np.where(g > centers, 1, -1).astype(np.int8)
    for _ in range(max(rounds, 0)):
        labels = _majority_pass(labels, votes, top)
    final_acc = None if truth is None else float(np.mean(labels == truth))

    moments = {}
    solutions = {}
    for j in top.nodes:
        nbrs = neighbors(top, j)
        local = np.array([j] + list(nbrs))
        keys = labels[[k - 1 for k in local]]
        weights_by_v, means_by_v, vars_by_v = {}, {}, {}
        for v in (-1, 1):
            sel = labels[j - 1] == v
            if not np.any(sel):
                raise ValueError(
                    f"blind labels give node {j} only one class; cannot adapt")
            cells = []
            patterns = np.unique(keys[:, sel], axis=1)
            for col in range(patterns.shape[1]):
                pat = patterns[:, col]
                cell = sel & np.all(keys == pat[:, None], axis=0)
                count = int(cell.sum())
                if count < max(min_cell, 2):
                    continue
                mean_vec = np.full(n, np.nan)
                var_vec = np.full(n, np.nan)
                samples = g[:, cell]
                mean_vec[local - 1] = samples[local - 1].mean(axis=1)
                var_vec[local - 1] = samples[local - 1].var(axis=1, ddof=1)
                if np.any(var_vec[local - 1] <= 0):
                    continue
                cells.append((count, mean_vec, var_vec))
            if not cells:
                raise ValueError(
                    f"all blind cells for node {j}, label {v:+d} too thin")
            counts = np.array([c for c, _, _ in cells], dtype=float)
            weights_by_v[v] = counts / counts.sum()
            means_by_v[v] = np.stack([m for _, m, _ in cells])
            vars_by_v[v] = np.stack([s for _, _, s in cells])
        moments[j] = ComponentMoments(j, weights_by_v, means_by_v, vars_by_v)
        solutions[j] = optimize_p2(moments[j], top, j, alpha, seed=seed)
    return BlindResult(labels, moments, solutions, init_acc, final_acc)
