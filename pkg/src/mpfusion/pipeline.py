"""End-to-end evaluation pipeline.

One evaluation *cell* = one scenario operating point (rho, delta_rho) plus a
set of detector presets.  Every preset in a cell shares the same three
campaigns — training (coupling estimation), calibration (threshold setting),
evaluation (error counting) — so method comparisons are paired: they see
identical transmitter activity and identical receiver noise.

Preset labels:

    local        own score only
    mp{zeta}     max-product engine on couplings learned with scale zeta
    bp{zeta}     sum-product engine, same couplings
    linear{zeta} linearized engine, coefficients tanh(J/2) of learned J
    egc{c0}      linearized engine, one common coefficient c0
    linProp      one-hop linear fusion, coefficients tuned per node
    linPropB     same design run blind (labels, moments, tuning without truth)
    linOpt       full linear row per node, network design

Thresholds are always produced by inverting the Gaussian-mixture tail
(`solve_threshold`): from exact scenario statistics for rules that are
linear in the scores, and from per-pattern sample moments of the engine
output for the message-passing rules.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import discrete, optimizer, rng, scenario
from .graph import MrfParams, Topology
from .performance import PerfReport, monte_carlo_perf, solve_threshold
from .scenario import (Campaign, ScenarioConfig, empirical_conditional_stats,
                       run_campaign, scenario_stats, stats_for_weights, with_rho)

_CAMPAIGNS_PER_CELL = 16          # index stride keeping cells independent
_TRAIN, _CALIB, _EVAL = 0, 1, 2

_PARAM_LABEL = re.compile(r"^(mp|bp|linear|egc)(\d+(?:\.\d+)?)$")
_PLAIN_LABELS = ("local", "linProp", "linPropB", "linOpt")


@dataclass(frozen=True)
class MethodSpec:
    label: str
    kind: str
    param: float | None = None


def parse_method(label: str) -> MethodSpec:
    """Parse a preset label like 'mp0.1', 'egc0.3', 'linProp', 'local'."""
    label = label.strip()
    if label in _PLAIN_LABELS:
        return MethodSpec(label, label)
    m = _PARAM_LABEL.match(label)
    if m is None:
        raise ValueError(
            f"unknown method label {label!r}; expected one of "
            f"{', '.join(_PLAIN_LABELS)} or mp/bp/linear/egc followed by a number")
    return MethodSpec(label, m.group(1), float(m.group(2)))


@dataclass
class MethodResult:
    """Outcome of one preset in one cell."""

    label: str
    rho_db: float
    delta_rho_db: float
    report: PerfReport
    thresholds: np.ndarray
    extras: dict = field(default_factory=dict)

    def rows(self):
        """Flat (method, rho, delta_rho, node, pf, pd, stderr_pf, stderr_pd)."""
        out = []
        for i, node in enumerate(self.report.nodes):
            out.append((self.label, self.rho_db, self.delta_rho_db, node,
                        self.report.pf[i], self.report.pd[i],
                        self.report.stderr_pf[i], self.report.stderr_pd[i]))
        return out


@dataclass
class _Cell:
    """Shared state for all presets at one operating point."""

    cfg: ScenarioConfig
    top: Topology
    seed: int
    index: int
    iterations: int
    training_labels: str
    training_slots: int
    calibration_slots: int
    eval_slots: int
    stats: scenario.ScenarioStats = None
    train: Campaign = None
    calib: Campaign = None
    eval: Campaign = None
    _couplings: dict = field(default_factory=dict)
    _labels: np.ndarray | None = None
    _moments: dict | None = None

    def __post_init__(self):
        self.stats = scenario_stats(self.cfg)
        base = _CAMPAIGNS_PER_CELL * self.index
        self.train = run_campaign(self.cfg, self.training_slots, self.seed,
                                  index=base + _TRAIN)
        self.calib = run_campaign(self.cfg, self.calibration_slots, self.seed,
                                  index=base + _CALIB)
        self.eval = run_campaign(self.cfg, self.eval_slots, self.seed,
                                 index=base + _EVAL)

    # -- training -----------------------------------------------------------

    def training_label_matrix(self) -> np.ndarray:
        if self._labels is None:
            if self.training_labels == "genie":
                self._labels = self.train.x
            elif self.training_labels == "local":
                taus = self.linear_thresholds(np.eye(self.top.node_count),
                                              np.zeros(self.top.node_count))
                self._labels = discrete.decide(self.train.gamma, taus)
            else:
                raise ValueError(
                    f"unknown training label source {self.training_labels!r}")
        return self._labels

    def learned_params(self, zeta: float):
        if zeta not in self._couplings:
            self._couplings[zeta] = optimizer.learn_couplings(
                self.training_label_matrix(), self.top, zeta)
        return self._couplings[zeta]

    def pattern_moments(self) -> dict:
        if self._moments is None:
            self._moments = optimizer.moments_from_scenario(self.stats)
        return self._moments

    # -- calibration --------------------------------------------------------

    def linear_thresholds(self, weight_matrix, offsets) -> np.ndarray:
        """Exact-mixture thresholds for a rule lambda = W gamma + w0."""
        cond = stats_for_weights(self.stats, weight_matrix, offsets)
        return np.array([solve_threshold(cond[j], -1, self.cfg.far)
                         for j in self.top.nodes])

    def empirical_thresholds(self, lambda_fn) -> np.ndarray:
        """Pattern-cell Gaussian-moment thresholds for a nonlinear rule."""
        lam = lambda_fn(self.calib.gamma)
        cond = empirical_conditional_stats(lam, self.calib.x, self.calib.activity)
        return np.array([solve_threshold(cond[j], -1, self.cfg.far)
                         for j in self.top.nodes])


def _engine_lambda(top: Topology, algorithm: str, iterations: int,
                   params=None, coefficients=None):
    def fn(gamma):
        state = discrete.run_messages(top, gamma, algorithm, iterations,
                                      params=params, coefficients=coefficients)
        return discrete.decision_variables(state, top, gamma)
    return fn


def _linear_engine_matrix(top: Topology, coefficients, iterations: int) -> np.ndarray:
    """Exact weight matrix of the iterated linearized engine (probe columns)."""
    n = top.node_count
    probes = np.eye(n)
    state = discrete.run_messages(top, probes, discrete.LINEARIZED, iterations,
                                  coefficients=coefficients)
    return discrete.decision_variables(state, top, probes)


def _row_matrix(top: Topology, solutions: dict) -> np.ndarray:
    """Weight matrix from per-node neighbour coefficient maps."""
    n = top.node_count
    w = np.eye(n)
    for j, sol in solutions.items():
        for k, c in sol.coefficients.items():
            w[j - 1, k - 1] = c
    return w


def _evaluate_preset(cell: _Cell, spec: MethodSpec) -> MethodResult:
    top, cfg = cell.top, cell.cfg
    n = top.node_count
    extras: dict = {}

    if spec.kind == "local":
        weights, offsets = np.eye(n), np.zeros(n)
        lam_fn = lambda g: g
        taus = cell.linear_thresholds(weights, offsets)
    elif spec.kind in ("mp", "bp"):
        params = cell.learned_params(spec.param)
        algorithm = discrete.MAX_PRODUCT if spec.kind == "mp" else discrete.SUM_PRODUCT
        lam_fn = _engine_lambda(top, algorithm, cell.iterations, params=params)
        taus = cell.empirical_thresholds(lam_fn)
        extras["couplings"] = {f"{i}-{j}": c for (i, j), c in params.couplings.items()}
    elif spec.kind in ("linear", "egc"):
        if spec.kind == "linear":
            params = cell.learned_params(spec.param)
            coeffs = discrete.linearized_coefficients(params)
            extras["couplings"] = {f"{i}-{j}": c
                                   for (i, j), c in params.couplings.items()}
        else:
            coeffs = optimizer.egc_weights(top, spec.param)
        lam_fn = _engine_lambda(top, discrete.LINEARIZED, cell.iterations,
                                coefficients=coeffs)
        weights = _linear_engine_matrix(top, coeffs, cell.iterations)
        taus = cell.linear_thresholds(weights, np.zeros(n))
        extras["weights"] = weights.tolist()
    elif spec.kind == "linProp":
        moments = cell.pattern_moments()
        solutions = {j: optimizer.optimize_p2(moments[j], top, j, cfg.far,
                                              seed=cell.seed)
                     for j in top.nodes}
        weights = _row_matrix(top, solutions)
        lam_fn = lambda g: weights @ g
        taus = np.array([solutions[j].threshold for j in top.nodes])
        extras["coefficients"] = {j: solutions[j].coefficients for j in top.nodes}
        extras["model_pd"] = {j: solutions[j].pd for j in top.nodes}
    elif spec.kind == "linPropB":
        blind = optimizer.blind_adapt(cell.calib.gamma, top, cfg.far,
                                      truth=cell.calib.x, seed=cell.seed)
        weights = _row_matrix(top, blind.solutions)
        lam_fn = lambda g: weights @ g
        # deployment thresholds: exact mixture for the blind-chosen weights
        taus = cell.linear_thresholds(weights, np.zeros(n))
        extras["coefficients"] = {j: blind.solutions[j].coefficients
                                  for j in top.nodes}
        extras["blind_thresholds"] = {j: blind.solutions[j].threshold
                                      for j in top.nodes}
        extras["label_accuracy"] = {"initial": blind.initial_accuracy,
                                    "final": blind.final_accuracy}
    elif spec.kind == "linOpt":
        moments = cell.pattern_moments()
        sol = optimizer.optimize_p1(moments, top, cfg.far, seed=cell.seed)
        weights = sol.weights
        lam_fn = lambda g: weights @ g
        taus = sol.thresholds
        extras["weights"] = weights.tolist()
        extras["feasible"] = sol.feasible
        extras["model_pd"] = sol.pd.tolist()
    else:  # pragma: no cover - parse_method guards this
        raise ValueError(f"unhandled method kind {spec.kind!r}")

    lam = lam_fn(cell.eval.gamma)
    report = monte_carlo_perf(lam, cell.eval.x, taus,
                              meta={"method": spec.label,
                                    "rho_db": cfg.rho_db,
                                    "delta_rho_db": cfg.delta_rho_db})
    return MethodResult(spec.label, cfg.rho_db, cfg.delta_rho_db,
                        report, np.asarray(taus, dtype=float), extras)


def evaluate_cell(cfg: ScenarioConfig, methods, seed: int, *,
                  cell_index: int = 0, iterations: int | None = None,
                  training_labels: str = "local", training_slots: int = 2500,
                  calibration_slots: int = 20000,
                  eval_slots: int = 20000) -> list:
    """Run every preset at one operating point on shared campaigns."""
    specs = [parse_method(m) if isinstance(m, str) else m for m in methods]
    top = cfg.topology()
    iters = (top.node_count - 1) if iterations is None else int(iterations)
    cell = _Cell(cfg, top, seed, cell_index, iters, training_labels,
                 training_slots, calibration_slots, eval_slots)
    return [_evaluate_preset(cell, spec) for spec in specs]


def sweep_rho(cfg: ScenarioConfig, methods, rho_grid, seed: int, *,
              delta_rule: str = "fixed", proportional_factor: float = 0.1,
              threads: int = 1, **cell_kwargs) -> list:
    """Evaluate the presets across an SNR grid.

    delta_rule 'fixed' keeps the configured delta_rho; 'proportional' sets
    delta_rho = proportional_factor * rho per cell.  Cells are independent
    (separately keyed campaigns), so thread count cannot change results.
    """
    if delta_rule not in ("fixed", "proportional"):
        raise ValueError(f"unknown delta rule {delta_rule!r}")
    cells = []
    for i, rho in enumerate(rho_grid):
        delta = (cfg.delta_rho_db if delta_rule == "fixed"
                 else proportional_factor * float(rho))
        cells.append((i, with_rho(cfg, float(rho), delta)))

    def work(item):
        i, cell_cfg = item
        return evaluate_cell(cell_cfg, methods, seed, cell_index=i, **cell_kwargs)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(work, cells))
    else:
        chunks = [work(item) for item in cells]
    return [res for chunk in chunks for res in chunk]


# ---------------------------------------------------------------------------
# conditioned sampling for distribution checks


def conditioned_samples(cfg: ScenarioConfig, algorithm: str, pattern, trials: int,
                        seed: int, *, coupling_high: float = 100.0,
                        iterations: int | None = None, index: int = 0):
    """Decision-variable samples with the transmitter pattern pinned.

    Couplings are drawn once, uniformly from (0, coupling_high) per edge
    (merged convention), from a stream keyed by the seed — heavy coupling is
    the regime where message clipping could distort the output law most.
    Returns (lam, campaign, params).
    """
    top = cfg.topology()
    iters = (top.node_count - 1) if iterations is None else int(iterations)
    draw = rng.stream(seed, rng.COUPLING_DRAW, index)
    couplings = {edge: float(draw.uniform(0.0, coupling_high))
                 for edge in top.edges}
    params = MrfParams(top, couplings, convention="merged")
    camp = scenario.conditioned_campaign(cfg, trials, seed, tuple(pattern),
                                         index=index)
    state = discrete.run_messages(top, camp.gamma, algorithm, iters, params=params)
    lam = discrete.decision_variables(state, top, camp.gamma)
    return lam, camp, params
