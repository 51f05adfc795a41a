"""
Newton-Raphson harmonic power flow.

Unknowns are the spectra of the port quantities that the resources take as
input: voltages at following ports and injected currents at forming ports,
for orders 1..h_max (negative orders follow by conjugation, DC is zero).
They are stored in p.u. as a real vector ordered port -> order -> phase ->
(re, im). The residual is grid output minus resource output at every port.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, get_lapack_funcs, lu_factor, lu_solve

from .cider_resources import FOLLOWING, FORMING, HarmonicResponse
from .exceptions import ModelError, SingularJacobianError
from .harmonic_core import (PolyphaseSpectrum, SpectralParams, sequence_compose,
                            sequence_decompose)
from .network_model import SUBSTATION, HybridPortModel, PerUnitBase

logger = logging.getLogger(__name__)

FLAT = "flat"
RANDOM = "random"


@dataclass(frozen=True)
class SolverConfig:
    """
    Newton-Raphson settings.

    Attributes:
        tol (float): Residual infinity-norm threshold in p.u.
        max_iter (int): Iteration limit
        jacobian (str): Only "finite_difference"
        fd_step (float): Central-difference step in p.u.
        init (str): "flat" or "random"
        seed (int): Seed of the random initialisation
        mag_range: Sequence magnitude interval of the random initialisation (p.u.)
        phase_range: Sequence phase interval of the random initialisation (rad)
        max_halvings (int): Step halvings tried when the residual does not decrease
    """
    tol: float = 1e-8
    max_iter: int = 50
    jacobian: str = "finite_difference"
    fd_step: float = 1e-6
    init: str = FLAT
    seed: Optional[int] = None
    mag_range: Tuple[float, float] = (0.0, 10.0)
    phase_range: Tuple[float, float] = (0.0, 2.0 * np.pi)
    max_halvings: int = 6

    def __post_init__(self):
        if not self.tol > 0:
            raise ModelError("solver tolerance must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ModelError("max_iter must be an integer >= 1")
        if not self.fd_step > 0:
            raise ModelError("fd_step must be positive")
        if self.jacobian != "finite_difference":
            raise ModelError(f"unsupported Jacobian method '{self.jacobian}'")
        if self.init not in (FLAT, RANDOM):
            raise ModelError(f"unknown initialisation '{self.init}'")
        if self.max_halvings < 0:
            raise ModelError("max_halvings must be >= 0")


@dataclass
class HpfSolution:
    """
    Result of a harmonic power-flow solve.

    Voltages and currents are SI spectra; currents are injected into the grid.
    element_currents holds the passive-element current per node, summed over
    the loads and the substation connected there.
    """
    sp: SpectralParams
    base: PerUnitBase
    port_nodes: List[str]
    voltages: Dict[str, PolyphaseSpectrum]
    currents: Dict[str, PolyphaseSpectrum]
    node_voltages: Dict[str, PolyphaseSpectrum]
    element_currents: Dict[str, PolyphaseSpectrum]
    converged: bool
    iterations: int
    residual_history: List[float] = field(default_factory=list)
    steps: List[float] = field(default_factory=list)
    final_residual: float = np.nan
    x: Optional[np.ndarray] = None
    solve_time: float = 0.0

    def to_frame(self, quantity: str = "voltage", nodes: Optional[Sequence[str]] = None) -> pd.DataFrame:
        """
        Spectra as rows (node, phase, h, mag_pu, phase_deg) for orders 1..h_max.

        Args:
            quantity (str): "voltage" (all nodes) or "current" (resource ports)
            nodes: Optional subset of nodes
        """
        if quantity == "voltage":
            spectra, scale = self.node_voltages, self.base.voltage_scale
        elif quantity == "current":
            spectra, scale = self.currents, self.base.current_scale
        else:
            raise ValueError(f"unknown quantity '{quantity}'")
        return spectra_frame(spectra, scale, nodes)

    def residuals_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"iteration": np.arange(len(self.residual_history)),
                             "residual_inf_pu": self.residual_history,
                             "step": self.steps})

    def node_current(self, node: str) -> Optional[PolyphaseSpectrum]:
        """Resource current at a port node, else the summed load and substation currents there."""
        if node in self.currents:
            return self.currents[node]
        return self.element_currents.get(node)

    def sequence_ratios(self, nodes: Optional[Sequence[str]] = None, h: int = 1) -> pd.DataFrame:
        """Negative- and homopolar-to-positive sequence ratios in % at order h."""
        nodes = list(nodes) if nodes is not None else [
            n for n in self.node_voltages if self.node_current(n) is not None]
        rows = []
        for node in nodes:
            v_pos, v_neg, v_zero = sequence_decompose(self.node_voltages[node], h)
            current = self.node_current(node)
            row = {"node": node,
                   "V_neg_pct": _ratio(v_neg, v_pos),
                   "V_zero_pct": _ratio(v_zero, v_pos)}
            if current is not None:
                i_pos, i_neg, i_zero = sequence_decompose(current, h)
                row.update(I_neg_pct=_ratio(i_neg, i_pos), I_zero_pct=_ratio(i_zero, i_pos))
            else:
                row.update(I_neg_pct=np.nan, I_zero_pct=np.nan)
            rows.append(row)
        return pd.DataFrame(rows, columns=["node", "V_neg_pct", "V_zero_pct", "I_neg_pct", "I_zero_pct"])


def _ratio(part: complex, reference: complex) -> float:
    return 100.0 * abs(part) / abs(reference) if abs(reference) > 0 else np.nan


def spectra_frame(spectra: Dict[str, PolyphaseSpectrum], scale: float,
                  nodes: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Tabulate spectra in the (node, phase, h, mag_pu, phase_deg) layout."""
    rows = []
    for node in (nodes if nodes is not None else list(spectra)):
        positive = spectra[node].positive()
        for p, phase in enumerate("ABC"):
            for k, value in enumerate(positive[p]):
                rows.append((node, phase, k + 1, scale * abs(value), np.degrees(np.angle(value))))
    return pd.DataFrame(rows, columns=["node", "phase", "h", "mag_pu", "phase_deg"])


@dataclass(frozen=True)
class _Port:
    node: str
    kind: str
    response: HarmonicResponse
    in_scale: float   # SI -> p.u. of the unknown
    out_scale: float  # SI -> p.u. of the residual


def _full_lifted(positive: np.ndarray, h_max: int) -> np.ndarray:
    """(h_max, 3) positive orders -> harmonic-major lifted vector over -h_max..h_max."""
    coeffs = np.concatenate([np.conj(positive[::-1]), np.zeros((1, 3)), positive], axis=0)
    return coeffs.reshape(-1)


def random_init(seed: Optional[int], sp: SpectralParams, n_ports: int,
                mag_range: Tuple[float, float] = (0.0, 10.0),
                phase_range: Tuple[float, float] = (0.0, 2.0 * np.pi)) -> np.ndarray:
    """
    Random initial point in p.u.: at every port and order, a superposition of
    positive, negative and homopolar sequences with uniform magnitudes and phases.
    """
    rng = np.random.default_rng(seed)
    values = np.zeros((n_ports, sp.h_max, 3), dtype=complex)
    for p in range(n_ports):
        for k in range(sp.h_max):
            mags = rng.uniform(mag_range[0], mag_range[1], 3)
            phases = rng.uniform(phase_range[0], phase_range[1], 3)
            pos, neg, zero = mags * np.exp(1j * phases)
            values[p, k] = sequence_compose(pos, neg, zero)
    return _pack(values)


def _pack(values: np.ndarray) -> np.ndarray:
    return np.stack([values.real, values.imag], axis=-1).reshape(-1)


def _unpack(x: np.ndarray, n_ports: int, h_max: int) -> np.ndarray:
    pairs = np.asarray(x, dtype=float).reshape(n_ports, h_max, 3, 2)
    return pairs[..., 0] + 1j * pairs[..., 1]


def factorize_jacobian(J: np.ndarray, iteration: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    LU factors of a Newton Jacobian.

    Raises:
        SingularJacobianError: If J cannot be factorised or its reciprocal
            condition number is at round-off level
    """
    try:
        lu = lu_factor(J, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise SingularJacobianError("Jacobian could not be factorised", iteration) from exc
    gecon, = get_lapack_funcs(("gecon",), (lu[0],))
    rcond, _ = gecon(lu[0], np.linalg.norm(J, 1), norm="1")
    if not rcond > J.shape[0] * np.finfo(float).eps:
        raise SingularJacobianError(f"Jacobian is numerically singular (rcond = {rcond:.2e})", iteration)
    return lu


class HarmonicPowerFlow:
    """
    Harmonic power-flow problem over a reduced grid and resource responses.

    Args:
        model (HybridPortModel): Reduced grid
        responses: Harmonic response per port node
        cfg (SolverConfig): Solver settings
        base (PerUnitBase): Per-unit base; defaults to the network base
    """

    def __init__(self, model: HybridPortModel, responses: Dict[str, HarmonicResponse],
                 cfg: Optional[SolverConfig] = None, base: Optional[PerUnitBase] = None):
        self.model = model
        self.sp = model.sp
        self.cfg = cfg or SolverConfig()
        self.base = base or model.net.base
        self.ports: List[_Port] = []
        for node in model.port_nodes:
            if node not in responses:
                raise ModelError(f"no harmonic response for the resource at {node}")
            response = responses[node]
            if response.sp != self.sp:
                raise ModelError(f"response at {node} uses different spectral parameters")
            if node in model.following_nodes:
                kind, in_scale, out_scale = FOLLOWING, self.base.voltage_scale, self.base.current_scale
            else:
                kind, in_scale, out_scale = FORMING, self.base.current_scale, self.base.voltage_scale
            if response.kind != kind:
                raise ModelError(f"resource at {node} is {response.kind}, port expects {kind}")
            self.ports.append(_Port(node, kind, response, in_scale, out_scale))
        self._n_G = len(model.following_nodes)
        self._in_scale = np.array([p.in_scale for p in self.ports])
        self._out_scale = np.array([p.out_scale for p in self.ports])

    @property
    def n_ports(self) -> int:
        return len(self.ports)

    @property
    def n_unknowns(self) -> int:
        return self.n_ports * self.sp.h_max * 6

    def to_si(self, x: np.ndarray) -> np.ndarray:
        return _unpack(x, self.n_ports, self.sp.h_max) / self._in_scale[:, None, None]

    def flat_init(self) -> np.ndarray:
        values = np.zeros((self.n_ports, self.sp.h_max, 3), dtype=complex)
        for p, port in enumerate(self.ports):
            if port.kind == FOLLOWING:
                values[p, 0] = sequence_compose(1.0, 0.0, 0.0)
        return _pack(values)

    def initial_point(self) -> np.ndarray:
        if self.cfg.init == RANDOM:
            return random_init(self.cfg.seed, self.sp, self.n_ports,
                               self.cfg.mag_range, self.cfg.phase_range)
        return self.flat_init()

    def _resource_output(self, p: int, values: np.ndarray) -> np.ndarray:
        lifted = self.ports[p].response.evaluate_lifted(_full_lifted(values, self.sp.h_max))
        return lifted.reshape(self.sp.n_orders, 3)[self.sp.h_max + 1:]

    def _grid_order(self, values: np.ndarray, k: int) -> np.ndarray:
        g = self._n_G
        I_G, V_F = self.model.grid_response(k + 1, values[:g, k].reshape(-1), values[g:, k].reshape(-1))
        return np.concatenate([I_G, V_F]).reshape(self.n_ports, 3)

    def _evaluate(self, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        resource = np.stack([self._resource_output(p, values[p]) for p in range(self.n_ports)])
        grid = np.stack([self._grid_order(values, k) for k in range(self.sp.h_max)], axis=1)
        return grid, resource

    def _scaled(self, difference: np.ndarray) -> np.ndarray:
        return _pack(difference * self._out_scale[:, None, None])

    def residual(self, x: np.ndarray) -> np.ndarray:
        """Real residual vector in p.u. (grid output minus resource output)."""
        grid, resource = self._evaluate(self.to_si(x))
        return self._scaled(grid - resource)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        """
        Central finite-difference Jacobian. Perturbing one unknown only
        changes the grid relation at its order and the response of its own
        resource, so only those are re-evaluated.
        """
        values = self.to_si(x)
        delta = self.cfg.fd_step
        n = self.n_unknowns
        J = np.empty((n, n))
        for j in range(n):
            p, k, phase, part = np.unravel_index(j, (self.n_ports, self.sp.h_max, 3, 2))
            step = delta / self._in_scale[p] * (1.0 if part == 0 else 1j)
            plus, minus = values.copy(), values.copy()
            plus[p, k, phase] += step
            minus[p, k, phase] -= step
            change = np.zeros((self.n_ports, self.sp.h_max, 3), dtype=complex)
            change[:, k] = self._grid_order(plus, k) - self._grid_order(minus, k)
            change[p] -= self._resource_output(p, plus[p]) - self._resource_output(p, minus[p])
            J[:, j] = self._scaled(change) / (2.0 * delta)
        return J

    def solve(self, x0: Optional[np.ndarray] = None) -> HpfSolution:
        """
        Damped Newton iteration from x0 (default: configured initialisation).

        Returns an HpfSolution with converged=False when max_iter is reached.

        Raises:
            SingularJacobianError: If the Jacobian is singular
        """
        start = time.perf_counter()
        cfg = self.cfg
        x = self.initial_point() if x0 is None else np.asarray(x0, dtype=float).copy()
        r = self.residual(x)
        norm = float(np.max(np.abs(r), initial=0.0))
        history, steps = [norm], [0.0]
        logger.debug("iteration 0: |r|_inf = %.3e p.u.", norm)

        iteration = 0
        while norm > cfg.tol and iteration < cfg.max_iter:
            iteration += 1
            lu = factorize_jacobian(self.jacobian(x), iteration)
            dx = -lu_solve(lu, r)

            step = 1.0
            for _ in range(cfg.max_halvings + 1):
                x_try = x + step * dx
                r_try = self.residual(x_try)
                norm_try = float(np.max(np.abs(r_try), initial=0.0))
                if norm_try < norm:
                    break
                step *= 0.5
            else:
                step *= 2.0
                logger.warning("iteration %d: step halving exhausted, taking step %.4g", iteration, step)
            previous = norm
            x, r, norm = x_try, r_try, norm_try
            history.append(norm)
            steps.append(step)
            logger.debug("iteration %d: |r|_inf = %.3e p.u., step %.4g", iteration, norm, step)
            if previous > 0 and norm > 0:
                logger.debug("iteration %d: r_k / r_(k-1)^2 = %.3e", iteration, norm / previous ** 2)

        converged = norm <= cfg.tol
        elapsed = time.perf_counter() - start
        if converged:
            logger.info("Converged in %d iterations, |r|_inf = %.3e p.u. (%.3f s)", iteration, norm, elapsed)
        else:
            logger.warning("No convergence after %d iterations, |r|_inf = %.3e p.u.", iteration, norm)
        solution = self._solution(x, converged, iteration, history, steps)
        solution.solve_time = elapsed
        return solution

    def _solution(self, x, converged, iterations, history, steps) -> HpfSolution:
        values = self.to_si(x)
        grid, resource = self._evaluate(values)
        final = float(np.max(np.abs(self._scaled(grid - resource)), initial=0.0))

        voltages, currents = {}, {}
        for p, port in enumerate(self.ports):
            if port.kind == FOLLOWING:
                v, i = values[p], resource[p]
            else:
                v, i = grid[p], values[p]
            voltages[port.node] = PolyphaseSpectrum.from_positive(self.sp, v.T)
            currents[port.node] = PolyphaseSpectrum.from_positive(self.sp, i.T)

        net = self.model.net
        node_positive = np.zeros((len(net.nodes), self.sp.h_max, 3), dtype=complex)
        element_positive: Dict[str, np.ndarray] = {}
        index = net.node_index
        for k in range(self.sp.h_max):
            h = k + 1
            v_ports = np.concatenate([voltages[n].coeff(h) for n in self.model.port_nodes]) \
                if self.model.port_nodes else np.zeros(0, dtype=complex)
            v_all = self.model.recover_nodes(h, v_ports)
            node_positive[:, k] = v_all.reshape(-1, 3)
            for name, current in self.model.element_currents(h, v_all).items():
                element_positive.setdefault(name, np.zeros((self.sp.h_max, 3), dtype=complex))[k] = current

        node_voltages = {n: PolyphaseSpectrum.from_positive(self.sp, node_positive[index[n]].T)
                         for n in net.nodes}
        # passive elements sharing a node add up to one node current
        per_node: Dict[str, np.ndarray] = {}
        owners = [(load.node, load.name) for load in net.loads]
        if net.thevenin is not None:
            owners.append((net.thevenin.node, SUBSTATION))
        for node, name in owners:
            per_node[node] = per_node.get(node, 0.0) + element_positive[name]
        element_currents = {node: PolyphaseSpectrum.from_positive(self.sp, positive.T)
                            for node, positive in per_node.items()}

        return HpfSolution(sp=self.sp, base=self.base, port_nodes=list(self.model.port_nodes),
                           voltages=voltages, currents=currents, node_voltages=node_voltages,
                           element_currents=element_currents, converged=converged,
                           iterations=iterations, residual_history=history, steps=steps,
                           final_residual=final, x=x)


def residual(x: np.ndarray, model: HybridPortModel, responses: Dict[str, HarmonicResponse],
             base: Optional[PerUnitBase] = None) -> np.ndarray:
    return HarmonicPowerFlow(model, responses, base=base).residual(x)


def solve(model: HybridPortModel, responses: Dict[str, HarmonicResponse],
          cfg: Optional[SolverConfig] = None, base: Optional[PerUnitBase] = None,
          x0: Optional[np.ndarray] = None) -> HpfSolution:
    return HarmonicPowerFlow(model, responses, cfg, base).solve(x0)
