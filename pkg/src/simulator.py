"""
Time-domain engine for averaged resource and grid models.

The grid and the resource filters form one linear circuit. Its states are
the branch currents (lines, loads, substation, resource inductors) and the
voltages of nodes that carry capacitance. Nodes without capacitance are
eliminated through the differentiated current balance. Resource controllers
run in their DQ frames and drive the actuator branches as voltage sources.
The system is integrated with fixed-step RK4 until steady state.
"""

import logging
import time
from collections import deque
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import trapezoid
from scipy.linalg import block_diag

from .cider_resources import FOLLOWING, FORMING, compose_controller
from .exceptions import ModelError, SimulationError, TopologyError
from .harmonic_core import FORTESCUE_INV, PolyphaseSpectrum, SpectralParams
from .network_model import (NetworkSpec, line_phase_matrices, load_branch_parameters,
                            thevenin_branch_parameters, thevenin_source_spectrum)
from .spectral_analysis import dft_extract_polyphase, samples_per_period

logger = logging.getLogger(__name__)

SHIFTS = np.array([0.0, -2.0 * np.pi / 3.0, 2.0 * np.pi / 3.0])
DQ_GAIN = np.sqrt(2.0 / 3.0)


@dataclass(frozen=True)
class TdsConfig:
    """
    Time-domain settings.

    Attributes:
        dt (float): Sample step in s (integration sub-steps are chosen automatically)
        t_end (float): Maximum simulated time in s
        steady_state_window (int): Periods kept for the DFT
        steady_detect_tol (float): Relative cycle-to-cycle RMS change regarded as steady
        min_time (float): Earliest time at which steady state may be declared
        ramp_time (float): Ramp-in time of the power setpoints of following resources
        vd_floor (float): Lower bound of v_D in the reference law, fraction of sqrt(3)*V_b
        stability_limit (float): Bound on spectral radius times integration step
        divergence_limit (float): State magnitude regarded as a blow-up
    """
    dt: float = 2e-6
    t_end: float = 3.0
    steady_state_window: int = 5
    steady_detect_tol: float = 1e-7
    min_time: float = 0.5
    ramp_time: float = 0.05
    vd_floor: float = 0.1
    stability_limit: float = 2.5
    divergence_limit: float = 1e7

    def __post_init__(self):
        if not (self.dt > 0 and self.t_end > 0):
            raise ModelError("dt and t_end must be positive")
        if self.steady_state_window < 1:
            raise ModelError("steady_state_window must be >= 1 period")
        if not self.steady_detect_tol > 0:
            raise ModelError("steady_detect_tol must be positive")
        if self.min_time < 0 or self.ramp_time < 0:
            raise ModelError("min_time and ramp_time must be >= 0")

    def validate(self, sp: SpectralParams) -> int:
        """Check the step against the harmonic set; returns samples per period."""
        limit = 1.0 / (20.0 * sp.f1 * sp.h_max)
        if self.dt > limit * (1.0 + 1e-12):
            raise ModelError(f"dt = {self.dt:g} s is too coarse for h_max = {sp.h_max} (max {limit:g} s)")
        spp = samples_per_period(sp, self.dt)
        if self.t_end < self.steady_state_window * sp.period:
            raise ModelError("t_end is shorter than the steady-state window")
        return spp


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_integrate(f: Callable[[float, np.ndarray], np.ndarray], y0, t0: float, dt: float,
                  n_steps: int) -> Tuple[np.ndarray, np.ndarray]:
    """Fixed-step RK4; returns (times, states) including the initial point."""
    y = np.asarray(y0, dtype=float)
    times = t0 + dt * np.arange(n_steps + 1)
    states = np.empty((n_steps + 1,) + y.shape)
    states[0] = y
    for k in range(n_steps):
        y = rk4_step(f, times[k], y, dt)
        states[k + 1] = y
    return times, states


class SimulationResults:
    """Ring buffer of sampled node voltages, resource currents and circuit states."""

    def __init__(self, nodes: List[str], resources: List[str], capacity: int, dt: float,
                 n_states: int = 0):
        self.nodes = list(nodes)
        self.resources = list(resources)
        self.capacity = int(capacity)
        self.dt = dt
        self._time = np.zeros(self.capacity)
        self._voltages = np.zeros((self.capacity, len(self.nodes), 3))
        self._currents = np.zeros((self.capacity, len(self.resources), 3))
        self._states = np.zeros((self.capacity, n_states))
        self._count = 0

        self.steady_state = False
        self.t_final = 0.0
        self.substeps = 1
        self.window_wall_time = np.nan
        self.dft_wall_time = 0.0
        self.final_state: Optional[np.ndarray] = None

    def add_data_point(self, t: float, voltages: np.ndarray, currents: np.ndarray,
                       state: Optional[np.ndarray] = None) -> None:
        k = self._count % self.capacity
        self._time[k] = t
        self._voltages[k] = voltages
        self._currents[k] = currents
        if state is not None:
            self._states[k] = state
        self._count += 1

    def __len__(self) -> int:
        return min(self._count, self.capacity)

    def _ordered(self, array: np.ndarray) -> np.ndarray:
        n = len(self)
        if self._count <= self.capacity:
            return array[:n]
        k = self._count % self.capacity
        return np.concatenate([array[k:], array[:k]])

    @property
    def time(self) -> np.ndarray:
        return self._ordered(self._time)

    @property
    def states(self) -> np.ndarray:
        return self._ordered(self._states)

    def voltage_waveform(self, node: str) -> np.ndarray:
        return self._ordered(self._voltages)[:, self.nodes.index(node)]

    def current_waveform(self, node: str) -> np.ndarray:
        return self._ordered(self._currents)[:, self.resources.index(node)]

    def last_cycle_rms(self, spp: int) -> Tuple[np.ndarray, np.ndarray]:
        """Per-channel RMS over the last spp samples: (voltages, currents)."""
        v = self._ordered(self._voltages)[-spp:]
        i = self._ordered(self._currents)[-spp:]
        return np.sqrt(np.mean(v ** 2, axis=0)), np.sqrt(np.mean(i ** 2, axis=0))

    def _spectra(self, waveforms: np.ndarray, names: List[str], sp: SpectralParams,
                 window_periods: int) -> Dict[str, PolyphaseSpectrum]:
        start = time.perf_counter()
        n = samples_per_period(sp, self.dt) * window_periods
        t_start = self.time[-n]
        spectra = {name: dft_extract_polyphase(waveforms[:, j], sp, self.dt, window_periods, t_start)
                   for j, name in enumerate(names)}
        self.dft_wall_time += time.perf_counter() - start
        return spectra

    def node_spectra(self, sp: SpectralParams, window_periods: int = 5) -> Dict[str, PolyphaseSpectrum]:
        return self._spectra(self._ordered(self._voltages), self.nodes, sp, window_periods)

    def current_spectra(self, sp: SpectralParams, window_periods: int = 5) -> Dict[str, PolyphaseSpectrum]:
        return self._spectra(self._ordered(self._currents), self.resources, sp, window_periods)

    def get_summary(self) -> Dict[str, float]:
        """Run statistics and RMS of the last recorded period."""
        if not len(self):
            return {}
        summary = {"t_final": self.t_final, "steady_state": self.steady_state,
                   "samples": len(self), "substeps": self.substeps,
                   "window_wall_time": self.window_wall_time}
        v = self._ordered(self._voltages)
        for j, node in enumerate(self.nodes):
            summary[f"V_rms_{node}"] = float(np.sqrt(np.mean(v[:, j] ** 2)))
        return summary

    def to_frame(self) -> pd.DataFrame:
        columns = {"t": self.time}
        v = self._ordered(self._voltages)
        i = self._ordered(self._currents)
        for j, node in enumerate(self.nodes):
            for p, phase in enumerate("ABC"):
                columns[f"V_{node}_{phase}"] = v[:, j, p]
        for j, node in enumerate(self.resources):
            for p, phase in enumerate("ABC"):
                columns[f"I_{node}_{phase}"] = i[:, j, p]
        return pd.DataFrame(columns)

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.12e")


class TimeDomainSimulator:
    """
    Averaged time-domain model of a network with resources.

    Args:
        net (NetworkSpec): Grid and resources
        sp (SpectralParams): Fundamental frequency and harmonic set of the study
        cfg (TdsConfig): Integration settings
    """

    def __init__(self, net: NetworkSpec, sp: SpectralParams, cfg: Optional[TdsConfig] = None):
        self.net = net
        self.sp = sp
        self.cfg = cfg or TdsConfig()
        self.spp = self.cfg.validate(sp)
        self.omega1 = sp.omega1

        self._n_v = 0
        self._n_i = 0
        self._node_vars: Dict[str, np.ndarray] = {}
        self._C: Dict[str, np.ndarray] = {}
        self._G: Dict[str, np.ndarray] = {}
        self._branch_R: List[np.ndarray] = []
        self._branch_L: List[np.ndarray] = []
        self._terminals: List[Tuple[np.ndarray, List[Tuple[np.ndarray, np.ndarray]]]] = []

        for node in net.nodes:
            self._add_node(node)
        self._build_grid()
        self._build_resources()
        self._assemble()
        self._build_controllers()
        self.substeps = self._choose_substeps()
        logger.info("Time-domain model: %d states (%d branch currents, %d node voltages, "
                    "%d controller states), %d sub-steps per sample",
                    self.n_states, self._n_i, len(self._c_vars), self._n_xi, self.substeps)

    # Circuit construction

    def _add_node(self, name: str) -> np.ndarray:
        idx = np.arange(self._n_v, self._n_v + 3)
        self._n_v += 3
        self._node_vars[name] = idx
        self._C[name] = np.zeros((3, 3))
        self._G[name] = np.zeros((3, 3))
        return idx

    def _add_branch(self, R: np.ndarray, L: np.ndarray,
                    terminals: List[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
        """Branch equation L di/dt = -M^T v + e - R i; terminal matrices give M rows."""
        m = R.shape[0]
        idx = np.arange(self._n_i, self._n_i + m)
        self._n_i += m
        self._branch_R.append(np.atleast_2d(R))
        self._branch_L.append(np.atleast_2d(L))
        self._terminals.append((idx, terminals))
        return idx

    def _build_grid(self) -> None:
        net = self.net
        eye = np.eye(3)
        for line in net.lines:
            R, L, C = line_phase_matrices(line)
            self._C[line.from_node] += C / 2.0
            self._C[line.to_node] += C / 2.0
            self._add_branch(R, L, [(self._node_vars[line.from_node], -eye),
                                    (self._node_vars[line.to_node], eye)])

        load_branches = []
        for load in net.loads:
            R, L = load_branch_parameters(load, net.base.V_b, net.f1)
            closed = np.isfinite(R)
            if not np.any(closed):
                continue
            if np.any(L[closed] <= 0):
                raise ModelError(f"{load.name}: purely resistive loads need a node capacitance")
            m = int(np.sum(closed))
            load_branches.append(self._add_branch(np.diag(R[closed]), np.diag(L[closed]),
                                                  [(self._node_vars[load.node][closed], -np.eye(m))]))
        self._load_idx = np.concatenate(load_branches) if load_branches else np.zeros(0, dtype=int)

        self._te_idx = np.zeros(0, dtype=int)
        self._te_positive = np.zeros((3, 0), dtype=complex)
        if net.thevenin is not None:
            te = net.thevenin
            R, L = thevenin_branch_parameters(te, net.f1)
            self._te_idx = self._add_branch(R * eye, L * eye, [(self._node_vars[te.node], eye)])
            self._te_positive = thevenin_source_spectrum(te, self.sp).positive()
        self._h_orders = self.sp.positive_orders()

    def _build_resources(self) -> None:
        eye = np.eye(3)
        self._resource_info = []
        for r in self.net.resources:
            spec = r.cider
            alpha, phi = spec.filters[0], spec.filters[1]
            node_vars = self._node_vars[r.node]
            if spec.kind == FORMING:
                self._C[r.node] += phi.series_value * eye
                self._G[r.node] += phi.loss_value * eye
                act = self._add_branch(alpha.loss_value * eye, alpha.series_value * eye, [(node_vars, eye)])
                self._resource_info.append({"attachment": r, "act": act, "phi": r.node, "gamma": None})
            else:
                phi_name = f"{r.name}:phi"
                phi_vars = self._add_node(phi_name)
                self._C[phi_name] += phi.series_value * eye
                self._G[phi_name] += phi.loss_value * eye
                gamma = spec.filters[2]
                act = self._add_branch(alpha.loss_value * eye, alpha.series_value * eye, [(phi_vars, eye)])
                gam = self._add_branch(gamma.loss_value * eye, gamma.series_value * eye,
                                       [(phi_vars, -eye), (node_vars, spec.coupling.matrix)])
                self._resource_info.append({"attachment": r, "act": act, "phi": phi_name, "gamma": gam})

    def _assemble(self) -> None:
        n_v, n_i = self._n_v, self._n_i
        M = np.zeros((n_v, n_i))
        for idx, terminals in self._terminals:
            for rows, matrix in terminals:
                M[np.ix_(rows, idx)] += matrix
        L = block_diag(*self._branch_L)
        R = block_diag(*self._branch_R)

        C_full = np.zeros((n_v, n_v))
        G_full = np.zeros((n_v, n_v))
        c_vars, a_vars = [], []
        for name, idx in self._node_vars.items():
            C_block, G_block = self._C[name], self._G[name]
            C_full[np.ix_(idx, idx)] = C_block
            G_full[np.ix_(idx, idx)] = G_block
            if not np.any(C_block):
                if np.any(G_block):
                    raise ModelError(f"node {name}: conductance without capacitance is not supported")
                a_vars.extend(idx)
            elif np.min(np.linalg.eigvalsh(0.5 * (C_block + C_block.T))) <= 0:
                raise ModelError(f"node {name}: capacitance matrix is singular")
            else:
                c_vars.extend(idx)
        c_vars = np.array(c_vars, dtype=int)
        a_vars = np.array(a_vars, dtype=int)
        self._c_vars, self._a_vars = c_vars, a_vars
        self._R, self._L, self._C_full, self._G_full = R, L, C_full, G_full

        L_inv = np.linalg.inv(L)
        M_c, M_a = M[c_vars], M[a_vars]
        if len(a_vars):
            try:
                K_inv = np.linalg.inv(M_a @ L_inv @ M_a.T)
            except np.linalg.LinAlgError as exc:
                floating = [n for n, idx in self._node_vars.items() if set(idx) <= set(a_vars)]
                raise TopologyError("nodes without capacitance have no inductive path", floating) from exc
            P_a = K_inv @ M_a @ L_inv
            Q = np.eye(n_i) - M_a.T @ P_a
        else:
            P_a = np.zeros((0, n_i))
            Q = np.eye(n_i)
        LQ = L_inv @ Q

        C_cc = C_full[np.ix_(c_vars, c_vars)]
        G_cc = G_full[np.ix_(c_vars, c_vars)]
        C_inv = np.linalg.inv(C_cc) if len(c_vars) else np.zeros((0, 0))
        n_c = len(c_vars)
        n_z = n_i + n_c
        self.n_z = n_z

        self._A_z = np.block([[-LQ @ R, -LQ @ M_c.T],
                              [C_inv @ M_c, -C_inv @ G_cc]])

        act_all = np.concatenate([info["act"] for info in self._resource_info]) \
            if self._resource_info else np.zeros(0, dtype=int)
        if len(a_vars) and np.any(np.abs(P_a[:, act_all]) > 1e-12 * max(1.0, np.max(np.abs(P_a)))):
            raise ModelError("actuator branches must end on nodes with capacitance")
        self._B_te = np.vstack([LQ[:, self._te_idx], np.zeros((n_c, len(self._te_idx)))]) \
            if len(self._te_idx) else np.zeros((n_z, 0))
        self._B_act = np.vstack([LQ[:, act_all], np.zeros((n_c, len(act_all)))]) \
            if len(act_all) else np.zeros((n_z, 0))

        # node voltage readout v = V_z z + V_e e_te
        V_z = np.zeros((n_v, n_z))
        V_e = np.zeros((n_v, len(self._te_idx)))
        V_z[c_vars, n_i + np.arange(n_c)] = 1.0
        if len(a_vars):
            V_z[a_vars] = np.hstack([-P_a @ R, -P_a @ M_c.T])
            if len(self._te_idx):
                V_e[a_vars] = P_a[:, self._te_idx]
        self._V_z, self._V_e = V_z, V_e
        # time derivative of capacitive node voltages
        self._Vdot_z = np.hstack([C_inv @ M_c, -C_inv @ G_cc])
        self._c_row = {int(var): k for k, var in enumerate(c_vars)}

    def _select_i(self, idx: np.ndarray) -> np.ndarray:
        rows = np.zeros((len(idx), self.n_z))
        rows[np.arange(len(idx)), idx] = 1.0
        return rows

    def _node_rows(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        idx = self._node_vars[name]
        return self._V_z[idx], self._V_e[idx]

    def _build_controllers(self) -> None:
        n_te = len(self._te_idx)
        zero_e = np.zeros((3, n_te))
        meas_z, meas_e, current_z = [], [], []
        trip_owner = []
        blocks = {m: [] for m in "ABCDEF"}
        w_const, follow = [], []
        self._theta0 = np.zeros(len(self._resource_info))
        u_offset = 0

        for c, info in enumerate(self._resource_info):
            r = info["attachment"]
            spec = r.cider
            i_alpha = self._select_i(info["act"])
            v_node_z, v_node_e = self._node_rows(r.node)
            if spec.kind == FORMING:
                C_phi = spec.filters[1].series_value
                G_phi = spec.filters[1].loss_value
                rows = [self._c_row[int(v)] for v in self._node_vars[r.node]]
                i_out = i_alpha - C_phi * self._Vdot_z[rows] - G_phi * v_node_z
                triples = [(i_alpha, zero_e), (v_node_z, v_node_e), (i_out, zero_e)]
                w_const.extend([np.sqrt(3.0) * spec.setpoint.V_sigma, 0.0])
                self._theta0[c] = spec.theta0
            else:
                P = spec.coupling.matrix
                v_phi_z, v_phi_e = self._node_rows(info["phi"])
                i_gamma = self._select_i(info["gamma"])
                i_out = P @ i_gamma
                triples = [(i_alpha, zero_e), (v_phi_z, v_phi_e), (i_gamma, zero_e),
                           (P @ v_node_z, P @ v_node_e)]
                w_const.extend([0.0, 0.0])
                vd_index = u_offset + 2 * (len(triples) - 1)
                follow.append((c, vd_index, spec.setpoint.P_sigma, spec.setpoint.Q_sigma))
            current_z.append(i_out)
            for z_rows, e_rows in triples:
                meas_z.append(z_rows)
                meas_e.append(e_rows)
                trip_owner.append(c)
            u_offset += 2 * len(triples)

            k = compose_controller(spec)
            for m in "ABCDEF":
                blocks[m].append(getattr(k, m))

        n_res = len(self._resource_info)
        self._M_z = np.vstack(meas_z) if meas_z else np.zeros((0, self.n_z))
        self._M_e = np.vstack(meas_e) if meas_e else np.zeros((0, n_te))
        self._I_z = np.vstack(current_z) if current_z else np.zeros((0, self.n_z))
        self._trip_owner = np.array(trip_owner, dtype=int)
        if n_res:
            self._Ak, self._Bk, self._Ck, self._Dk, self._Ek, self._Fk = (
                block_diag(*blocks[m]) for m in "ABCDEF")
        else:
            self._Ak = self._Bk = self._Ck = self._Dk = self._Ek = self._Fk = np.zeros((0, 0))
        self._n_xi = self._Ak.shape[0]
        self._w_const = np.array(w_const, dtype=float)
        self._follow = follow
        self._follow_w = np.array([2 * c for c, _, _, _ in follow], dtype=int)
        self._follow_vd = np.array([v for _, v, _, _ in follow], dtype=int)
        self._follow_P = np.array([p for _, _, p, _ in follow], dtype=float)
        self._follow_Q = np.array([q for _, _, _, q in follow], dtype=float)
        self._vd_floor = self.cfg.vd_floor * np.sqrt(3.0) * self.net.base.V_b

    @property
    def n_states(self) -> int:
        return self.n_z + self._n_xi

    # Dynamics

    def _te_emf(self, t: float) -> np.ndarray:
        if not len(self._te_idx):
            return np.zeros(0)
        phasors = np.exp(1j * self.omega1 * t * self._h_orders)
        return 2.0 * np.real(self._te_positive @ phasors)

    def _reference(self, u_dq: np.ndarray, t: float) -> np.ndarray:
        w = self._w_const.copy()
        if len(self._follow_w):
            ramp = 1.0 if self.cfg.ramp_time <= 0 else min(1.0, t / self.cfg.ramp_time)
            scale = ramp / np.maximum(u_dq[self._follow_vd], self._vd_floor)
            w[self._follow_w] = self._follow_P * scale
            w[self._follow_w + 1] = self._follow_Q * scale
        return w

    def _controller_outputs(self, t: float, state: np.ndarray, e_te: np.ndarray,
                            frozen_w: Optional[np.ndarray] = None,
                            theta_time: Optional[float] = None
                            ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Actuator voltages (abc per resource), DQ measurements and references."""
        z = state[:self.n_z]
        xi = state[self.n_z:]
        angle_time = t if theta_time is None else theta_time
        theta = self.omega1 * angle_time + self._theta0

        u_abc = (self._M_z @ z + self._M_e @ e_te).reshape(-1, 3)
        trip_angles = theta[self._trip_owner][:, None] + SHIFTS
        d = DQ_GAIN * np.sum(np.cos(trip_angles) * u_abc, axis=1)
        q = -DQ_GAIN * np.sum(np.sin(trip_angles) * u_abc, axis=1)
        u_dq = np.column_stack([d, q]).reshape(-1)

        w = self._reference(u_dq, t) if frozen_w is None else frozen_w
        y = (self._Ck @ xi + self._Dk @ u_dq + self._Fk @ w).reshape(-1, 2)
        angles = theta[:, None] + SHIFTS
        e_act = DQ_GAIN * (np.cos(angles) * y[:, 0:1] - np.sin(angles) * y[:, 1:2])
        return e_act, u_dq, w

    def _derivative(self, t: float, state: np.ndarray, frozen_w: Optional[np.ndarray] = None,
                    with_source: bool = True, theta_time: Optional[float] = None) -> np.ndarray:
        z = state[:self.n_z]
        xi = state[self.n_z:]
        e_te = self._te_emf(t) if with_source else np.zeros(len(self._te_idx))
        e_act, u_dq, w = self._controller_outputs(t, state, e_te, frozen_w, theta_time)

        dz = self._A_z @ z + self._B_act @ e_act.reshape(-1)
        if len(e_te):
            dz += self._B_te @ e_te
        dxi = self._Ak @ xi + self._Bk @ u_dq + self._Ek @ w
        return np.concatenate([dz, dxi])

    def _choose_substeps(self) -> int:
        """Sub-steps per sample so that RK4 stays stable for the frozen-angle closed loop."""
        n = self.n_states
        frozen = np.zeros(len(self._w_const))
        J = np.empty((n, n))
        for j in range(n):
            unit = np.zeros(n)
            unit[j] = 1.0
            J[:, j] = self._derivative(0.0, unit, frozen_w=frozen, with_source=False, theta_time=0.0)
        rho = float(np.max(np.abs(np.linalg.eigvals(J)))) if n else 0.0
        substeps = max(1, int(np.ceil(rho * self.cfg.dt / self.cfg.stability_limit)))
        logger.debug("Spectral radius %.4g 1/s -> %d sub-steps of %.4g s", rho, substeps,
                     self.cfg.dt / substeps)
        return substeps

    def _record(self, results: SimulationResults, t: float, state: np.ndarray) -> None:
        z = state[:self.n_z]
        v = self._V_z @ z
        if len(self._te_idx):
            v = v + self._V_e @ self._te_emf(t)
        voltages = np.stack([v[self._node_vars[n]] for n in self.net.nodes])
        currents = (self._I_z @ z).reshape(-1, 3)
        results.add_data_point(t, voltages, currents, state)

    def _update_phase_lock(self, results: SimulationResults) -> None:
        """Lock following resources to the fundamental positive sequence of the last cycle."""
        if not self._follow:
            return
        times = results.time[-self.spp:]
        kernel = np.exp(-1j * self.omega1 * times) / self.spp
        for c, _, _, _ in self._follow:
            node = self._resource_info[c]["attachment"].node
            v = results.voltage_waveform(node)[-self.spp:]
            fundamental = kernel @ v
            positive = (FORTESCUE_INV @ fundamental)[1]
            if abs(positive) > 0:
                self._theta0[c] = float(np.angle(positive))

    def run(self) -> SimulationResults:
        """
        Integrate until steady state or t_end.

        Raises:
            SimulationError: If the state diverges
        """
        cfg = self.cfg
        window = cfg.steady_state_window * self.spp
        resource_nodes = [info["attachment"].node for info in self._resource_info]
        results = SimulationResults(self.net.nodes, resource_nodes, window, cfg.dt, self.n_states)
        results.substeps = self.substeps
        for c, _, _, _ in self._follow:
            self._theta0[c] = 0.0

        state = np.zeros(self.n_states)
        h = cfg.dt / self.substeps
        n_samples = int(round(cfg.t_end / cfg.dt))
        self._record(results, 0.0, state)

        cycle_walls = deque(maxlen=cfg.steady_state_window)
        cycle_start = time.perf_counter()
        previous_rms = None
        report_every = max(1, n_samples // 10)
        t = 0.0
        for k in range(1, n_samples + 1):
            t0 = (k - 1) * cfg.dt
            for s in range(self.substeps):
                state = rk4_step(self._derivative, t0 + s * h, state, h)
            t = k * cfg.dt
            if not np.all(np.isfinite(state)) or np.max(np.abs(state)) > cfg.divergence_limit:
                raise SimulationError("time-domain state diverged", t)
            self._record(results, t, state)

            if k % report_every == 0:
                logger.info("Simulated %.3f s of %.3f s", t, cfg.t_end)
            if k % self.spp:
                continue

            now = time.perf_counter()
            cycle_walls.append(now - cycle_start)
            cycle_start = now
            self._update_phase_lock(results)
            rms_v, rms_i = results.last_cycle_rms(self.spp)
            if previous_rms is not None and t >= cfg.min_time and k >= window:
                change = max(_relative_change(rms_v, previous_rms[0]),
                             _relative_change(rms_i, previous_rms[1]))
                if change < cfg.steady_detect_tol:
                    results.steady_state = True
                    logger.info("Steady state reached at t = %.4f s", t)
                    break
            previous_rms = (rms_v, rms_i)

        if not results.steady_state:
            logger.warning("Steady state not detected before t_end = %.3f s", t)
        results.t_final = t
        results.final_state = state
        results.window_wall_time = float(sum(cycle_walls))
        return results

    def energy_balance(self, results: SimulationResults, periods: int = 1) -> Dict[str, float]:
        """
        Energy bookkeeping over the last recorded periods, in joules.

        source is the work of the substation and actuator voltages, load the
        heat in load branches, loss the heat in lines, the substation
        impedance and resource filters, stored the change of inductor and
        capacitor energy. mismatch is the balance error relative to source.

        Raises:
            ModelError: If fewer samples than requested are recorded
        """
        n = self.spp * periods + 1
        if len(results) < n:
            raise ModelError(f"energy balance needs {n} samples, {len(results)} recorded")
        times = results.time[-n:]
        states = results.states[-n:]
        z = states[:, :self.n_z]
        i = z[:, :self._n_i]

        e_te = np.array([self._te_emf(t) for t in times]) if len(self._te_idx) \
            else np.zeros((n, 0))
        act_all = np.concatenate([info["act"] for info in self._resource_info]) \
            if self._resource_info else np.zeros(0, dtype=int)
        source_power = np.sum(e_te * i[:, self._te_idx], axis=1)
        if len(act_all):
            e_act = np.array([self._controller_outputs(t, s, e)[0].reshape(-1)
                              for t, s, e in zip(times, states, e_te)])
            source_power += np.sum(e_act * i[:, act_all], axis=1)

        v = z @ self._V_z.T + e_te @ self._V_e.T
        heat = i * (i @ self._R.T)
        load_power = np.sum(heat[:, self._load_idx], axis=1)
        loss_power = np.sum(heat, axis=1) - load_power + np.sum(v * (v @ self._G_full.T), axis=1)

        def stored(k: int) -> float:
            return 0.5 * float(i[k] @ self._L @ i[k] + v[k] @ self._C_full @ v[k])

        balance = {"source": float(trapezoid(source_power, times)),
                   "load": float(trapezoid(load_power, times)),
                   "loss": float(trapezoid(loss_power, times)),
                   "stored": stored(-1) - stored(0)}
        residual = balance["source"] - balance["load"] - balance["loss"] - balance["stored"]
        balance["mismatch"] = abs(residual) / max(abs(balance["source"]), np.finfo(float).tiny)
        logger.debug("Energy over %d period(s): %s", periods, balance)
        return balance


def _relative_change(current: np.ndarray, previous: np.ndarray) -> float:
    if current.size == 0:
        return 0.0
    scale = float(np.max(previous))
    if scale == 0.0:
        return 0.0 if float(np.max(current)) == 0.0 else np.inf
    return float(np.max(np.abs(current - previous))) / scale


def simulate(net: NetworkSpec, sp: SpectralParams, cfg: Optional[TdsConfig] = None) -> SimulationResults:
    return TimeDomainSimulator(net, sp, cfg).run()
