"""
Polyphase harmonic-domain grid model.

Nodes carry three phase voltages; the neutral is solidly grounded and
eliminated, so every element is a 3x3 phase-domain admittance. For every
harmonic order the nodal equations

    Y_h V_h = I_h + s_h

(I: currents injected by resources, s: Norton injection of the substation)
are reduced onto the resource ports. Following-resource ports take a
voltage and return the current the grid draws from them; forming-resource
ports take the injected current and return the terminal voltage.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .cider_resources import FOLLOWING, FORMING, CiderSpec
from .exceptions import ModelError, TopologyError
from .harmonic_core import PolyphaseSpectrum, SpectralParams, fortescue_to_phase

logger = logging.getLogger(__name__)

WYE_GROUNDED = "wye_grounded"
SUBSTATION = "substation"
Z_SC_CONSISTENCY_RTOL = 0.05
WEIGHT_SUM_ATOL = 0.015


@dataclass(frozen=True)
class PerUnitBase:
    """
    Per-unit base. Spectra are normalised as sqrt(2)*|X_h| / base, so a
    phase voltage of V_b RMS has a fundamental of 1.0 p.u.
    """
    P_b: float = 10e3
    V_b: float = 230.0

    def __post_init__(self):
        if not (self.P_b > 0 and self.V_b > 0):
            raise ModelError("per-unit base power and voltage must be positive")

    @property
    def I_b(self) -> float:
        return self.P_b / self.V_b

    @property
    def Z_b(self) -> float:
        return self.V_b / self.I_b

    @property
    def voltage_scale(self) -> float:
        """Factor from a complex voltage coefficient (V) to p.u."""
        return np.sqrt(2.0) / self.V_b

    @property
    def current_scale(self) -> float:
        return np.sqrt(2.0) / self.I_b


@dataclass(frozen=True)
class LineSpec:
    """
    Line section between two nodes from sequence parameters.

    Attributes:
        from_node, to_node (str): Terminal nodes
        length (float): Length in m
        seq_R: (R_pos, R_zero) in Ohm/km; R_neg = R_pos
        seq_L: (L_pos, L_zero) in H/km
        seq_C: (C_pos, C_zero) in F/km
        line_type (str): Name of the cable type (informational)
    """
    from_node: str
    to_node: str
    length: float
    seq_R: Tuple[float, float]
    seq_L: Tuple[float, float]
    seq_C: Tuple[float, float] = (0.0, 0.0)
    line_type: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.length > 0:
            raise ModelError(f"line {self.from_node}-{self.to_node}: length must be > 0")
        if self.from_node == self.to_node:
            raise ModelError(f"line {self.from_node}-{self.to_node}: terminals coincide")
        for value in (*self.seq_R, *self.seq_L, *self.seq_C):
            if value < 0:
                raise ModelError(f"line {self.from_node}-{self.to_node}: negative parameter")
        object.__setattr__(self, "seq_R", tuple(float(v) for v in self.seq_R))
        object.__setattr__(self, "seq_L", tuple(float(v) for v in self.seq_L))
        object.__setattr__(self, "seq_C", tuple(float(v) for v in self.seq_C))

    @property
    def length_km(self) -> float:
        return self.length / 1000.0


@dataclass(frozen=True)
class TheveninSpec:
    """
    Substation: distorted positive-sequence source behind a short-circuit impedance.

    Attributes:
        node (str): Connection node
        V_n (float): Phase-to-neutral RMS voltage
        S_sc (float): Short-circuit power in VA
        R_over_X (float): Ratio R_sc / X_sc
        harmonic_table: (h, magnitude fraction of fundamental, phase in deg)
        Z_sc (float): Stated |Z_sc| in Ohm, checked against V_n^2 / S_sc
    """
    node: str
    V_n: float
    S_sc: float
    R_over_X: float
    harmonic_table: Tuple[Tuple[int, float, float], ...] = ()
    Z_sc: Optional[float] = None

    def __post_init__(self):
        if not (self.V_n > 0 and self.S_sc > 0):
            raise ModelError("Thevenin V_n and S_sc must be positive")
        if self.R_over_X < 0:
            raise ModelError("Thevenin R/X must be >= 0")
        table = tuple((int(h), float(m), float(a)) for h, m, a in self.harmonic_table)
        object.__setattr__(self, "harmonic_table", table)
        for h, mag, angle in table:
            if h < 1:
                raise ModelError(f"harmonic table order must be >= 1, got {h}")
            if not 0.0 <= mag <= 1.0:
                raise ModelError(f"harmonic table magnitude at h={h} must be in [0, 1]")
            if h == 1 and (mag != 1.0 or angle != 0.0):
                raise ModelError("the fundamental entry of the harmonic table must be 1.0 at 0 deg")
        if self.Z_sc is not None:
            derived = self.Z_sc_magnitude
            if abs(derived - self.Z_sc) > Z_SC_CONSISTENCY_RTOL * self.Z_sc:
                raise ModelError(
                    f"stated |Z_sc| = {self.Z_sc:.4g} Ohm disagrees with V_n^2/S_sc = {derived:.4g} Ohm")

    @property
    def Z_sc_magnitude(self) -> float:
        return self.V_n ** 2 / self.S_sc

    @property
    def X_sc(self) -> float:
        return self.Z_sc_magnitude / np.sqrt(1.0 + self.R_over_X ** 2)

    @property
    def R_sc(self) -> float:
        return self.R_over_X * self.X_sc

    @property
    def thd(self) -> float:
        return float(np.sqrt(sum(m ** 2 for h, m, _ in self.harmonic_table if h > 1)))


@dataclass(frozen=True)
class LoadSpec:
    """
    Unbalanced wye-grounded constant-impedance load.

    Attributes:
        node (str): Connection node
        S (float): Total apparent power in VA at nominal voltage
        pf (float): Power factor (inductive)
        weights: Share of S per phase (A, B, C); a zero weight leaves the phase open
    """
    node: str
    S: float
    pf: float
    weights: Tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    connection: str = WYE_GROUNDED
    name: str = ""

    def __post_init__(self):
        if not 0.0 < self.pf <= 1.0:
            raise ModelError(f"load at {self.node}: power factor must be in (0, 1], got {self.pf}")
        if self.S < 0:
            raise ModelError(f"load at {self.node}: apparent power must be >= 0")
        weights = tuple(float(w) for w in self.weights)
        if len(weights) != 3 or min(weights) < 0:
            raise ModelError(f"load at {self.node}: three non-negative phase weights required")
        if abs(sum(weights) - 1.0) > WEIGHT_SUM_ATOL:
            raise ModelError(f"load at {self.node}: phase weights sum to {sum(weights):.3f}, not 1")
        if self.connection != WYE_GROUNDED:
            raise ModelError(f"load at {self.node}: only wye-grounded loads are supported")
        object.__setattr__(self, "weights", weights)
        if not self.name:
            object.__setattr__(self, "name", f"load_{self.node}")


@dataclass(frozen=True)
class ResourceAttachment:
    node: str
    cider: CiderSpec

    @property
    def name(self) -> str:
        return self.cider.name


@dataclass(frozen=True)
class NetworkSpec:
    """
    Complete grid description.

    Attributes:
        nodes: Node identifiers
        lines: Line sections
        thevenin (TheveninSpec): Substation, if any
        loads: Constant-impedance loads
        resources: Resources and their nodes
        base (PerUnitBase): Per-unit base
        f1 (float): Fundamental frequency in Hz
        name (str): Network name
    """
    nodes: Tuple[str, ...]
    lines: Tuple[LineSpec, ...] = ()
    thevenin: Optional[TheveninSpec] = None
    loads: Tuple[LoadSpec, ...] = ()
    resources: Tuple[ResourceAttachment, ...] = ()
    base: PerUnitBase = field(default_factory=PerUnitBase)
    f1: float = 50.0
    name: str = "network"

    def __post_init__(self):
        for attr in ("nodes", "lines", "loads", "resources"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        if len(set(self.nodes)) != len(self.nodes):
            raise ModelError("duplicate node identifiers")
        known = set(self.nodes)
        referenced = [n for l in self.lines for n in (l.from_node, l.to_node)]
        referenced += [l.node for l in self.loads] + [r.node for r in self.resources]
        if self.thevenin is not None:
            referenced.append(self.thevenin.node)
        unknown = sorted(set(referenced) - known)
        if unknown:
            raise TopologyError("elements reference unknown nodes", unknown)

        resource_nodes = [r.node for r in self.resources]
        if len(set(resource_nodes)) != len(resource_nodes):
            raise ModelError("at most one resource per node")
        names = [r.name for r in self.resources]
        if len(set(names)) != len(names):
            raise ModelError("resource names must be unique")
        load_names = [load.name for load in self.loads]
        if len(set(load_names)) != len(load_names) or SUBSTATION in load_names:
            raise ModelError(f"load names must be unique and differ from '{SUBSTATION}'")
        for r in self.resources:
            if not np.isclose(r.cider.f1, self.f1):
                raise ModelError(f"resource {r.name}: f1 differs from the network f1")
        self._check_connected()

    def _check_connected(self) -> None:
        n = len(self.nodes)
        if n == 0:
            raise TopologyError("network has no nodes")
        index = self.node_index
        rows = [index[l.from_node] for l in self.lines]
        cols = [index[l.to_node] for l in self.lines]
        graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        count, labels = connected_components(graph, directed=False)
        if count > 1:
            anchor = self.thevenin.node if self.thevenin is not None else (
                self.resources[0].node if self.resources else self.nodes[0])
            main = labels[index[anchor]]
            isolated = [node for node, label in zip(self.nodes, labels) if label != main]
            raise TopologyError("network is not connected", isolated)

    @property
    def node_index(self) -> Dict[str, int]:
        return {node: i for i, node in enumerate(self.nodes)}

    @property
    def following(self) -> List[ResourceAttachment]:
        return [r for r in self.resources if r.cider.kind == FOLLOWING]

    @property
    def forming(self) -> List[ResourceAttachment]:
        return [r for r in self.resources if r.cider.kind == FORMING]

    def resource_at(self, node: str) -> Optional[ResourceAttachment]:
        for r in self.resources:
            if r.node == node:
                return r
        return None


def _sequence_phase_matrix(pos: complex, zero: complex) -> np.ndarray:
    return fortescue_to_phase((pos, pos, zero))


def line_phase_matrices(l: LineSpec) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Total phase-domain (R, L, C) 3x3 matrices of a line section."""
    km = l.length_km
    R = np.real(_sequence_phase_matrix(*l.seq_R)) * km
    L = np.real(_sequence_phase_matrix(*l.seq_L)) * km
    C = np.real(_sequence_phase_matrix(*l.seq_C)) * km
    return R, L, C


def line_pi_section(l: LineSpec, sp: SpectralParams, h: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Pi-section admittances at order h.

    Returns:
        Tuple: (series admittance, shunt admittance at from_node, shunt admittance at to_node)
    """
    w = h * sp.omega1
    km = l.length_km
    z_pos = l.seq_R[0] + 1j * w * l.seq_L[0]
    z_zero = l.seq_R[1] + 1j * w * l.seq_L[1]
    Z = _sequence_phase_matrix(z_pos, z_zero) * km
    if abs(np.linalg.det(Z)) == 0.0:
        raise ModelError(f"line {l.from_node}-{l.to_node} has a singular series impedance at h={h}")
    Y_series = np.linalg.inv(Z)
    Y_shunt = _sequence_phase_matrix(1j * w * l.seq_C[0], 1j * w * l.seq_C[1]) * km / 2.0
    return Y_series, Y_shunt, Y_shunt.copy()


def load_branch_parameters(l: LoadSpec, V_n: float, f1: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-phase series R and L that absorb w_p*S at power factor pf under V_n.

    Open phases (zero weight) get R = L = inf.
    """
    R = np.full(3, np.inf)
    L = np.full(3, np.inf)
    sin_phi = np.sin(np.arccos(l.pf))
    for p, w in enumerate(l.weights):
        S_p = w * l.S
        if S_p <= 0:
            continue
        R[p] = V_n ** 2 * S_p * l.pf / S_p ** 2
        L[p] = V_n ** 2 * S_p * sin_phi / S_p ** 2 / (2.0 * np.pi * f1)
    return R, L


def load_admittance(l: LoadSpec, sp: SpectralParams, h: int, V_n: float = 230.0) -> np.ndarray:
    """Diagonal 3x3 admittance of a load at order h."""
    R, L = load_branch_parameters(l, V_n, sp.f1)
    y = np.zeros(3, dtype=complex)
    closed = np.isfinite(R)
    y[closed] = 1.0 / (R[closed] + 1j * h * sp.omega1 * L[closed])
    return np.diag(y)


def thevenin_impedance(t: TheveninSpec, sp: SpectralParams, h: int) -> complex:
    """Per-phase short-circuit impedance R_sc + j*h*X_sc."""
    return complex(t.R_sc, h * t.X_sc)


def thevenin_branch_parameters(t: TheveninSpec, f1: float) -> Tuple[float, float]:
    """Series (R, L) of the substation branch."""
    return t.R_sc, t.X_sc / (2.0 * np.pi * f1)


def thevenin_source_spectrum(t: TheveninSpec, sp: SpectralParams) -> PolyphaseSpectrum:
    """
    Source voltage spectrum: positive-sequence fundamental of V_n RMS at 0 deg
    plus the harmonic table entries as positive-sequence sets.
    """
    orders = [h for h, _, _ in t.harmonic_table]
    duplicates = sorted({h for h in orders if orders.count(h) > 1})
    if duplicates:
        raise ModelError(f"duplicate harmonic table orders: {duplicates}")

    peak_coeff = np.sqrt(2.0) * t.V_n / 2.0
    sequences = {1: (peak_coeff, 0.0, 0.0)}
    for h, mag, angle in t.harmonic_table:
        if h == 1:
            continue
        if h > sp.h_max:
            logger.warning("Harmonic table order %d exceeds h_max=%d and is ignored", h, sp.h_max)
            continue
        sequences[h] = (peak_coeff * mag * np.exp(1j * np.radians(angle)), 0.0, 0.0)
    return PolyphaseSpectrum.from_sequences(sp, sequences)


def _stamp(Y: np.ndarray, i: int, j: int, block: np.ndarray) -> None:
    Y[3 * i:3 * i + 3, 3 * j:3 * j + 3] += block


def nodal_admittance(net: NetworkSpec, sp: SpectralParams, h: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Full nodal admittance matrix and source injection vector at order h.

    Ordering is node-major (3*i + phase) following ``net.nodes``.
    """
    n = len(net.nodes)
    index = net.node_index
    Y = np.zeros((3 * n, 3 * n), dtype=complex)
    s = np.zeros(3 * n, dtype=complex)
    if h == 0:
        return Y, s

    for line in net.lines:
        i, j = index[line.from_node], index[line.to_node]
        Y_series, Y_from, Y_to = line_pi_section(line, sp, h)
        _stamp(Y, i, i, Y_series + Y_from)
        _stamp(Y, j, j, Y_series + Y_to)
        _stamp(Y, i, j, -Y_series)
        _stamp(Y, j, i, -Y_series)

    for load in net.loads:
        i = index[load.node]
        _stamp(Y, i, i, load_admittance(load, sp, h, net.base.V_b))

    if net.thevenin is not None:
        te = net.thevenin
        i = index[te.node]
        y_sc = 1.0 / thevenin_impedance(te, sp, h)
        _stamp(Y, i, i, y_sc * np.eye(3))
        v_te = thevenin_source_spectrum(te, sp).coeff(h)
        s[3 * i:3 * i + 3] = y_sc * v_te
    return Y, s


def export_admittance_csv(net: NetworkSpec, sp: SpectralParams, path: str,
                          orders: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """Write the nonzero entries of the nodal admittance matrices to CSV."""
    orders = list(sp.positive_orders()) if orders is None else list(orders)
    rows = []
    for h in orders:
        Y, _ = nodal_admittance(net, sp, h)
        for r, c in zip(*np.nonzero(Y)):
            rows.append({"h": h,
                         "row_node": net.nodes[r // 3], "row_phase": "ABC"[r % 3],
                         "col_node": net.nodes[c // 3], "col_phase": "ABC"[c % 3],
                         "re": Y[r, c].real, "im": Y[r, c].imag})
    df = pd.DataFrame(rows, columns=["h", "row_node", "row_phase", "col_node", "col_phase", "re", "im"])
    df.to_csv(path, index=False, float_format="%.12e")
    logger.info("Wrote admittance matrices for %d orders to %s", len(orders), path)
    return df


@dataclass
class _PortBlocks:
    """Hybrid relation at one order."""
    Z_F_I: np.ndarray
    Z_F_V: np.ndarray
    c_F: np.ndarray
    Y_G_V: np.ndarray
    Y_G_I: np.ndarray
    c_G: np.ndarray
    Y_red: np.ndarray
    s_red: np.ndarray
    Y_II: np.ndarray
    Y_IP: np.ndarray
    s_I: np.ndarray


def _indices(positions: Sequence[int]) -> np.ndarray:
    return np.array([3 * i + p for i in positions for p in range(3)], dtype=int)


class HybridPortModel:
    """
    Per-order port relations of the reduced grid:

        V_F = Z_F_I I_F + Z_F_V V_G + c_F      (forming ports)
        I_G = Y_G_V V_G + Y_G_I I_F + c_G      (following ports)

    I_F are currents injected by forming resources; I_G are the currents the
    following resources must inject to sustain V_G.
    """

    def __init__(self, net: NetworkSpec, sp: SpectralParams, blocks: Dict[int, _PortBlocks],
                 following_nodes: List[str], forming_nodes: List[str], internal_nodes: List[str]):
        self.net = net
        self.sp = sp
        self.blocks = blocks
        self.following_nodes = following_nodes
        self.forming_nodes = forming_nodes
        self.internal_nodes = internal_nodes

    @property
    def port_nodes(self) -> List[str]:
        return self.following_nodes + self.forming_nodes

    def _block(self, h: int) -> _PortBlocks:
        if h not in self.blocks:
            raise ModelError(f"port model has no order {h} (stored orders 1..{self.sp.h_max})")
        return self.blocks[h]

    def grid_response(self, h: int, V_G: np.ndarray, I_F: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Grid side of the port relation at order h.

        Args:
            h (int): Harmonic order (1..h_max)
            V_G: Stacked voltages of the following ports
            I_F: Stacked injected currents of the forming ports

        Returns:
            Tuple[np.ndarray, np.ndarray]: (I_G required at following ports, V_F at forming ports)
        """
        b = self._block(h)
        V_G = np.asarray(V_G, dtype=complex)
        I_F = np.asarray(I_F, dtype=complex)
        V_F = b.Z_F_I @ I_F + b.Z_F_V @ V_G + b.c_F
        I_G = b.Y_G_V @ V_G + b.Y_G_I @ I_F + b.c_G
        return I_G, V_F

    def reduced_admittance(self, h: int) -> Tuple[np.ndarray, np.ndarray]:
        """Kron-reduced (Y, s) over the ports, following ports first."""
        b = self._block(h)
        return b.Y_red, b.s_red

    def recover_nodes(self, h: int, V_ports: np.ndarray) -> np.ndarray:
        """All node voltages (node-major, ``net.nodes`` order) from the port voltages."""
        b = self._block(h)
        V_ports = np.asarray(V_ports, dtype=complex)
        index = self.net.node_index
        V = np.zeros(3 * len(self.net.nodes), dtype=complex)
        V[_indices([index[n] for n in self.port_nodes])] = V_ports
        if self.internal_nodes:
            V_I = np.linalg.solve(b.Y_II, b.s_I - b.Y_IP @ V_ports)
            V[_indices([index[n] for n in self.internal_nodes])] = V_I
        return V

    def element_currents(self, h: int, V_nodes: np.ndarray) -> Dict[str, np.ndarray]:
        """
        Currents injected into the grid by the passive elements at order h.

        Loads inject the negative of the current they absorb; the substation
        injects (V_TE - V) / Z_sc.
        """
        index = self.net.node_index
        currents: Dict[str, np.ndarray] = {}
        for load in self.net.loads:
            i = index[load.node]
            v = V_nodes[3 * i:3 * i + 3]
            currents[load.name] = -load_admittance(load, self.sp, h, self.net.base.V_b) @ v
        te = self.net.thevenin
        if te is not None:
            i = index[te.node]
            v_te = thevenin_source_spectrum(te, self.sp).coeff(h)
            currents[SUBSTATION] = (v_te - V_nodes[3 * i:3 * i + 3]) / thevenin_impedance(te, self.sp, h)
        return currents


def _kron_block(net: NetworkSpec, sp: SpectralParams, h: int, port_pos: List[int],
                internal_pos: List[int], n_G: int, internal_nodes: List[str]) -> _PortBlocks:
    Y, s = nodal_admittance(net, sp, h)
    P = _indices(port_pos)
    I = _indices(internal_pos)
    Y_PP = Y[np.ix_(P, P)]
    s_P = s[P]
    if len(I):
        Y_II = Y[np.ix_(I, I)]
        Y_IP = Y[np.ix_(I, P)]
        Y_PI = Y[np.ix_(P, I)]
        s_I = s[I]
        try:
            reduced = np.linalg.solve(Y_II, np.column_stack([Y_IP, s_I]))
        except np.linalg.LinAlgError as exc:
            raise TopologyError(f"internal admittance block is singular at order {h}",
                                internal_nodes) from exc
        Y_red = Y_PP - Y_PI @ reduced[:, :-1]
        s_red = s_P - Y_PI @ reduced[:, -1]
    else:
        Y_II = np.zeros((0, 0), dtype=complex)
        Y_IP = np.zeros((0, len(P)), dtype=complex)
        s_I = np.zeros(0, dtype=complex)
        Y_red, s_red = Y_PP, s_P

    g = 3 * n_G
    Y_GG, Y_GF = Y_red[:g, :g], Y_red[:g, g:]
    Y_FG, Y_FF = Y_red[g:, :g], Y_red[g:, g:]
    s_G, s_F = s_red[:g], s_red[g:]
    if Y_FF.size:
        try:
            Z_F_I = np.linalg.inv(Y_FF)
        except np.linalg.LinAlgError as exc:
            raise TopologyError(f"forming ports see a singular admittance at order {h}") from exc
    else:
        Z_F_I = np.zeros((0, 0), dtype=complex)
    Z_F_V = -Z_F_I @ Y_FG
    c_F = Z_F_I @ s_F
    Y_G_V = Y_GG + Y_GF @ Z_F_V
    Y_G_I = Y_GF @ Z_F_I
    c_G = Y_GF @ c_F - s_G
    return _PortBlocks(Z_F_I, Z_F_V, c_F, Y_G_V, Y_G_I, c_G, Y_red, s_red, Y_II, Y_IP, s_I)


def build_hybrid_port_model(net: NetworkSpec, sp: SpectralParams) -> HybridPortModel:
    """
    Assemble and reduce the grid for orders 1..h_max.

    Raises:
        ModelError: If the network and the study use different f1
        TopologyError: If the internal admittance block is singular
    """
    if not np.isclose(net.f1, sp.f1):
        raise ModelError(f"network f1 = {net.f1} Hz, study f1 = {sp.f1} Hz")
    index = net.node_index
    following_nodes = [r.node for r in net.following]
    forming_nodes = [r.node for r in net.forming]
    ports = set(following_nodes) | set(forming_nodes)
    internal_nodes = [n for n in net.nodes if n not in ports]
    port_pos = [index[n] for n in following_nodes + forming_nodes]
    internal_pos = [index[n] for n in internal_nodes]

    blocks = {h: _kron_block(net, sp, h, port_pos, internal_pos, len(following_nodes), internal_nodes)
              for h in sp.positive_orders()}
    logger.info("Reduced %d-node network onto %d ports (%d following, %d forming), h_max=%d",
                len(net.nodes), len(ports), len(following_nodes), len(forming_nodes), sp.h_max)
    return HybridPortModel(net, sp, blocks, following_nodes, forming_nodes, internal_nodes)
