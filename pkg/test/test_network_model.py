import unittest
import sys
import os
import tempfile

import numpy as np
import pandas as pd

# Add repository root to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.cider_resources import example_following_cider, example_forming_cider
from src.exceptions import ModelError, TopologyError
from src.harmonic_core import SpectralParams, sequence_decompose
from src.network_model import (LineSpec, LoadSpec, NetworkSpec, PerUnitBase, ResourceAttachment,
                               TheveninSpec, build_hybrid_port_model, export_admittance_csv,
                               line_pi_section, load_admittance, nodal_admittance,
                               thevenin_source_spectrum)

UG1 = dict(seq_R=(0.162, 0.529), seq_L=(0.2644e-3, 0.8394e-3), seq_C=(0.56e-6, 0.30e-6))
TABLE = ((1, 1.0, 0.0), (3, 0.02, 180.0), (5, 0.05, 0.0), (7, 0.01, 30.0))


def small_network(with_thevenin=True):
    """Four nodes in a chain with one resource of each kind and a load."""
    te = TheveninSpec(node="N1", V_n=230.0, S_sc=385e3, R_over_X=0.271,
                      harmonic_table=TABLE) if with_thevenin else None
    return NetworkSpec(
        nodes=("N1", "N2", "N3", "N4"),
        lines=(LineSpec("N1", "N2", 35.0, **UG1),
               LineSpec("N2", "N3", 70.0, **UG1),
               LineSpec("N3", "N4", 30.0, **UG1)),
        thevenin=te,
        loads=(LoadSpec("N2", S=20e3, pf=0.95, weights=(0.5, 0.3, 0.2)),),
        resources=(ResourceAttachment("N3", example_following_cider("following_N3")),
                   ResourceAttachment("N4", example_forming_cider("forming_N4"))),
    )


class TestElements(unittest.TestCase):
    """Test cases for lines, loads and the substation."""

    def setUp(self):
        """Set up test fixtures."""
        self.sp = SpectralParams(f1=50.0, h_max=7)

    def test_per_unit_base(self):
        """Current base follows from P_b and V_b."""
        base = PerUnitBase(P_b=10e3, V_b=230.0)
        self.assertAlmostEqual(base.I_b, 10e3 / 230.0, places=12)
        self.assertAlmostEqual(base.voltage_scale * 230.0 / np.sqrt(2.0), 1.0, places=12)
        with self.assertRaises(ModelError):
            PerUnitBase(P_b=0.0)

    def test_line_validation(self):
        """Zero length, coincident terminals and negative parameters are rejected."""
        with self.assertRaises(ModelError):
            LineSpec("N1", "N2", 0.0, **UG1)
        with self.assertRaises(ModelError):
            LineSpec("N1", "N1", 10.0, **UG1)
        with self.assertRaises(ModelError):
            LineSpec("N1", "N2", 10.0, seq_R=(-0.1, 0.1), seq_L=(1e-3, 1e-3))

    def test_symmetric_line_is_decoupled(self):
        """Equal positive and homopolar parameters give a diagonal admittance."""
        line = LineSpec("N1", "N2", 1000.0, seq_R=(0.2, 0.2), seq_L=(1e-3, 1e-3))
        Y_series, Y_from, _ = line_pi_section(line, self.sp, 5)
        expected = 1.0 / complex(0.2, 5 * self.sp.omega1 * 1e-3)
        np.testing.assert_allclose(Y_series, expected * np.eye(3), atol=1e-12)
        np.testing.assert_allclose(Y_from, np.zeros((3, 3)))

    def test_load_admittance(self):
        """At nominal voltage each phase absorbs w_p S at the given power factor."""
        load = LoadSpec("N2", S=30e3, pf=0.9, weights=(0.5, 0.5, 0.0))
        y = np.diag(load_admittance(load, self.sp, 1, V_n=230.0))
        s_phase = 15e3 * complex(0.9, -np.sqrt(1 - 0.81)) / 230.0 ** 2
        np.testing.assert_allclose(y[:2], [s_phase, s_phase], rtol=1e-12)
        self.assertEqual(y[2], 0.0)
        self.assertEqual(load.name, "load_N2")

    def test_load_validation(self):
        """Weights must sum to one; only wye-grounded loads are supported."""
        with self.assertRaises(ModelError):
            LoadSpec("N2", S=1e3, pf=0.9, weights=(0.5, 0.5, 0.5))
        with self.assertRaises(ModelError):
            LoadSpec("N2", S=1e3, pf=0.0)
        with self.assertRaises(ModelError):
            LoadSpec("N2", S=1e3, pf=0.9, connection="delta")

    def test_thevenin(self):
        """Short-circuit impedance and source spectrum."""
        te = TheveninSpec(node="N1", V_n=230.0, S_sc=385e3, R_over_X=0.271, harmonic_table=TABLE)
        self.assertAlmostEqual(te.Z_sc_magnitude, 230.0 ** 2 / 385e3, places=12)
        self.assertAlmostEqual(np.hypot(te.R_sc, te.X_sc), te.Z_sc_magnitude, places=12)
        source = thevenin_source_spectrum(te, self.sp)
        pos, neg, zero = sequence_decompose(source, 5)
        self.assertAlmostEqual(abs(pos), np.sqrt(2.0) * 230.0 / 2 * 0.05, places=9)
        self.assertAlmostEqual(abs(neg) + abs(zero), 0.0, places=9)
        self.assertAlmostEqual(abs(source.coeff(1)[0]), np.sqrt(2.0) * 230.0 / 2, places=9)
        self.assertAlmostEqual(te.thd, np.sqrt(0.02 ** 2 + 0.05 ** 2 + 0.01 ** 2), places=12)

    def test_thevenin_validation(self):
        """Inconsistent |Z_sc| and a scaled fundamental entry are rejected."""
        with self.assertRaises(ModelError):
            TheveninSpec(node="N1", V_n=230.0, S_sc=385e3, R_over_X=0.271, Z_sc=0.5)
        TheveninSpec(node="N1", V_n=230.0, S_sc=385e3, R_over_X=0.271, Z_sc=0.1374)
        with self.assertRaises(ModelError):
            TheveninSpec(node="N1", V_n=230.0, S_sc=385e3, R_over_X=0.271,
                         harmonic_table=((1, 0.9, 0.0),))


class TestNetworkSpec(unittest.TestCase):
    """Test cases for network validation."""

    def test_resource_groups(self):
        """Resources are grouped by kind and found by node."""
        net = small_network()
        self.assertEqual([r.node for r in net.following], ["N3"])
        self.assertEqual([r.node for r in net.forming], ["N4"])
        self.assertEqual(net.resource_at("N4").name, "forming_N4")
        self.assertIsNone(net.resource_at("N1"))

    def test_unknown_node(self):
        """Elements must reference declared nodes."""
        with self.assertRaises(TopologyError) as ctx:
            NetworkSpec(nodes=("N1",), loads=(LoadSpec("N9", S=1e3, pf=0.9),))
        self.assertEqual(ctx.exception.nodes, ["N9"])

    def test_disconnected(self):
        """Islands are reported with their nodes."""
        with self.assertRaises(TopologyError) as ctx:
            NetworkSpec(nodes=("N1", "N2", "N3"), lines=(LineSpec("N1", "N2", 10.0, **UG1),),
                        thevenin=TheveninSpec(node="N1", V_n=230.0, S_sc=385e3, R_over_X=0.271))
        self.assertEqual(ctx.exception.nodes, ["N3"])

    def test_one_resource_per_node(self):
        """Two resources on one node are rejected."""
        with self.assertRaises(ModelError):
            NetworkSpec(nodes=("N1",), resources=(
                ResourceAttachment("N1", example_forming_cider("a")),
                ResourceAttachment("N1", example_forming_cider("b"))))


class TestHybridPortModel(unittest.TestCase):
    """Test cases for the Kron-reduced port relations."""

    def setUp(self):
        """Set up test fixtures."""
        self.sp = SpectralParams(f1=50.0, h_max=7)
        self.net = small_network()
        self.model = build_hybrid_port_model(self.net, self.sp)

    def test_port_ordering(self):
        """Following ports come first, internal nodes keep network order."""
        self.assertEqual(self.model.port_nodes, ["N3", "N4"])
        self.assertEqual(self.model.internal_nodes, ["N1", "N2"])

    def test_reduction_satisfies_nodal_equations(self):
        """Recovered node voltages solve the full nodal equations at every order."""
        rng = np.random.default_rng(3)
        index = self.net.node_index
        for h in (1, 3, 5, 7):
            V_G = rng.normal(size=3) + 1j * rng.normal(size=3)
            I_F = rng.normal(size=3) + 1j * rng.normal(size=3)
            I_G, V_F = self.model.grid_response(h, V_G, I_F)
            V = self.model.recover_nodes(h, np.concatenate([V_G, V_F]))
            injections = np.zeros(12, dtype=complex)
            injections[3 * index["N3"]:3 * index["N3"] + 3] = I_G
            injections[3 * index["N4"]:3 * index["N4"] + 3] = I_F
            Y, s = nodal_admittance(self.net, self.sp, h)
            np.testing.assert_allclose(Y @ V, s + injections, atol=1e-8)

    def test_element_currents_balance(self):
        """Substation and load currents follow from the node voltages."""
        h = 5
        _, V_F = self.model.grid_response(h, np.zeros(3), np.zeros(3))
        V = self.model.recover_nodes(h, np.concatenate([np.zeros(3), V_F]))
        currents = self.model.element_currents(h, V)
        self.assertIn("substation", currents)
        self.assertIn("load_N2", currents)
        # no resource injection: the substation feeds the load and the line charging
        self.assertGreater(np.max(np.abs(currents["substation"])), 0.0)

    def test_missing_order(self):
        """Orders outside 1..h_max are not stored."""
        with self.assertRaises(ModelError):
            self.model.reduced_admittance(9)

    def test_mismatched_fundamental(self):
        """Network and study must share f1."""
        with self.assertRaises(ModelError):
            build_hybrid_port_model(self.net, SpectralParams(f1=60.0, h_max=3))

    def test_export_admittance(self):
        """Nonzero admittance entries are written as CSV."""
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "Y.csv")
            df = export_admittance_csv(self.net, self.sp, path, orders=[1])
            back = pd.read_csv(path)
        self.assertEqual(len(df), len(back))
        self.assertEqual(set(back.h), {1})


if __name__ == '__main__':
    unittest.main()
