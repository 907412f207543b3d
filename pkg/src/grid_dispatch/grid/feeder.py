"""
Feeder model for grid-dispatch

Radial three-phase distribution feeder loaded from the JSON feeder schema, with the
topology bookkeeping (traversal order, parent edges, phase masks) the power-flow
solvers and the dispatch optimizer share.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd

from ..exceptions import FeederTopologyError, PhaseError
from ..utils.logger import get_logger
from ..utils.validators import (
    PHASES,
    missing_columns,
    missing_keys,
    validate_finite,
    validate_node_id,
    validate_phase_set,
    validate_voltage_limits,
)

logger = get_logger(__name__)

FEEDER_SCHEMA_VERSION = 1

PHASE_INDEX = {phase: k for k, phase in enumerate(PHASES)}

# Balanced phase angles used by the coupled voltage-drop terms
PHASE_ANGLES = np.deg2rad(np.array([0.0, -120.0, 120.0]))


@dataclass(frozen=True)
class Node:
    """Feeder node and the phases it carries"""
    id: str
    phases: Tuple[str, ...]


@dataclass(frozen=True)
class Edge:
    """Directed parent -> child line with its per-unit phase impedance matrix"""
    parent: str
    child: str
    phases: Tuple[str, ...]
    z: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class Feeder:
    """Immutable radial feeder; all quantities per-unit except the bases"""
    name: str
    nodes: Tuple[Node, ...]
    edges: Tuple[Edge, ...]
    loads: np.ndarray = field(repr=False, compare=False)
    source: str
    source_voltage: float = 1.0
    v_min: float = 0.95
    v_max: float = 1.05
    base_kva: float = 100.0
    base_kv: float = 4.16

    node_index: Dict[str, int] = field(init=False, repr=False, compare=False)
    phase_mask: np.ndarray = field(init=False, repr=False, compare=False)
    edge_mask: np.ndarray = field(init=False, repr=False, compare=False)
    order: Tuple[int, ...] = field(init=False, repr=False, compare=False)
    parent: np.ndarray = field(init=False, repr=False, compare=False)
    parent_edge: np.ndarray = field(init=False, repr=False, compare=False)
    impedance: np.ndarray = field(init=False, repr=False, compare=False)
    coupling: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not validate_voltage_limits(self.v_min, self.v_max):
            raise FeederTopologyError(
                f"Invalid voltage limits ({self.v_min}, {self.v_max}) on feeder {self.name}"
            )
        if not (validate_finite(self.source_voltage) and self.source_voltage > 0):
            raise FeederTopologyError(f"Invalid source voltage {self.source_voltage}")
        if self.base_kva <= 0 or self.base_kv <= 0:
            raise FeederTopologyError("Feeder bases must be positive")

        node_index = {node.id: k for k, node in enumerate(self.nodes)}
        if len(node_index) != len(self.nodes):
            raise FeederTopologyError(f"Duplicate node ids in feeder {self.name}")
        if self.source not in node_index:
            raise FeederTopologyError(f"Source node {self.source} is not declared")

        n = len(self.nodes)
        phase_mask = np.zeros((n, 3), dtype=bool)
        for k, node in enumerate(self.nodes):
            for phase in node.phases:
                phase_mask[k, PHASE_INDEX[phase]] = True

        order, parent, parent_edge = _traverse(self.nodes, self.edges, self.source, node_index)

        edge_mask = np.zeros((len(self.edges), 3), dtype=bool)
        impedance = np.zeros((len(self.edges), 3, 3), dtype=complex)
        for e, edge in enumerate(self.edges):
            idx = [PHASE_INDEX[p] for p in edge.phases]
            edge_mask[e, idx] = True
            impedance[e][np.ix_(idx, idx)] = edge.z

            parent_phases = set(self.nodes[node_index[edge.parent]].phases)
            child_phases = set(self.nodes[node_index[edge.child]].phases)
            if not set(edge.phases) <= parent_phases:
                raise PhaseError(
                    f"Edge {edge.parent}->{edge.child} carries phases {edge.phases} "
                    f"missing at {edge.parent}"
                )
            if set(edge.phases) != child_phases:
                raise PhaseError(
                    f"Node {edge.child} phases {sorted(child_phases)} differ from its "
                    f"supply edge phases {list(edge.phases)}"
                )

        loads = np.array(self.loads, dtype=complex)
        if loads.shape != (n, 3):
            raise FeederTopologyError(f"Load array shape {loads.shape} does not match {n} nodes")
        if np.any(np.abs(loads[~phase_mask]) > 0):
            raise PhaseError("Load declared on a phase a node does not carry")

        # The diagonal gives each phase a drop of r P + x Q, so a positive active injection never lowers
        # v^2 on its own phase. Off-diagonal terms are rotated by 120 degrees and can move
        # other phases either way: withdrawing power on one phase may raise its neighbours.
        rotation = np.exp(1j * (PHASE_ANGLES[:, None] - PHASE_ANGLES[None, :]))
        coupling = rotation[None, :, :] * np.conj(impedance)

        for array in (phase_mask, edge_mask, parent, parent_edge, impedance, coupling, loads):
            array.setflags(write=False)

        object.__setattr__(self, "loads", loads)
        object.__setattr__(self, "node_index", node_index)
        object.__setattr__(self, "phase_mask", phase_mask)
        object.__setattr__(self, "edge_mask", edge_mask)
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "parent_edge", parent_edge)
        object.__setattr__(self, "impedance", impedance)
        object.__setattr__(self, "coupling", coupling)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def source_index(self) -> int:
        return self.node_index[self.source]

    @property
    def source_v_sq(self) -> float:
        return float(self.source_voltage) ** 2

    def node_phases(self, include_source: bool = False) -> List[Tuple[int, int]]:
        """(node index, phase index) pairs in traversal order"""
        pairs = []
        for k in self.order:
            if k == self.source_index and not include_source:
                continue
            for ph in range(3):
                if self.phase_mask[k, ph]:
                    pairs.append((k, ph))
        return pairs

    def edge_phases(self) -> List[Tuple[int, int]]:
        """(edge index, phase index) pairs following the traversal order of child nodes"""
        pairs = []
        for k in self.order:
            if k == self.source_index:
                continue
            e = int(self.parent_edge[k])
            for ph in range(3):
                if self.edge_mask[e, ph]:
                    pairs.append((e, ph))
        return pairs

    def children(self, k: int) -> List[int]:
        return [j for j in range(self.n_nodes) if self.parent[j] == k]

    def has_phase(self, node_id: str, phase: str) -> bool:
        k = self.node_index.get(str(node_id))
        if k is None or phase not in PHASE_INDEX:
            return False
        return bool(self.phase_mask[k, PHASE_INDEX[phase]])

    def total_load(self) -> complex:
        return complex(self.loads.sum())

    def to_dict(self) -> Dict[str, Any]:
        """Serialize back to the feeder JSON schema"""
        loads = []
        for k, node in enumerate(self.nodes):
            for phase in node.phases:
                s = self.loads[k, PHASE_INDEX[phase]]
                if s != 0:
                    loads.append({"node": node.id, "phase": phase,
                                  "p_pu": float(s.real), "q_pu": float(s.imag)})
        return {
            "schema": FEEDER_SCHEMA_VERSION,
            "name": self.name,
            "bases": {"kva": self.base_kva, "kv": self.base_kv},
            "source": {"node": self.source, "voltage_pu": self.source_voltage},
            "limits": {"v_min": self.v_min, "v_max": self.v_max},
            "nodes": [{"id": node.id, "phases": list(node.phases)} for node in self.nodes],
            "edges": [
                {
                    "from": edge.parent,
                    "to": edge.child,
                    "phases": list(edge.phases),
                    "z": [[[float(v.real), float(v.imag)] for v in row] for row in edge.z],
                }
                for edge in self.edges
            ],
            "loads": loads,
        }


def _traverse(nodes: Iterable[Node],
              edges: Iterable[Edge],
              source: str,
              node_index: Dict[str, int]) -> Tuple[Tuple[int, ...], np.ndarray, np.ndarray]:
    """Check radial topology and derive BFS order, parents and supply edges"""
    graph = nx.DiGraph()
    graph.add_nodes_from(node.id for node in nodes)
    for e, edge in enumerate(edges):
        for endpoint in (edge.parent, edge.child):
            if endpoint not in node_index:
                raise FeederTopologyError(f"Edge references unknown node {endpoint}")
        if graph.has_edge(edge.parent, edge.child):
            raise FeederTopologyError(f"Duplicate edge {edge.parent}->{edge.child}")
        graph.add_edge(edge.parent, edge.child, index=e)

    n = graph.number_of_nodes()
    if graph.number_of_edges() != n - 1:
        raise FeederTopologyError(
            f"Radial feeder needs {n - 1} edges for {n} nodes, found {graph.number_of_edges()}"
        )
    if not nx.is_arborescence(graph):
        raise FeederTopologyError("Feeder graph is not a connected radial tree")
    if graph.in_degree(source) != 0:
        raise FeederTopologyError(f"Source node {source} has a parent edge")

    parent = np.full(n, -1, dtype=int)
    parent_edge = np.full(n, -1, dtype=int)
    order = [node_index[source]]
    for u, v in nx.bfs_edges(graph, source):
        parent[node_index[v]] = node_index[u]
        parent_edge[node_index[v]] = graph.edges[u, v]["index"]
        order.append(node_index[v])

    return tuple(order), parent, parent_edge


def _parse_impedance(edge_doc: Dict[str, Any], size: int) -> np.ndarray:
    if "z" in edge_doc:
        z = np.array([[complex(entry[0], entry[1]) for entry in row] for row in edge_doc["z"]],
                     dtype=complex)
        if z.shape != (size, size):
            raise FeederTopologyError(
                f"Impedance of edge {edge_doc.get('from')}->{edge_doc.get('to')} has shape "
                f"{z.shape}, expected ({size}, {size})"
            )
        return z

    if "r" in edge_doc and "x" in edge_doc:
        return np.eye(size, dtype=complex) * complex(float(edge_doc["r"]), float(edge_doc["x"]))

    raise FeederTopologyError(
        f"Edge {edge_doc.get('from')}->{edge_doc.get('to')} declares neither z nor r/x"
    )


def feeder_from_dict(document: Dict[str, Any]) -> Feeder:
    """Build a feeder from a parsed feeder JSON document"""
    missing = missing_keys(document, ("nodes", "edges", "source"))
    if missing:
        raise FeederTopologyError(f"Feeder document missing keys: {missing}")

    schema = document.get("schema", FEEDER_SCHEMA_VERSION)
    if schema != FEEDER_SCHEMA_VERSION:
        raise FeederTopologyError(f"Unsupported feeder schema version {schema}")

    nodes = []
    for node_doc in document["nodes"]:
        node_id = str(node_doc["id"])
        phases = tuple(p.lower() for p in node_doc.get("phases", PHASES))
        if not validate_node_id(node_id):
            raise FeederTopologyError(f"Invalid node id {node_id!r}")
        if not validate_phase_set(phases):
            raise PhaseError(f"Invalid phase set {phases} on node {node_id}")
        nodes.append(Node(id=node_id, phases=tuple(p for p in PHASES if p in phases)))

    edges = []
    for edge_doc in document["edges"]:
        phases = tuple(p.lower() for p in edge_doc.get("phases", PHASES))
        if not validate_phase_set(phases):
            raise PhaseError(f"Invalid phase set {phases} on edge {edge_doc.get('from')}->{edge_doc.get('to')}")
        z = _parse_impedance(edge_doc, len(phases))
        # reorder to canonical a, b, c
        perm = [phases.index(p) for p in PHASES if p in phases]
        edges.append(Edge(
            parent=str(edge_doc["from"]),
            child=str(edge_doc["to"]),
            phases=tuple(phases[i] for i in perm),
            z=z[np.ix_(perm, perm)],
        ))

    node_index = {node.id: k for k, node in enumerate(nodes)}
    loads = np.zeros((len(nodes), 3), dtype=complex)
    for load_doc in document.get("loads", []):
        node_id = str(load_doc["node"])
        phase = str(load_doc["phase"]).lower()
        if node_id not in node_index:
            raise FeederTopologyError(f"Load references unknown node {node_id}")
        if phase not in PHASE_INDEX or phase not in nodes[node_index[node_id]].phases:
            raise PhaseError(f"Load on node {node_id} references missing phase {phase}")
        loads[node_index[node_id], PHASE_INDEX[phase]] += complex(
            float(load_doc.get("p_pu", 0.0)), float(load_doc.get("q_pu", 0.0))
        )

    source = document["source"]
    limits = document.get("limits", {})
    bases = document.get("bases", {})

    return Feeder(
        name=str(document.get("name", "feeder")),
        nodes=tuple(nodes),
        edges=tuple(edges),
        loads=loads,
        source=str(source["node"]),
        source_voltage=float(source.get("voltage_pu", 1.0)),
        v_min=float(limits.get("v_min", 0.95)),
        v_max=float(limits.get("v_max", 1.05)),
        base_kva=float(bases.get("kva", 100.0)),
        base_kv=float(bases.get("kv", 4.16)),
    )


def load_feeder(path: Union[str, Path]) -> Feeder:
    """Load a feeder JSON file"""
    path = Path(path)
    try:
        with open(path, 'r') as file:
            document = json.load(file)
    except FileNotFoundError:
        logger.error(f"Feeder file not found: {path}")
        raise
    except json.JSONDecodeError as e:
        raise FeederTopologyError(f"Feeder file {path} is not valid JSON: {e}")

    feeder = feeder_from_dict(document)
    logger.info(f"Loaded feeder {feeder.name} from {path} "
                f"({feeder.n_nodes} nodes, {feeder.n_edges} edges)")
    return feeder


def scale_loads(feeder: Feeder, factor: float) -> Feeder:
    """Return a copy of the feeder with every load multiplied by factor"""
    return replace(feeder, loads=np.asarray(feeder.loads) * factor)


def with_limits(feeder: Feeder, v_min: Optional[float] = None, v_max: Optional[float] = None) -> Feeder:
    """Return a copy of the feeder with overridden voltage limits"""
    return replace(
        feeder,
        loads=np.asarray(feeder.loads),
        v_min=feeder.v_min if v_min is None else float(v_min),
        v_max=feeder.v_max if v_max is None else float(v_max),
    )


@dataclass
class InjectionSet:
    """Net controllable injections per node and phase; positive injects into the grid"""
    values: Dict[Tuple[str, str], complex] = field(default_factory=dict)

    def add(self, node: str, phase: str, p_pu: float, q_pu: float = 0.0) -> "InjectionSet":
        key = (str(node), phase.lower())
        self.values[key] = self.values.get(key, 0j) + complex(p_pu, q_pu)
        return self

    def scaled(self, factor: float) -> "InjectionSet":
        return InjectionSet({key: value * factor for key, value in self.values.items()})

    def __add__(self, other: "InjectionSet") -> "InjectionSet":
        merged = InjectionSet(dict(self.values))
        for (node, phase), value in other.values.items():
            merged.add(node, phase, value.real, value.imag)
        return merged

    def to_array(self, feeder: Feeder) -> np.ndarray:
        """Dense (nodes, 3) complex array, validated against the feeder"""
        array = np.zeros((feeder.n_nodes, 3), dtype=complex)
        for (node, phase), value in self.values.items():
            if node not in feeder.node_index:
                raise PhaseError(f"Injection references unknown node {node}")
            if not feeder.has_phase(node, phase):
                raise PhaseError(f"Injection at node {node} references missing phase {phase}")
            array[feeder.node_index[node], PHASE_INDEX[phase]] += value
        return array

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "InjectionSet":
        """Build from a node,phase,p_pu,q_pu table"""
        missing = missing_columns(frame.columns, ("node", "phase", "p_pu", "q_pu"))
        if missing:
            raise PhaseError(f"Injection table missing columns: {missing}")

        injections = cls()
        for row in frame.itertuples(index=False):
            injections.add(str(row.node), str(row.phase), float(row.p_pu), float(row.q_pu))
        return injections


def load_injections(path: Union[str, Path]) -> InjectionSet:
    """Read an injection CSV (node,phase,p_pu,q_pu)"""
    frame = pd.read_csv(path, dtype={"node": str, "phase": str})
    return InjectionSet.from_frame(frame)
