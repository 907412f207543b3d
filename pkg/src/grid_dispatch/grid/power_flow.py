"""
Power flow solvers for grid-dispatch

Linearized three-phase branch-flow model on squared voltage magnitudes plus a
complex backward/forward sweep used as the nonlinear reference.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from ..exceptions import PowerFlowConvergenceError, PowerFlowError
from ..utils.logger import get_logger
from ..utils.validators import PHASES
from .feeder import PHASE_ANGLES, Feeder, InjectionSet

logger = get_logger(__name__)

# Sweep iterates below this magnitude are treated as voltage collapse
COLLAPSE_VOLTAGE = 0.5


@dataclass(frozen=True)
class PowerFlowSolution:
    """Edge flows (edges x 3) and squared node voltages (nodes x 3), NaN on absent phases"""
    feeder: Feeder
    p_flow: np.ndarray
    q_flow: np.ndarray
    v_sq: np.ndarray
    net_load: np.ndarray
    method: str = "linear"
    iterations: int = 1

    def voltage_magnitudes(self) -> np.ndarray:
        return np.sqrt(self.v_sq)

    def voltage(self, node_id: str, phase: str) -> float:
        k = self.feeder.node_index[str(node_id)]
        return float(np.sqrt(self.v_sq[k, PHASES.index(phase)]))

    def _non_source_magnitudes(self) -> np.ndarray:
        pairs = self.feeder.node_phases()
        if not pairs:
            return np.array([self.feeder.source_voltage])
        rows, cols = zip(*pairs)
        return np.sqrt(self.v_sq[list(rows), list(cols)])

    def min_voltage(self) -> float:
        """Lowest magnitude over non-source node-phases"""
        return float(np.min(self._non_source_magnitudes()))

    def max_voltage(self) -> float:
        """Highest magnitude over non-source node-phases"""
        return float(np.max(self._non_source_magnitudes()))

    def to_frame(self) -> pd.DataFrame:
        """node, phase, v_mag_pu rows in traversal order"""
        records = []
        for k, ph in self.feeder.node_phases(include_source=True):
            records.append({
                "node": self.feeder.nodes[k].id,
                "phase": PHASES[ph],
                "v_mag_pu": float(np.sqrt(self.v_sq[k, ph])),
            })
        return pd.DataFrame.from_records(records, columns=["node", "phase", "v_mag_pu"])

    def balance_residual(self) -> float:
        """Largest nodal mismatch of inflow - net load - children outflow"""
        feeder = self.feeder
        flows = self.p_flow + 1j * self.q_flow
        residual = 0.0
        for k in feeder.order:
            if k == feeder.source_index:
                continue
            inflow = flows[feeder.parent_edge[k]]
            outflow = np.zeros(3, dtype=complex)
            for child in feeder.children(k):
                outflow += flows[feeder.parent_edge[child]]
            mismatch = (inflow - self.net_load[k] - outflow)[feeder.phase_mask[k]]
            if mismatch.size:
                residual = max(residual, float(np.max(np.abs(mismatch))))
        return residual


def _net_load(feeder: Feeder, injections: Optional[InjectionSet]) -> np.ndarray:
    net = np.array(feeder.loads, dtype=complex)
    if injections is not None:
        net -= injections.to_array(feeder)
    net[~feeder.phase_mask] = 0
    return net


def _accumulate(feeder: Feeder, nodal: np.ndarray) -> np.ndarray:
    """Sum nodal quantities upstream so each edge carries its whole subtree"""
    branch = np.zeros((feeder.n_edges, 3), dtype=complex)
    acc = nodal.copy()
    for k in reversed(feeder.order):
        if k == feeder.source_index:
            continue
        e = feeder.parent_edge[k]
        branch[e] = acc[k] * feeder.edge_mask[e]
        acc[feeder.parent[k]] += branch[e]
    return branch


def solve_linear(feeder: Feeder, injections: Optional[InjectionSet] = None) -> PowerFlowSolution:
    """Lossless linearized power flow: one upstream pass for flows, one downstream pass for v"""
    net = _net_load(feeder, injections)
    flows = _accumulate(feeder, net)

    v_sq = np.full((feeder.n_nodes, 3), np.nan)
    src = feeder.source_index
    v_sq[src, feeder.phase_mask[src]] = feeder.source_v_sq

    for k in feeder.order[1:]:
        e = feeder.parent_edge[k]
        i = feeder.parent[k]
        mask = feeder.phase_mask[k]
        drop = 2.0 * np.real(feeder.coupling[e] @ flows[e])
        v_sq[k, mask] = v_sq[i, mask] - drop[mask]

    present = v_sq[feeder.phase_mask]
    if np.any(present <= 0) or not np.all(np.isfinite(present)):
        raise PowerFlowError(
            f"Linear power flow on {feeder.name} produced non-positive squared voltage "
            f"(min {np.nanmin(v_sq):.4f})"
        )

    return PowerFlowSolution(
        feeder=feeder,
        p_flow=flows.real.copy(),
        q_flow=flows.imag.copy(),
        v_sq=v_sq,
        net_load=net,
        method="linear",
        iterations=1,
    )


def solve_nonlinear_sweep(feeder: Feeder,
                          injections: Optional[InjectionSet] = None,
                          tol: float = 1e-10,
                          max_iter: int = 100) -> PowerFlowSolution:
    """Backward/forward sweep with constant-power loads on complex phasors"""
    if tol <= 0:
        raise ValueError(f"Sweep tolerance must be positive, got {tol}")
    if max_iter < 1:
        raise ValueError(f"Sweep needs at least one iteration, got {max_iter}")

    net = _net_load(feeder, injections)
    mask = feeder.phase_mask
    rotation = np.exp(1j * PHASE_ANGLES)
    voltages = np.where(mask, feeder.source_voltage * rotation[None, :], 0j)

    for iteration in range(1, max_iter + 1):
        nodal_current = np.zeros_like(voltages)
        nodal_current[mask] = np.conj(net[mask] / voltages[mask])
        currents = _accumulate(feeder, nodal_current)

        updated = voltages.copy()
        for k in feeder.order[1:]:
            e = feeder.parent_edge[k]
            i = feeder.parent[k]
            updated[k] = np.where(mask[k], updated[i] - feeder.impedance[e] @ currents[e], 0j)

        magnitudes = np.abs(updated[mask])
        if not np.all(np.isfinite(magnitudes)):
            raise PowerFlowConvergenceError(
                f"Sweep on {feeder.name} produced non-finite voltages at iteration {iteration}"
            )
        if np.min(magnitudes) < COLLAPSE_VOLTAGE:
            raise PowerFlowConvergenceError(
                f"Sweep on {feeder.name} collapsed to {np.min(magnitudes):.3f} pu at iteration {iteration}"
            )

        delta = float(np.max(np.abs(updated - voltages)))
        voltages = updated
        if delta < tol:
            break
    else:
        raise PowerFlowConvergenceError(
            f"Sweep on {feeder.name} did not converge in {max_iter} iterations (last change {delta:.3e})"
        )

    # sending-end complex power per edge
    flows = np.zeros((feeder.n_edges, 3), dtype=complex)
    for k in feeder.order[1:]:
        e = feeder.parent_edge[k]
        flows[e] = voltages[feeder.parent[k]] * np.conj(currents[e]) * feeder.edge_mask[e]

    v_sq = np.where(mask, np.abs(voltages) ** 2, np.nan)

    logger.debug(f"Sweep on {feeder.name} converged in {iteration} iterations")

    return PowerFlowSolution(
        feeder=feeder,
        p_flow=flows.real.copy(),
        q_flow=flows.imag.copy(),
        v_sq=v_sq,
        net_load=net,
        method="sweep",
        iterations=iteration,
    )


def count_violations(solution: PowerFlowSolution,
                     v_min: Optional[float] = None,
                     v_max: Optional[float] = None) -> int:
    """Count non-source node-phases above v_max or below v_min"""
    feeder = solution.feeder
    v_min = feeder.v_min if v_min is None else v_min
    v_max = feeder.v_max if v_max is None else v_max

    pairs = feeder.node_phases()
    if not pairs:
        return 0

    rows, cols = zip(*pairs)
    magnitudes = np.sqrt(solution.v_sq[list(rows), list(cols)])
    return int(np.sum(magnitudes > v_max) + np.sum(magnitudes < v_min))
