"""Geometric inter-level transfer operators for Q2 and Q1 spaces.

Prolongation weights are purely topological: each fine node sits at a
fixed position inside (or on the boundary of) one parent cell, and its
weight row is the parent basis evaluated there. Restriction is the exact
transpose. Snapped boundary vertices make the spaces inexactly nested
near the cylinder; the standard nested weights are kept there.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import mesh as msh
from . import spaces as spc

# parent reference coordinates of each child quadrant's (xi, eta)
_CHILD_MAP = [
    lambda s, t: (0.5 * (s - 1), 0.5 * (t - 1)),
    lambda s, t: (0.5 * (s + 1), 0.5 * (t - 1)),
    lambda s, t: (0.5 * (s + 1), 0.5 * (t + 1)),
    lambda s, t: (0.5 * (s - 1), 0.5 * (t + 1)),
]


def _child_weight_tensor(local_nodes: np.ndarray, tabulate) -> np.ndarray:
    """(4, n_child_nodes, n_parent_nodes) parent basis at child node spots."""
    out = []
    for cm in _CHILD_MAP:
        px, py = cm(local_nodes[:, 0], local_nodes[:, 1])
        n, _ = tabulate(np.stack([px, py], axis=1))
        out.append(n)
    return np.array(out)


_W2 = _child_weight_tensor(spc.Q2_LOCAL, spc.q2_tabulate)
_W1 = _child_weight_tensor(spc.Q1_LOCAL, spc.q1_tabulate)


def _dedupe_coo(rows, cols, vals, shape) -> sp.csr_matrix:
    key = rows.astype(np.int64) * shape[1] + cols
    _, idx = np.unique(key, return_index=True)
    return sp.coo_matrix((vals[idx], (rows[idx], cols[idx])), shape=shape).tocsr()


def prolongation_q2(coarse: spc.DofMap, fine: spc.DofMap) -> sp.csr_matrix:
    """Scalar Q2 prolongation from the coarse to the fine level."""
    ncc = coarse.mesh.num_cells
    fine_conn = fine.conn2.reshape(ncc, 4, 9)
    rows = np.broadcast_to(fine_conn[:, :, :, None], (ncc, 4, 9, 9)).ravel()
    cols = np.broadcast_to(coarse.conn2[:, None, None, :], (ncc, 4, 9, 9)).ravel()
    vals = np.broadcast_to(_W2[None], (ncc, 4, 9, 9)).ravel()
    keep = np.abs(vals) > 1e-14
    return _dedupe_coo(rows[keep], cols[keep], vals[keep], (fine.n2, coarse.n2))


def prolongation_q1(coarse: spc.DofMap, fine: spc.DofMap) -> sp.csr_matrix:
    ncc = coarse.mesh.num_cells
    fine_conn = fine.conn1.reshape(ncc, 4, 4)
    rows = np.broadcast_to(fine_conn[:, :, :, None], (ncc, 4, 4, 4)).ravel()
    cols = np.broadcast_to(coarse.conn1[:, None, None, :], (ncc, 4, 4, 4)).ravel()
    vals = np.broadcast_to(_W1[None], (ncc, 4, 4, 4)).ravel()
    keep = np.abs(vals) > 1e-14
    return _dedupe_coo(rows[keep], cols[keep], vals[keep], (fine.n1, coarse.n1))


@dataclass
class TransferPair:
    """Prolongation/restriction between one coarse-fine level pair."""

    coarse: spc.DofMap
    fine: spc.DofMap
    P2: sp.csr_matrix
    P1: sp.csr_matrix

    def prolong_velocity(self, x: np.ndarray) -> np.ndarray:
        n2c, n2f = self.coarse.n2, self.fine.n2
        out = np.empty(2 * n2f)
        out[:n2f] = self.P2 @ x[:n2c]
        out[n2f:] = self.P2 @ x[n2c:]
        return out

    def restrict_velocity(self, x: np.ndarray) -> np.ndarray:
        n2c, n2f = self.coarse.n2, self.fine.n2
        out = np.empty(2 * n2c)
        out[:n2c] = self.P2.T @ x[:n2f]
        out[n2c:] = self.P2.T @ x[n2f:]
        return out

    def prolong_block(self, x: np.ndarray) -> np.ndarray:
        vc = self.prolong_velocity(x[: 2 * self.coarse.n2])
        pf = self.P1 @ x[2 * self.coarse.n2:]
        return np.concatenate([vc, pf])

    def restrict_block(self, x: np.ndarray) -> np.ndarray:
        vf = self.restrict_velocity(x[: 2 * self.fine.n2])
        pc = self.P1.T @ x[2 * self.fine.n2:]
        return np.concatenate([vf, pc])


def build_transfers(dofmaps: list[spc.DofMap]) -> list[TransferPair]:
    """TransferPair between every consecutive level pair, coarse to fine."""
    return [TransferPair(dofmaps[j], dofmaps[j + 1],
                         prolongation_q2(dofmaps[j], dofmaps[j + 1]),
                         prolongation_q1(dofmaps[j], dofmaps[j + 1]))
            for j in range(len(dofmaps) - 1)]
