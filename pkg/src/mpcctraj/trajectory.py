"""Piecewise-polynomial trajectory reconstruction from node values.

The differential state on each element is the degree-N_c Lagrange polynomial
through its N_c + 1 nodes and is continuous across elements; algebraic,
control and state-derivative samples use the degree-(N_c - 1) basis on the
interior nodes and may jump at element boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def lagrange_value(nodes: np.ndarray, j: int, tau: float):
    """Value of the Lagrange basis polynomial for node j at tau."""
    p = 1.0
    for m in range(len(nodes)):
        if m != j:
            p = p * (tau - nodes[m]) / (nodes[j] - nodes[m])
    return p


def lagrange_derivative(nodes: np.ndarray, j: int, tau: float) -> float:
    s = 0.0
    for m in range(len(nodes)):
        if m == j:
            continue
        p = 1.0 / (nodes[j] - nodes[m])
        for q in range(len(nodes)):
            if q != j and q != m:
                p *= (tau - nodes[q]) / (nodes[j] - nodes[q])
        s += p
    return s


@dataclass
class Trajectory:
    """Node values plus the basis information needed to sample anywhere."""

    t0: float
    widths: np.ndarray
    state_nodes: np.ndarray  # tau positions incl. 0, length N_c + 1
    stage_nodes: np.ndarray  # tau positions of the collocation points
    x: np.ndarray  # (N_e, N_c+1, n_x)
    xdot: np.ndarray  # (N_e, N_c, n_x)
    y: np.ndarray  # (N_e, N_c, n_y)
    u: np.ndarray  # (N_e, N_c, n_u)

    @property
    def n_elements(self) -> int:
        return len(self.widths)

    @property
    def tf(self) -> float:
        return self.t0 + float(np.sum(self.widths))

    def element_starts(self) -> np.ndarray:
        return self.t0 + np.concatenate([[0.0], np.cumsum(self.widths)[:-1]])

    def _locate(self, t: float) -> tuple[int, float]:
        starts = self.element_starts()
        i = int(np.searchsorted(starts, t, side="right") - 1)
        i = min(max(i, 0), self.n_elements - 1)
        tau = (t - starts[i]) / self.widths[i]
        return i, float(np.clip(tau, 0.0, 1.0))

    def sample_state(self, t: float) -> np.ndarray:
        i, tau = self._locate(t)
        vals = np.zeros(self.x.shape[2])
        for j in range(len(self.state_nodes)):
            vals += self.x[i, j] * lagrange_value(self.state_nodes, j, tau)
        return vals

    def _sample_stage(self, nodes_vals: np.ndarray, t: float) -> np.ndarray:
        i, tau = self._locate(t)
        vals = np.zeros(nodes_vals.shape[2])
        for j in range(len(self.stage_nodes)):
            vals += nodes_vals[i, j] * lagrange_value(self.stage_nodes, j, tau)
        return vals

    def sample_algebraic(self, t: float) -> np.ndarray:
        return self._sample_stage(self.y, t)

    def sample_control(self, t: float) -> np.ndarray:
        return self._sample_stage(self.u, t)

    def sample_state_derivative(self, t: float) -> np.ndarray:
        return self._sample_stage(self.xdot, t)

    def to_rows(self, samples_per_element: int):
        """Boundary-inclusive uniform sampling: N_e * k + 1 rows of
        (t, x, xdot, y, u)."""
        k = samples_per_element
        starts = self.element_starts()
        times, rows = [], []
        for i in range(self.n_elements):
            taus = np.arange(k) / k if i < self.n_elements - 1 else np.arange(k + 1) / k
            for tau in taus:
                t = starts[i] + tau * self.widths[i]
                xv = np.zeros(self.x.shape[2])
                for j in range(len(self.state_nodes)):
                    xv += self.x[i, j] * lagrange_value(self.state_nodes, j, tau)
                extras = []
                for arr in (self.xdot, self.y, self.u):
                    v = np.zeros(arr.shape[2])
                    for j in range(len(self.stage_nodes)):
                        v += arr[i, j] * lagrange_value(self.stage_nodes, j, tau)
                    extras.append(v)
                times.append(t)
                rows.append(np.concatenate([xv] + extras))
        return np.asarray(times), np.asarray(rows)

    def max_state_error(self, reference, n_samples: int = 100) -> float:
        """Max |x(t) - reference(t)| over a uniform time grid."""
        worst = 0.0
        for t in np.linspace(self.t0, self.tf, n_samples):
            err = np.abs(self.sample_state(t) - np.asarray(reference(t)))
            worst = max(worst, float(np.max(err)))
        return worst

    def close_to(self, other: "Trajectory", tol: float = 1e-12) -> bool:
        for a, b in ((self.x, other.x), (self.xdot, other.xdot),
                     (self.y, other.y), (self.u, other.u)):
            if a.shape != b.shape or np.abs(a - b).max(initial=0.0) > tol:
                return False
        return bool(np.abs(self.widths - other.widths).max() <= tol
                    and abs(self.t0 - other.t0) <= tol)
