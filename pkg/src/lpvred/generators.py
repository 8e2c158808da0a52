"""Seeded example models: a random affine LPV system and an RC thermal network."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AffineLpvModel, ParameterBox
from .errors import DimensionError

# Relative strength of each parameter in the random example; parameters
# beyond the tuple length reuse the last entry.
DEFAULT_PARAM_SCALES = (1.0, 0.6, 0.3, 0.12, 0.05)


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def generate_random_model(
    seed=0,
    n=45,
    l=5,
    m=2,
    q=2,
    param_scales=DEFAULT_PARAM_SCALES,
    io_scale=1.0,
    skew_scale=1.0,
    with_feedthrough=True,
) -> AffineLpvModel:
    """Random affine LPV model on ``[0, 1]^l`` with every ``A_i`` negative definite.

    ``A_0 = -U diag(lam) U^T + K`` with ``K`` skew-symmetric, so its symmetric
    part is negative definite. Each ``A_i = -s_i V_i diag(mu_i) V_i^T`` with
    ``mu_i`` in ``[0.2, 1]`` and ``s_i`` the parameter scale. ``lam`` is
    drawn from ``[0.3 + 1.5 * sum(s_i), 3 + 1.5 * sum(s_i)]`` which keeps the
    symmetric part of ``A(phi)`` negative definite for every coefficient
    vector with ``phi_i >= -1``; reduced models obtained by projection
    therefore stay stable. ``B``, ``C`` and ``D`` blocks are Gaussian with
    standard deviation ``io_scale`` (scaled by ``s_i`` for ``i >= 1``).
    """
    if min(n, l, m, q) < 0 or n == 0 or m == 0 or q == 0:
        raise DimensionError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    scales = np.array([param_scales[min(i, len(param_scales) - 1)] for i in range(l)], dtype=float)
    shift = 1.5 * scales.sum()

    U = _orthogonal(rng, n)
    lam = rng.uniform(0.3 + shift, 3.0 + shift, n)
    K = rng.standard_normal((n, n)) * skew_scale / np.sqrt(n)
    A = np.zeros((l + 1, n, n))
    A[0] = -(U * lam) @ U.T + (K - K.T) / 2
    for i in range(l):
        V = _orthogonal(rng, n)
        mu = rng.uniform(0.2, 1.0, n)
        Ai = -scales[i] * (V * mu) @ V.T
        A[i + 1] = (Ai + Ai.T) / 2

    wgt = np.concatenate(([1.0], scales))[:, None, None] * io_scale
    B = rng.standard_normal((l + 1, n, m)) * wgt
    C = rng.standard_normal((l + 1, q, n)) * wgt
    D = rng.standard_normal((l + 1, q, m)) * wgt if with_feedthrough else np.zeros((l + 1, q, m))
    return AffineLpvModel(A, B, C, D, ParameterBox.unit(l))


@dataclass(frozen=True, eq=False)
class ThermalNetwork:
    """Lumped RC network of metal blocks coupled in a chain.

    Temperatures are measured relative to ambient. ``laplacian`` holds the
    node-to-node conductances (W/K), ``ambient`` the conductance of each node
    to ambient, ``capacity`` the nominal heat capacity (J/K) per node.
    Parameter ``i`` moves the inverse capacity of block ``i`` between
    ``1 / (capacity * (1 + spread))`` and ``1 / (capacity * (1 - spread))``.
    """

    laplacian: np.ndarray
    ambient: np.ndarray
    capacity: np.ndarray
    block_of: np.ndarray
    heater_nodes: tuple
    sensor_nodes: tuple
    spread: float

    @property
    def n_nodes(self):
        return self.capacity.size

    @property
    def n_blocks(self):
        return int(self.block_of.max()) + 1

    @property
    def stiffness(self):
        return self.laplacian + np.diag(self.ambient)

    def inverse_capacity_range(self):
        lo = 1.0 / (self.capacity * (1 + self.spread))
        hi = 1.0 / (self.capacity * (1 - self.spread))
        return lo, hi

    def to_model(self) -> AffineLpvModel:
        n, nb = self.n_nodes, self.n_blocks
        K = self.stiffness
        lo, hi = self.inverse_capacity_range()
        E = np.zeros((nb + 1, n))
        E[0] = lo
        for b in range(nb):
            sel = self.block_of == b
            E[b + 1, sel] = (hi - lo)[sel]
        Bp = np.zeros((n, len(self.heater_nodes)))
        for j, node in enumerate(self.heater_nodes):
            Bp[node, j] = 1.0
        C0 = np.zeros((len(self.sensor_nodes), n))
        for j, node in enumerate(self.sensor_nodes):
            C0[j, node] = 1.0
        A = np.stack([-(e[:, None] * K) for e in E])
        B = np.stack([e[:, None] * Bp for e in E])
        C = np.zeros((nb + 1,) + C0.shape)
        C[0] = C0
        D = np.zeros((nb + 1, C0.shape[0], Bp.shape[1]))
        return AffineLpvModel(A, B, C, D, ParameterBox.unit(nb))


def thermal_network(seed=0, blocks=5, nodes_per_block=9, spread=0.3) -> ThermalNetwork:
    """Random RC network: each block is a square-ish grid of nodes, blocks form a chain.

    Heaters sit on the first and third blocks, sensors on the second and last.
    """
    if blocks < 1 or nodes_per_block < 1:
        raise DimensionError("blocks and nodes_per_block must be positive")
    if not 0 <= spread < 1:
        raise DimensionError("spread must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    n = blocks * nodes_per_block
    side = int(np.ceil(np.sqrt(nodes_per_block)))
    L = np.zeros((n, n))

    def link(i, j, g):
        L[i, i] += g
        L[j, j] += g
        L[i, j] -= g
        L[j, i] -= g

    block_of = np.repeat(np.arange(blocks), nodes_per_block)
    for b in range(blocks):
        g_in = rng.uniform(2.0, 6.0)
        base = b * nodes_per_block
        for k in range(nodes_per_block):
            r, c = divmod(k, side)
            if c + 1 < side and k + 1 < nodes_per_block:
                link(base + k, base + k + 1, g_in)
            if k + side < nodes_per_block:
                link(base + k, base + k + side, g_in)
        if b + 1 < blocks:
            # interface between neighbouring blocks: last node of b to first of b+1
            link(base + nodes_per_block - 1, base + nodes_per_block, rng.uniform(0.5, 1.5))

    capacity = np.repeat(rng.uniform(2.0, 8.0, blocks), nodes_per_block)
    ambient = rng.uniform(0.02, 0.08, n)
    heaters = (0, min(2, blocks - 1) * nodes_per_block + nodes_per_block // 2)
    sensors = (min(1, blocks - 1) * nodes_per_block + nodes_per_block // 2, n - 1)
    return ThermalNetwork(L, ambient, capacity, block_of, heaters, sensors, spread)


def generate_thermal_model(seed=0, blocks=5, nodes_per_block=9, spread=0.3) -> AffineLpvModel:
    """Thermal network as an affine LPV model; parameter ``i`` is block ``i``'s inverse heat capacity."""
    return thermal_network(seed, blocks, nodes_per_block, spread).to_model()
