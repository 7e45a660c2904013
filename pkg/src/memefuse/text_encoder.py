"""Two-layer bidirectional LSTM over an embedded segment.

`bilstm_encode` maps an (n, emb_dim) embedding matrix to the hidden
matrix H of shape (n, 2*units): layer 1 reads the embeddings, layer 2
reads layer 1's per-token [forward, backward] concatenations, and row t
of H is layer 2's [forward_t, backward_t].  Initial hidden and cell
states are zero, so encoding is stateless across calls.
"""

from __future__ import annotations

import numpy as np

from . import tensorcore as tc
from .errors import ShapeError

GATE_NAMES = ("input", "forget", "cell", "output")


class LstmCell:
    """Weights for one direction of one layer: per gate (wx, wh, b)."""

    def __init__(self, gates: dict[str, tuple[tc.Tensor, tc.Tensor, tc.Tensor]],
                 units: int):
        self.gates = gates
        self.units = units

    @classmethod
    def init(cls, rng, input_dim: int, units: int, std: float, prefix: str):
        gates = {}
        for gate in GATE_NAMES:
            wx = tc.Tensor(rng.normal(0.0, std, size=(input_dim, units)),
                           requires_grad=True, name=f"{prefix}.{gate}.wx")
            wh = tc.Tensor(rng.normal(0.0, std, size=(units, units)),
                           requires_grad=True, name=f"{prefix}.{gate}.wh")
            bias = np.full((1, units), 1.0) if gate == "forget" \
                else rng.normal(0.0, std, size=(1, units))
            b = tc.Tensor(bias, requires_grad=True, name=f"{prefix}.{gate}.b")
            gates[gate] = (wx, wh, b)
        return cls(gates, units)

    def step(self, x: tc.Tensor, h: tc.Tensor, c: tc.Tensor):
        def gate(name, activation):
            wx, wh, b = self.gates[name]
            pre = tc.add(tc.add(tc.matmul(x, wx), tc.matmul(h, wh)), b)
            return activation(pre)

        i = gate("input", tc.sigmoid)
        f = gate("forget", tc.sigmoid)
        g = gate("cell", tc.tanh)
        o = gate("output", tc.sigmoid)
        c_new = tc.add(tc.mul(f, c), tc.mul(i, g))
        h_new = tc.mul(o, tc.tanh(c_new))
        return h_new, c_new

    def named(self, prefix: str) -> dict[str, tc.Tensor]:
        out = {}
        for gate in GATE_NAMES:
            wx, wh, b = self.gates[gate]
            out[f"{prefix}.{gate}.wx"] = wx
            out[f"{prefix}.{gate}.wh"] = wh
            out[f"{prefix}.{gate}.b"] = b
        return out


class LstmParams:
    """Both directions of both layers; layer 2 reads 2*units-wide rows."""

    def __init__(self, layers, units: int, input_dim: int):
        self.layers = layers  # [(fwd, bwd), (fwd, bwd)]
        self.units = units
        self.input_dim = input_dim

    @classmethod
    def init(cls, rng, input_dim: int, units: int, std: float = 0.02):
        layers = []
        for li, in_dim in enumerate((input_dim, 2 * units)):
            fwd = LstmCell.init(rng, in_dim, units, std, f"lstm.l{li}.fwd")
            bwd = LstmCell.init(rng, in_dim, units, std, f"lstm.l{li}.bwd")
            layers.append((fwd, bwd))
        return cls(layers, units, input_dim)

    def named(self) -> dict[str, tc.Tensor]:
        out = {}
        for li, (fwd, bwd) in enumerate(self.layers):
            out.update(fwd.named(f"lstm.l{li}.fwd"))
            out.update(bwd.named(f"lstm.l{li}.bwd"))
        return out


def run_direction(rows, cell: LstmCell, reverse: bool = False):
    """Scan a row sequence with one cell; outputs align with the input order."""
    zeros = tc.Tensor(np.zeros((1, cell.units)))
    h, c = zeros, zeros
    ordered = list(reversed(rows)) if reverse else list(rows)
    outs = []
    for x in ordered:
        h, c = cell.step(x, h, c)
        outs.append(h)
    return list(reversed(outs)) if reverse else outs


def bilstm_encode(embedded: tc.Tensor, params: LstmParams) -> tc.Tensor:
    """Encode an (n, emb_dim) segment to H of shape (n, 2*units)."""
    n, width = embedded.shape
    if width != params.input_dim:
        raise ShapeError(
            f"bilstm_encode expects embedding width {params.input_dim}, got {width}"
        )
    rows = [tc.lookup_rows(embedded, [t]) for t in range(n)]
    for fwd, bwd in params.layers:
        f_out = run_direction(rows, fwd)
        b_out = run_direction(rows, bwd, reverse=True)
        rows = [tc.concat([f_out[t], b_out[t]], axis=1) for t in range(n)]
    return rows[0] if n == 1 else tc.concat(rows, axis=0)
