"""Small random graphs and instances, used by the test suite and for smoke runs."""

from __future__ import annotations

import networkx as nx
import numpy as np

from .grid import BsCurve, CriticalLoad, Instance, NbsParams, normalize_lines


def random_connected_graph(n: int, rng: np.random.Generator, extra_edge_prob: float = 0.2) -> nx.Graph:
    """Random labelled tree on ``1..n`` plus independent extra edges."""
    g = nx.Graph()
    g.add_nodes_from(range(1, n + 1))
    order = rng.permutation(np.arange(1, n + 1))
    for k in range(1, n):
        g.add_edge(int(order[k]), int(order[rng.integers(0, k)]))
    for u in range(1, n + 1):
        for v in range(u + 1, n + 1):
            if not g.has_edge(u, v) and rng.random() < extra_edge_prob:
                g.add_edge(u, v)
    return g


def random_nbs(rng: np.random.Generator, max_crank: int = 6, max_periods: int = 3, max_mw: int = 30) -> NbsParams:
    return NbsParams(
        crank_mw=float(rng.integers(0, max_crank + 1)),
        crank_periods=int(rng.integers(0, max_periods + 1)),
        ramp_periods=int(rng.integers(1, max_periods + 1)),
        max_mw=float(rng.integers(1, max_mw + 1)),
    )


def random_instance(rng: np.random.Generator, n_buses: int = 6, n_bs: int = 2, n_units: int = 3,
                    n_loads: int = 0, bs_mw: tuple[int, int] = (1, 5), extra_edge_prob: float = 0.2,
                    name: str = "random") -> Instance:
    """Connected instance with BS, NBS, critical-load and transshipment buses at random positions."""
    if n_bs + n_units + n_loads > n_buses:
        raise ValueError("more generators and loads than buses")
    g = random_connected_graph(n_buses, rng, extra_edge_prob)
    order = [int(b) for b in rng.permutation(np.arange(1, n_buses + 1))]
    bs = order[:n_bs]
    units = order[n_bs:n_bs + n_units]
    loads = order[n_bs + n_units:n_bs + n_units + n_loads]
    return Instance(
        buses=tuple(range(1, n_buses + 1)),
        lines=normalize_lines(g.edges),
        bs_generators={b: BsCurve.constant(float(rng.integers(bs_mw[0], bs_mw[1] + 1))) for b in sorted(bs)},
        nbs_generators={b: random_nbs(rng) for b in sorted(units)},
        critical_loads={b: CriticalLoad(b, float(rng.integers(1, 4))) for b in sorted(loads)},
        name=name,
    )


def worked_example() -> Instance:
    """One constant 10 MW BS feeding two NBS units on a triangle."""
    return Instance(
        buses=(1, 2, 3),
        lines=((1, 2), (1, 3), (2, 3)),
        bs_generators={1: BsCurve.constant(10.0)},
        nbs_generators={2: NbsParams(10.0, 2, 3, 60.0), 3: NbsParams(30.0, 6, 9, 180.0)},
        name="worked-example",
    )
