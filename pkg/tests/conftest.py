import warnings

import numpy as np
import pytest

import esdakit as ek
from esdakit import _kernels
from esdakit.synthetic import grid_edges, grid_lattice

warnings.filterwarnings("ignore", message=".*TBB.*")


@pytest.fixture(scope="session", autouse=True)
def compiled_kernels():
    """JIT-compile the permutation kernels once so timed tests see steady state."""
    _kernels.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(20240915)


def grid_weights(rows, cols, rule="queen", standardize=True):
    w = ek.from_edge_list(rows * cols, grid_edges(rows, cols, rule))
    return ek.row_standardize(w) if standardize else w


def random_connected_weights(n, rng, extra_edge_prob=0.08):
    """Random connected graph: a random spanning tree plus extra edges."""
    order = rng.permutation(n)
    edges = [(int(order[i]), int(order[rng.integers(0, i)])) for i in range(1, n)]
    ii, jj = np.triu_indices(n, k=1)
    pick = rng.random(ii.size) < extra_edge_prob
    edges.extend(zip(ii[pick].tolist(), jj[pick].tolist()))
    return ek.from_edge_list(n, edges)


@pytest.fixture
def small_grid():
    return grid_lattice(3, 3)
