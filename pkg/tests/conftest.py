import json
from pathlib import Path

import numpy as np
import pytest

from hetcert.maps import MapContext
from hetcert.spaces import SpaceWeights, TruncationScheme
from hetcert.state import MASK_BLOCKS, SolverConfig, TangentVector
from hetcert.systems import builtin_gray_scott, builtin_swift_hohenberg

DATA = Path(__file__).parent / "data"


def tiny_scheme():
    return TruncationScheme(N_gamma=3, N_v=3, N_wF=3, N_wT=2, N_a=4, N_p=3)


@pytest.fixture(scope="session")
def ctx_sh_tiny():
    return MapContext(builtin_swift_hohenberg(), tiny_scheme(), SpaceWeights(),
                      SolverConfig())


@pytest.fixture(scope="session")
def ctx_gs_tiny():
    return MapContext(builtin_gray_scott(), tiny_scheme(), SpaceWeights(),
                      SolverConfig())


def random_state(ctx, rng, scale=0.2):
    """Feasible random state: scalars in-range, sequences O(scale)."""
    L = ctx.layout
    vec = (rng.standard_normal(L.total) + 1j * rng.standard_normal(L.total)) * scale
    x = L.unflatten(vec)
    x.alpha = complex(0.3 + 0.1 * rng.random())
    x.lam = complex(0.4 + 0.2 * rng.random())
    x.omega = complex(0.9 + 0.2 * rng.random())
    x.L_c = complex(1.0 + rng.random())
    ang = rng.random() * 6.28
    x.theta1, x.theta2 = complex(np.cos(ang)), complex(np.sin(ang))
    r = 0.3 + 0.4 * rng.random()
    ang2 = rng.random() * 6.28
    x.sigma1, x.sigma2 = complex(r * np.cos(ang2)), complex(r * np.sin(ang2))
    xi = list((rng.standard_normal(10) + 1j * rng.standard_normal(10)) * 0.3)
    xi[0] = complex(-0.3, 1.0)
    xi[5] = complex(-0.3, -1.0)
    x.xi = xi
    return x


def random_tangent(ctx, rng):
    L = ctx.layout
    vec = rng.standard_normal(L.total) * 0.3
    out = np.zeros(L.total, dtype=np.complex128)
    for i in MASK_BLOCKS:
        sl = L.slice_of(i)
        out[sl] = vec[sl]
    return TangentVector(L.unflatten(out))


@pytest.fixture(scope="session")
def sh_desk_state():
    """The precomputed Swift-Hohenberg connection near alpha = 0.35.

    Regenerable from scratch with hetcert.continuation.initial_guess; tests
    always re-refine it with Newton before use, so it is a seed, not an
    oracle.
    """
    path = DATA / "sh_desk_state.json"
    if not path.exists():
        pytest.skip("desk-scale fixture not generated")
    return json.loads(path.read_text())


def desk_scheme():
    return TruncationScheme(N_gamma=20, N_v=20, N_wF=25, N_wT=12, N_a=60, N_p=15)


@pytest.fixture(scope="session")
def ctx_sh_desk():
    return MapContext(builtin_swift_hohenberg(), desk_scheme(), SpaceWeights(),
                      SolverConfig())
