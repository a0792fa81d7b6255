import numpy as np
import pytest

from riscf import backend, desk_config
from riscf.orchestrator import rng_streams
from riscf.twin import TwinEnvironment


@pytest.fixture(params=backend.available_backends())
def each_backend(request):
    """Run the test once per available kernel backend."""
    previous = backend.get_backend()
    backend.set_backend(request.param)
    yield request.param
    backend.set_backend(previous)


def make_env(seed=0, **overrides) -> TwinEnvironment:
    cfg = desk_config(seed=seed, **overrides)
    return TwinEnvironment.from_config(cfg, rng_streams(seed)["env"])


def feasible_assoc(k, m):
    """Identity-ish feasible matrix: AP j serves UE j % K."""
    x = np.zeros((k, m), dtype=np.int8)
    x[np.arange(m) % k, np.arange(m)] = 1
    return x
