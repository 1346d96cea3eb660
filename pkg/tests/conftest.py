import numpy as np
from hypothesis import HealthCheck, settings

settings.register_profile(
    "package",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("package")


class ScriptedRNG:
    """Stand-in for a numpy Generator that replays queued uniforms.

    Lets a test force a particular measurement branch: ``random()``
    pops one value, ``random(n)`` pops ``n``.
    """

    def __init__(self, values):
        self._queue = [float(v) for v in values]

    def random(self, size=None):
        if size is None:
            return self._queue.pop(0)
        return np.array([self._queue.pop(0) for _ in range(size)])

    @property
    def remaining(self):
        return len(self._queue)


def random_state(basis, rng):
    """Haar-ish normalized state on ``basis``."""
    from transmon_mipt import StateVector

    amps = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    amps /= np.linalg.norm(amps)
    return StateVector(basis, amps)


def embed_full(psi):
    """Amplitudes of ``psi`` placed in the full d**L tensor basis."""
    basis = psi.basis
    L, d = basis.L, basis.d
    weights = d ** np.arange(L - 1, -1, -1, dtype=np.int64)
    codes = basis.states.astype(np.int64) @ weights
    full = np.zeros(d**L, dtype=complex)
    full[codes] = psi.amps
    return full
