import numpy as np
import pytest

from fieldcircuit.structure import EnergySystem, Partition


def random_energy_system(rng, n1=3, n2=3, n3=2, m=2, singular_e=False,
                         lossless=False):
    """Random valid quadratic system: skew J, PSD R, SPD masses, EᵀS = M2.

    E is derived from (S, M2) as S^{-T} M2 so the effort compatibility holds
    exactly.  With `singular_e`, M2 gets a zero eigenvalue.  With `lossless`,
    R = 0.
    """
    n = n1 + n2 + n3

    def spd(k, singular=False):
        if k == 0:
            return np.zeros((0, 0))
        g = rng.standard_normal((k, k))
        mat = g @ g.T + k * np.eye(k)
        if singular and k > 0:
            w, v = np.linalg.eigh(mat)
            w[0] = 0.0
            mat = (v * w) @ v.T
            mat = 0.5 * (mat + mat.T)
        return mat

    m1 = spd(n1)
    m2 = spd(n2, singular=singular_e)
    s = spd(n2) + np.eye(n2)          # SPD, hence invertible
    e = np.linalg.solve(s.T, m2) if n2 else np.zeros((0, 0))
    a = rng.standard_normal((n, n))
    j = 0.5 * (a - a.T)
    if lossless:
        r = np.zeros((n, n))
    else:
        g = rng.standard_normal((n, n))
        r = g @ g.T + 0.5 * np.eye(n)  # SPD keeps the algebraic block regular
    b = rng.standard_normal((n, m))
    return EnergySystem(Partition(n1, n2, n3, m), E=e, J=j, R=r, B=b,
                        M1=m1, M2=m2, S=s)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
