"""Portable xorshift64* generator.

The stream is fully determined by the seed so sample sets can be reproduced
outside Python:

    state  = splitmix64(seed)            (replaced by 0x9E3779B97F4A7C15 if 0)
    x ^= x >> 12;  x ^= x << 25;  x ^= x >> 27      (all mod 2**64)
    output = (x * 0x2545F4914F6CDD1D) mod 2**64
    uniform = (output >> 11) * 2**-53               in [0, 1)

splitmix64(z): z += 0x9E3779B97F4A7C15; z = (z ^ z>>30) * 0xBF58476D1CE4E5B9;
z = (z ^ z>>27) * 0x94D049BB133111EB; return z ^ z>>31 (all mod 2**64).
"""

import math

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
DEFAULT_SEED = 20240607


def splitmix64(z):
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class XorShift64Star:
    def __init__(self, seed=DEFAULT_SEED):
        state = splitmix64(int(seed) & _MASK)
        self.state = state if state else _GOLDEN

    def next_u64(self):
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK

    def uniform(self, low=0.0, high=1.0):
        u = (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)
        return low + (high - low) * u

    def uniforms(self, size, low=0.0, high=1.0):
        return np.array([self.uniform(low, high) for _ in range(size)])

    def integer(self, low, high):
        """Uniform integer in [low, high] inclusive."""
        return low + int(self.uniform() * (high - low + 1))

    def normals(self, size):
        # Box-Muller on the uniform stream
        out = np.empty(size)
        for k in range(size):
            u1 = 1.0 - self.uniform()
            u2 = self.uniform()
            out[k] = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        return out

    def simplex(self, n):
        """Uniform sample on the unit simplex (flat Dirichlet)."""
        e = np.array([-math.log(1.0 - self.uniform()) for _ in range(n)])
        return e / e.sum()

    def simplex_mixed(self, n):
        """Simplex sample that also hits faces, vertices and near-vertex states.

        Cycles through four regimes chosen by one uniform draw: interior,
        concentrated near a vertex, exact face (some entries zero), exact vertex.
        """
        regime = self.integer(0, 3)
        if regime == 0:
            return self.simplex(n)
        if regime == 1:
            c = self.simplex(n) ** 8
            return c / c.sum()
        if regime == 2:
            c = self.simplex(n)
            keep = self.integer(1, n - 1)
            order = np.argsort(self.uniforms(n), kind="stable")
            c[order[keep:]] = 0.0
            return c / c.sum()
        c = np.zeros(n)
        c[self.integer(0, n - 1)] = 1.0
        return c

    def simplex_floor(self, n, floor):
        """Uniform sample on the simplex restricted to entries >= floor."""
        if n * floor > 1.0 + 1e-15:
            raise ValueError("floor too large for the simplex")
        return floor + max(1.0 - n * floor, 0.0) * self.simplex(n)
