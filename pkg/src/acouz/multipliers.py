"""Multiplication operators in the boundary eigenbasis.

A scalar phi (function, measure, or rougher distribution, known through its
eigenbasis coefficients c_k) acts on boundary functions by multiplication.
In the orthonormal basis {Y_n} the truncated operator has entries

    A[m, n] = integral( phi * Y_n * Y_m )  =  sum_k c_k G[k, m, n],

with G[k, m, n] = integral(Y_k Y_m Y_n) the fully symmetric triple-product
tensor.  On curves the products of trigonometric modes expand exactly by
product-to-sum identities, so G carries no quadrature error; on surfaces
the products are integrated per triangle with a degree-4 rule.

All norm and compactness statements are about compressions P_N M_phi P_N:
the operator norm from H^{s1} to H^{-s2} of the compression is the largest
singular value of D(-s2) A D(-s1), with D(t) the diagonal of H^t weights,
and refinement in N stands in for the infinite-dimensional claims.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .boundary import (
    KIND_CONST, KIND_COS, KIND_SIN,
    BoundarySpectrum, SpectralFunction, SpectrumError, ht_weights,
)

PSD_TOL_FACTOR = 1e-10   # shared with the impedance module


def psd_tolerance(matrix_norm, factor=PSD_TOL_FACTOR):
    """Positive-semidefiniteness slack: factor * ||A||, floored at factor."""
    return factor * max(1.0, matrix_norm)


# ---------------------------------------------------------------------------
# triple products
# ---------------------------------------------------------------------------

def _product_terms_curve(spec, m, n):
    """Expansion of Y_m * Y_n in the basis of one curve component.

    Returns a list of ((comp, kind, freq), coefficient) pairs; the product of
    modes living on different components vanishes identically.
    """
    cm, cn = int(spec.mode_comp[m]), int(spec.mode_comp[n])
    if cm != cn:
        return []
    L = spec.geometry.component_lengths()[cm]
    a = 1.0 / math.sqrt(L)          # coefficient on the component constant
    b = 1.0 / math.sqrt(2.0 * L)    # coefficient on a cos/sin mode
    km, kn = int(spec.mode_freq[m]), int(spec.mode_freq[n])
    tm, tn = int(spec.mode_kind[m]), int(spec.mode_kind[n])
    if tm > tn or (tm == tn and km > kn):   # canonical order
        tm, tn, km, kn = tn, tm, kn, km
    C = cm

    if tm == KIND_CONST and tn == KIND_CONST:
        return [((C, KIND_CONST, 0), a)]
    if tm == KIND_CONST:
        return [((C, tn, kn), a)]
    if tm == KIND_COS and tn == KIND_COS:
        if km == kn:
            return [((C, KIND_COS, 2 * km), b), ((C, KIND_CONST, 0), a)]
        return [((C, KIND_COS, km + kn), b), ((C, KIND_COS, abs(km - kn)), b)]
    if tm == KIND_SIN and tn == KIND_SIN:
        if km == kn:
            return [((C, KIND_CONST, 0), a), ((C, KIND_COS, 2 * km), -b)]
        return [((C, KIND_COS, abs(km - kn)), b), ((C, KIND_COS, km + kn), -b)]
    # cos(km) * sin(kn): sin of sum/difference
    j, k = km, kn
    terms = [((C, KIND_SIN, j + k), b)]
    if j != k:
        sgn = 1.0 if k > j else -1.0
        terms.append(((C, KIND_SIN, abs(k - j)), sgn * b))
    return terms


_DEG4_BARY = np.array([
    [0.108103018168070, 0.445948490915965, 0.445948490915965],
    [0.445948490915965, 0.108103018168070, 0.445948490915965],
    [0.445948490915965, 0.445948490915965, 0.108103018168070],
    [0.816847572980459, 0.091576213509771, 0.091576213509771],
    [0.091576213509771, 0.816847572980459, 0.091576213509771],
    [0.091576213509771, 0.091576213509771, 0.816847572980459],
])
_DEG4_W = np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)


class TripleProductTensor:
    """Access to G[k, m, n] = integral(Y_k Y_m Y_n) for a stored spectrum.

    Curve spectra use the exact trigonometric expansion; surface spectra a
    degree-4 quadrature on every triangle.  The object is immutable after
    construction and safe to share.
    """

    def __init__(self, spec: BoundarySpectrum):
        self.spec = spec
        if spec.mode_comp is None:
            v = spec.geometry.vertices
            t = spec.geometry.triangles
            from .boundary import _triangle_areas
            areas = _triangle_areas(v, t)
            nq = _DEG4_BARY.shape[0]
            self._qw = (areas[:, None] * _DEG4_W[None, :]).ravel()
            # modes interpolated to quadrature points: (N, n_tri * nq)
            vals = spec.modes[:, t]                    # (N, n_tri, 3)
            self._qmodes = np.einsum("ntj,qj->ntq", vals, _DEG4_BARY).reshape(
                spec.count, -1)
        else:
            self._qw = None
            self._qmodes = None

    def product_coefficients(self, coeffs_m, coeffs_n=None):
        """Coefficients of the pointwise product f*g of two coefficient vectors.

        The result is indexed like the spectrum (length N); contributions to
        modes beyond the stored truncation are dropped, mirroring the
        compression semantics of the multiplier matrices.
        """
        spec = self.spec
        a = np.asarray(coeffs_m, dtype=complex)
        b = a if coeffs_n is None else np.asarray(coeffs_n, dtype=complex)
        out = np.zeros(spec.count, dtype=complex)
        if self._qmodes is not None:
            fa = a @ self._qmodes[:a.size]
            fb = b @ self._qmodes[:b.size]
            return self._qmodes @ (self._qw * fa * fb)
        am = np.flatnonzero(a)
        bn = np.flatnonzero(b)
        for m in am:
            for n in bn:
                for key, coef in _product_terms_curve(spec, m, n):
                    k = spec.mode_index(*key)
                    if k is not None:
                        out[k] += coef * a[m] * b[n]
        return out

    def entry(self, k, m, n):
        """G[k, m, n] (0-based indices)."""
        spec = self.spec
        if self._qmodes is not None:
            return float(np.sum(self._qw * self._qmodes[k] * self._qmodes[m]
                                * self._qmodes[n]))
        key = (int(spec.mode_comp[k]), int(spec.mode_kind[k]), int(spec.mode_freq[k]))
        for kk, coef in _product_terms_curve(spec, m, n):
            if kk == key:
                return coef
        return 0.0

    def contract(self, coeffs, N_trunc):
        """A[m, n] = sum_k coeffs[k] G[k, m, n] for m, n < N_trunc."""
        spec = self.spec
        c = np.asarray(coeffs, dtype=complex)
        A = np.zeros((N_trunc, N_trunc), dtype=complex)
        if self._qmodes is not None:
            phi_q = c @ self._qmodes[:c.size]
            Yq = self._qmodes[:N_trunc]
            A = (Yq * (self._qw * phi_q)[None, :]) @ Yq.T
            return A
        for m in range(N_trunc):
            for n in range(m, N_trunc):
                val = 0.0 + 0.0j
                for key, coef in _product_terms_curve(spec, m, n):
                    k = spec.mode_index(*key)
                    if k is not None and k < c.size:
                        val += coef * c[k]
                A[m, n] = val
                A[n, m] = val      # G is symmetric in (m, n)
        return A


# ---------------------------------------------------------------------------
# multiplier matrices
# ---------------------------------------------------------------------------

@dataclass
class MultiplierMatrix:
    """Compression P_N M_phi P_N with Sobolev-exponent bookkeeping.

    ``matrix[m, n] = <M_phi Y_n, Y_m> = integral(phi Y_n Y_m)``; the target
    mapping H^{s1} -> H^{-s2} only enters through the diagonal weights used
    by :func:`multiplier_norm` and :func:`compactness_profile`.
    """

    spectrum: BoundarySpectrum
    matrix: np.ndarray
    s1: float
    s2: float
    N_trunc: int

    def weighted(self):
        d1 = ht_weights(self.spectrum, -self.s1)[:self.N_trunc]
        d2 = ht_weights(self.spectrum, -self.s2)[:self.N_trunc]
        return d2[:, None] * self.matrix * d1[None, :]

    def hermitian_part(self):
        return 0.5 * (self.matrix + self.matrix.conj().T)

    def norm(self):
        return float(np.linalg.norm(self.matrix, 2))


def build_multiplier(phi, s1, s2, N_trunc, tensor=None):
    """Truncated matrix of multiplication by phi in the eigenbasis."""
    spec = phi.spectrum
    if N_trunc > spec.count:
        raise SpectrumError(f"truncation {N_trunc} exceeds the spectrum ({spec.count})")
    tensor = tensor or TripleProductTensor(spec)
    A = tensor.contract(phi.coeffs, N_trunc)
    return MultiplierMatrix(spectrum=spec, matrix=A, s1=s1, s2=s2, N_trunc=N_trunc)


def multiplier_norm(A: MultiplierMatrix):
    """Largest singular value of D(-s2) A D(-s1): the truncated operator
    norm H^{s1} -> H^{-s2}."""
    return float(np.linalg.norm(A.weighted(), 2))


def compactness_profile(A: MultiplierMatrix, ranks):
    """Singular values of the weighted matrix at the requested 1-based ranks.

    A numerically compact multiplier shows sigma_k -> 0 with growing k,
    stably under truncation refinement; an identity-weighted symbol stays
    bounded away from zero.
    """
    sv = np.linalg.svd(A.weighted(), compute_uv=False)
    out = []
    for k in ranks:
        if not 1 <= k <= sv.size:
            raise SpectrumError(f"rank {k} outside 1..{sv.size}")
        out.append(float(sv[k - 1]))
    return out


def positivity_test(phi, N_trunc=None, tol=None, tensor=None):
    """Multiplicative positivity of phi: PSD Hermitian part of M_phi.

    phi >= 0 as a measure/distribution iff the Hermitian part of its
    multiplication operator is positive semidefinite; at truncation this is
    tested on the compression with slack ``tol`` (default scales with the
    matrix norm).
    """
    N_trunc = N_trunc or phi.n_coeffs
    A = build_multiplier(phi, 0.0, 0.0, N_trunc, tensor=tensor)
    H = A.hermitian_part()
    min_eig = float(np.linalg.eigvalsh(H)[0]) if N_trunc else 0.0
    if tol is None:
        tol = psd_tolerance(A.norm())
    return {"is_nonneg": bool(min_eig >= -tol), "min_eig": min_eig, "tol": tol}


def accretivity_integral_test(z, test_count=32, seed=0, tensor=None):
    """Check integral(re(z) |g|^2) >= 0 over probe functions g.

    Probes are ``test_count`` random band-limited functions plus the
    Rayleigh minimizer of the Hermitian part, so the outcome is exact and
    agrees with :func:`positivity_test` applied to re(z).  Each value is
    computed through the triple-product expansion of |g|^2, not through the
    multiplier matrix.
    """
    spec = z.spectrum
    N = z.n_coeffs
    re_c = z.coeffs.real.astype(complex)
    tensor = tensor or TripleProductTensor(spec)

    A = tensor.contract(re_c, N)
    H = 0.5 * (A + A.conj().T)
    tol = psd_tolerance(float(np.linalg.norm(A, 2)))
    _, eigvecs = np.linalg.eigh(H)

    rng = np.random.default_rng(seed)
    probes = []
    for _ in range(test_count):
        width = int(rng.integers(1, min(12, N) + 1))
        start = int(rng.integers(0, N - width + 1))
        g = np.zeros(N, dtype=complex)
        g[start:start + width] = rng.standard_normal(width) + 1j * rng.standard_normal(width)
        g /= np.linalg.norm(g)
        probes.append(g)
    probes.append(eigvecs[:, 0].astype(complex))

    ok = True
    values = []
    for g in probes:
        sq = tensor.product_coefficients(g, np.conj(g))
        val = np.dot(re_c, sq[:re_c.size])
        if abs(val.imag) > 1e-9 * max(1.0, abs(val)):
            raise SpectrumError("integral of re(z)|g|^2 came out non-real")
        values.append(float(val.real))
        ok = ok and (val.real >= -tol)
    return {"nonneg": bool(ok), "values": values, "tol": tol}


# ---------------------------------------------------------------------------
# L^q embedding case analysis
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LqEmbeddingQuery:
    """Exponent bookkeeping for L^q -> multiplier-space embeddings."""

    d: int
    s1: float
    s2: float
    q: float    # may be math.inf

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if not (0.0 <= self.s1 <= 1.0 and 0.0 <= self.s2 <= 1.0):
            raise ValueError("exponents s1, s2 must lie in [0, 1]")
        if not (self.q >= 1.0):
            raise ValueError("q must lie in [1, inf]")

    @property
    def kappa(self):
        return (2.0 * self.s1 / (self.d - 1), 2.0 * self.s2 / (self.d - 1))

    @property
    def pi(self):
        k1, k2 = self.kappa
        return ((1.0 - k1) / 2.0, (1.0 - k2) / 2.0)

    @property
    def pi0(self):
        return (self.s1 + self.s2) / (self.d - 1)


def lq_embedding_case(query: LqEmbeddingQuery, eq_tol=1e-12):
    """First sufficient condition under which L^q multiplies H^{s1} -> H^{-s2}.

    Pure arithmetic case analysis; returns ``{"case": "none", "embeds":
    "unknown"}`` when no sufficient condition applies (which does not assert
    a non-embedding).
    """
    k1, k2 = query.kappa
    q = query.q
    ssum = query.s1 + query.s2
    q_crit = (query.d - 1) / ssum if ssum > 0 else math.inf

    if k1 < 1 and k2 < 1 and q >= q_crit:
        return {"case": "i", "embeds": True}
    if k1 <= 1 and k2 <= 1 and (k1 - 1) * (k2 - 1) == 0 and q > q_crit:
        return {"case": "ii", "embeds": True}
    if min(k1, k2) < 1 < max(k1, k2):
        q_iii = 2.0 * (query.d - 1) / (query.d - 1 + 2.0 * min(query.s1, query.s2))
        if math.isfinite(q) and abs(q - q_iii) <= eq_tol:
            return {"case": "iii", "embeds": True}
    if k1 + k2 > 2 and (k1 - 1) * (k2 - 1) == 0 and q > 1:
        return {"case": "iv", "embeds": True}
    if k1 > 1 and k2 > 1 and math.isfinite(q) and abs(q - 1.0) <= eq_tol:
        return {"case": "v", "embeds": True}
    return {"case": "none", "embeds": "unknown"}


# ---------------------------------------------------------------------------
# Cantor-measure impedance coefficients
# ---------------------------------------------------------------------------

def cantor_exponential_moments(r, freqs, n_samples=10**6, seed=0, stratified=True):
    """E[exp(2 pi i k X)] for X distributed per the symmetric Cantor measure
    with dissection ratio r on [0, 1].

    X = (1-r) * sum_i eps_i r^i with i.i.d. fair bits eps_i.  The stratified
    sampler enumerates all prefixes of depth J = floor(log2(n_samples)) and
    randomizes the remainder, so the leading J bits carry no sampling error
    at all; the plain sampler draws every bit independently (the brute-force
    oracle).
    """
    if not 0.0 < r < 0.5:
        raise ValueError("dissection ratio must lie in (0, 1/2)")
    freqs = np.asarray(freqs, dtype=int)
    rng = np.random.default_rng(seed)
    scale = 1.0 - r

    if stratified:
        J = max(1, min(22, int(math.floor(math.log2(max(2, n_samples))))))
        n = 1 << J
        idx = np.arange(n, dtype=np.uint64)
        x = np.zeros(n)
        for i in range(J):
            bit = ((idx >> np.uint64(i)) & np.uint64(1)).astype(float)
            x += bit * (scale * r ** i)
        # random Cantor-distributed remainder of depth ~40 inside each leaf
        extra = max(8, min(48, int(math.ceil(-40.0 / math.log10(r)))))
        w = rng.integers(0, 2 ** 62, size=n, dtype=np.uint64)
        for i in range(extra):
            bit = ((w >> np.uint64(i)) & np.uint64(1)).astype(float)
            x += bit * (scale * r ** (J + i))
    else:
        n = int(n_samples)
        depth = max(8, min(60, int(math.ceil(-18.0 / math.log10(r)))))
        x = np.zeros(n)
        for i in range(depth):
            bit = rng.integers(0, 2, size=n).astype(float)
            x += bit * (scale * r ** i)

    out = np.empty(freqs.size, dtype=complex)
    kmax = int(freqs.max()) if freqs.size else 0
    if freqs.size and kmax <= 4 * freqs.size:
        # dense band: iterate powers of exp(2 pi i x)
        z = np.exp(2j * np.pi * x)
        zk = np.ones_like(z)
        table = {}
        for k in range(1, kmax + 1):
            zk = zk * z
            table[k] = zk.mean()
        for j, k in enumerate(freqs):
            out[j] = 1.0 if k == 0 else table[int(k)]
    else:
        for j, k in enumerate(freqs):
            out[j] = np.exp(2j * np.pi * k * x).mean()
    return out


def cantor_measure_coeffs(spec, r, target_component=0, N_trunc=None,
                          oracle_samples=10**6, seed=0, stratified=True):
    """Eigenbasis coefficients of a Cantor measure pushed onto one component.

    The unit-mass measure on [0, 1] is transported by the arclength
    parametrization x -> s = x * L of the closed component, so that
    c_n = integral(Y_n dmu); the constant mode picks up measure^(-1/2).
    """
    if spec.mode_comp is None:
        raise SpectrumError("cantor_measure_coeffs needs a curve spectrum")
    N_trunc = N_trunc or spec.count
    L = spec.geometry.component_lengths()[target_component]

    idx = np.arange(N_trunc)
    on = spec.mode_comp[:N_trunc] == target_component
    freqs = sorted({int(k) for k in spec.mode_freq[:N_trunc][on] if k > 0})
    moments = cantor_exponential_moments(r, np.array(freqs, dtype=int),
                                         n_samples=oracle_samples, seed=seed,
                                         stratified=stratified)
    table = dict(zip(freqs, moments))

    c = np.zeros(N_trunc, dtype=complex)
    for n in idx[on]:
        kind = spec.mode_kind[n]
        k = int(spec.mode_freq[n])
        if kind == KIND_CONST:
            c[n] = 1.0 / math.sqrt(L)
        elif kind == KIND_COS:
            c[n] = math.sqrt(2.0 / L) * table[k].real
        else:
            c[n] = math.sqrt(2.0 / L) * table[k].imag
    return SpectralFunction(spec, c)
