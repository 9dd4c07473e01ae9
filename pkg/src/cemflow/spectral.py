"""Per-coarse-element spectral problems, the auxiliary space, and the π projector.

Each coarse element carries the generalized problem 𝒜_{K_i} φ = λ s_i φ on all
fine dofs of its closure (natural, no essential constraint). The lowest l_m
eigenvectors span V^aux_i; the (l_m+1)-th eigenvalue feeds Λ.

V^aux members live elementwise (zero-extended in L² outside their element), so
the discrete π is realized by per-element coefficient functionals
c_ij(v) = (S_i φ_i^j)ᵀ v; the penalty matrix s(π·, π·) is QᵀQ with Q the stack
of those functionals. An AuxExpansion carries exact coefficients plus a nodal
view; nodal vectors alone cannot represent the elementwise structure at shared
element-boundary nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import AssembledForms, ElementForms
from .cache import cache_load, cache_store


class SpectralError(RuntimeError):
    pass


@dataclass
class ElementEigen:
    element: int
    closure: np.ndarray
    eigenvalues: np.ndarray      # (l_m + 1,) ascending real parts
    vectors: np.ndarray          # (n_loc, l_m) s-orthonormalized real vectors
    raw_vectors: np.ndarray      # (n_loc, l_m) unmodified eigenvectors (complex ok)
    raw_values: np.ndarray       # (l_m,) matching raw eigenvalues
    max_imag: float              # largest |Im λ| among kept eigenvalues


def _sorted_eig(A: np.ndarray, S: np.ndarray, symmetrize: bool):
    if symmetrize:
        vals, vecs = sla.eigh(0.5 * (A + A.T), S)
        return vals.astype(complex), vecs.astype(complex)
    vals, vecs = sla.eig(A, S)
    order = np.argsort(vals.real, kind="stable")
    return vals[order], vecs[:, order]


def _s_orthonormalize(vecs: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Modified Gram-Schmidt in the S inner product; spans are preserved.

    Real parts of a complex-conjugate pair coincide, so a vector that collapses
    during orthogonalization falls back to its imaginary part.
    """
    out = np.empty((vecs.shape[0], vecs.shape[1]))
    for j in range(vecs.shape[1]):
        v = vecs[:, j].real.copy()
        for attempt in range(2):
            w = v.copy()
            for k in range(j):
                w -= (out[:, k] @ (S @ w)) * out[:, k]
            # second MGS sweep for numerical orthogonality
            for k in range(j):
                w -= (out[:, k] @ (S @ w)) * out[:, k]
            nrm = np.sqrt(w @ (S @ w))
            if nrm > 1e-10 * np.sqrt(max(v @ (S @ v), 1e-300)) and nrm > 0:
                out[:, j] = w / nrm
                break
            v = vecs[:, j].imag.copy()
        else:
            raise SpectralError("degenerate eigenvector could not be orthonormalized")
    return out


def solve_local_spectral(ef: ElementForms, l_m: int, symmetrize: bool = False) -> ElementEigen:
    """Lowest l_m eigenpairs plus the (l_m+1)-th eigenvalue of (𝒜_{K_i}, s_i)."""
    n_loc = len(ef.closure)
    if l_m + 1 > n_loc:
        raise SpectralError(f"l_m+1={l_m + 1} exceeds local dof count {n_loc}")
    A = ef.A.toarray()
    S = ef.S.toarray()
    try:
        vals, vecs = _sorted_eig(A, S, symmetrize)
    except sla.LinAlgError as exc:   # pragma: no cover
        raise SpectralError(f"eigen-solver failure on element {ef.element}: {exc}") from exc
    kept_vals = vals[: l_m + 1]
    kept_vecs = vecs[:, :l_m]
    max_imag = float(np.max(np.abs(kept_vals.imag))) if len(kept_vals) else 0.0
    ortho = _s_orthonormalize(kept_vecs, S)
    return ElementEigen(
        element=ef.element,
        closure=ef.closure,
        eigenvalues=kept_vals.real.copy(),
        vectors=ortho,
        raw_vectors=kept_vecs.copy(),
        raw_values=vals[:l_m].copy(),
        max_imag=max_imag,
    )


@dataclass
class AuxExpansion:
    """A member of V^aux: per-element coefficients against the kept eigenvectors."""

    coeffs: np.ndarray
    space: "AuxSpace" = field(repr=False)

    def fine(self) -> np.ndarray:
        """Nodal-sum view (shared element-boundary nodes accumulate)."""
        return self.space.E @ self.coeffs

    def s_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


class AuxSpace:
    """Auxiliary eigenspaces of all coarse elements plus the π apparatus."""

    def __init__(self, elements: list[ElementEigen], n_fine: int, l_m: int):
        self.elements = elements
        self.l_m = l_m
        self.n_fine = n_fine
        self.n_aux = len(elements) * l_m
        self.lambda_next = np.array([e.eigenvalues[l_m] for e in elements])
        self.lambda_kept = np.array([e.eigenvalues[l_m - 1] for e in elements])
        self.max_imag = max((e.max_imag for e in elements), default=0.0)

    def attach_projection(self, forms: AssembledForms):
        """Build Q (coefficient functionals) and E (embedded basis)."""
        rows_Q, cols, vals_Q, vals_E = [], [], [], []
        for k, e in enumerate(self.elements):
            S = forms.element_forms(e.element).S
            SV = S @ e.vectors                     # (n_loc, l_m)
            for j in range(self.l_m):
                r = k * self.l_m + j
                rows_Q.append(np.full(len(e.closure), r))
                cols.append(e.closure)
                vals_Q.append(SV[:, j])
                vals_E.append(e.vectors[:, j])
        rows = np.concatenate(rows_Q)
        cols = np.concatenate(cols)
        self.Q = sp.coo_matrix((np.concatenate(vals_Q), (rows, cols)),
                               shape=(self.n_aux, self.n_fine)).tocsr()
        self.E = sp.coo_matrix((np.concatenate(vals_E), (cols, rows)),
                               shape=(self.n_fine, self.n_aux)).tocsc()
        return self

    def element_slice(self, i: int) -> slice:
        return slice(i * self.l_m, (i + 1) * self.l_m)


def build_aux_space(forms: AssembledForms, l_m: int, symmetrize: bool = False,
                    cache_key: str | None = None) -> AuxSpace:
    coarse = forms.grids.coarse
    n = forms.grids.fine.n_nodes
    cached = cache_load("aux", cache_key)
    if cached is not None:
        elements = []
        offs = 0
        sizes = cached["sizes"].astype(int)
        for i in range(coarse.n_elements):
            n_loc = sizes[i]
            elements.append(ElementEigen(
                element=i,
                closure=cached["closures"][offs:offs + n_loc].astype(int),
                eigenvalues=cached["eigenvalues"][i],
                vectors=cached["vectors"][offs:offs + n_loc],
                raw_vectors=cached["raw_vectors"][offs:offs + n_loc],
                raw_values=cached["raw_values"][i],
                max_imag=float(cached["max_imag"][i]),
            ))
            offs += n_loc
        return AuxSpace(elements, n, l_m).attach_projection(forms)
    elements = [solve_local_spectral(forms.element_forms(i), l_m, symmetrize)
                for i in range(coarse.n_elements)]
    if cache_key is not None:
        cache_store(
            "aux", cache_key,
            sizes=np.array([len(e.closure) for e in elements]),
            closures=np.concatenate([e.closure for e in elements]),
            eigenvalues=np.stack([e.eigenvalues for e in elements]),
            vectors=np.concatenate([e.vectors for e in elements], axis=0),
            raw_vectors=np.concatenate(
                [e.raw_vectors for e in elements], axis=0).astype(complex),
            raw_values=np.stack([e.raw_values for e in elements]).astype(complex),
            max_imag=np.array([e.max_imag for e in elements]),
        )
    return AuxSpace(elements, n, l_m).attach_projection(forms)


class PiProjector:
    """s-orthogonal projection onto V^aux (elementwise exact)."""

    def __init__(self, space: AuxSpace):
        self.space = space

    def coefficients(self, v) -> np.ndarray:
        if isinstance(v, AuxExpansion):
            return v.coeffs.copy()
        return self.space.Q @ np.asarray(v)

    def apply(self, v) -> AuxExpansion:
        return AuxExpansion(self.coefficients(v), self.space)

    def penalty_matrix(self) -> sp.csr_matrix:
        """ΠᵀSΠ = QᵀQ, the s(π·, π·) quadratic form on fine vectors."""
        Q = self.space.Q
        return (Q.T @ Q).tocsr()


def pi_apply(proj: PiProjector, v) -> AuxExpansion:
    return proj.apply(v)


def lambda_stats(aux: AuxSpace) -> tuple[float, float]:
    """Λ = min_i λ^{l_m+1}_i and Λ' = max_i λ^{l_m}_i."""
    return float(aux.lambda_next.min()), float(aux.lambda_kept.max())
