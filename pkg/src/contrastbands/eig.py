"""Smallest eigenpairs of sparse Hermitian pencils ``K u = lam M u``.

Small problems go to a dense LAPACK solve.  Larger ones use shift-invert
ARPACK with a sparse LU of ``K - sigma M``; the returned Ritz vectors are
cleaned by one Rayleigh-Ritz step so they are M-orthonormal even inside
degenerate clusters.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
MAX_RESTARTS = 300


class EigenSolverError(RuntimeError):
    pass


@dataclass
class EigenResult:
    values: np.ndarray
    vectors: Optional[np.ndarray]
    residuals: np.ndarray
    iterations: int = 0
    wall_time: float = 0.0
    method: str = "dense"
    sigma: Optional[float] = None
    valid: bool = True
    degenerate: list = field(default_factory=list)


def _pencil(problem):
    if isinstance(problem, tuple):
        return problem
    return problem.K, problem.M


def matrix_scale(k, m) -> float:
    """Ratio of 1-norms, a cheap magnitude estimate of the pencil's spectrum."""
    nk = spla.norm(k, 1) if sp.issparse(k) else np.linalg.norm(k, 1)
    nm = spla.norm(m, 1) if sp.issparse(m) else np.linalg.norm(m, 1)
    return float(nk / nm)


def default_shift(k, m) -> float:
    return -1e-3 * matrix_scale(k, m)


def residual_norms(k, m, values, vectors) -> np.ndarray:
    mv = m @ vectors
    r = k @ vectors - mv * values[None, :]
    return np.linalg.norm(r, axis=0) / np.maximum(np.linalg.norm(mv, axis=0), 1e-300)


def _finish(k, m, values, vectors, method, t0, iterations=0, sigma=None, valid=True,
            keep_vectors=True) -> EigenResult:
    res = residual_norms(k, m, values, vectors)
    order = np.lexsort((res, values))
    values, vectors, res = values[order], vectors[:, order], res[order]
    scale = max(1.0, float(np.max(np.abs(values)))) if len(values) else 1.0
    degenerate = [(i, i + 1) for i in range(len(values) - 1)
                  if values[i + 1] - values[i] < 1e-9 * scale]
    return EigenResult(values=values, vectors=vectors if keep_vectors else None,
                       residuals=res, iterations=iterations, wall_time=time.perf_counter() - t0,
                       method=method, sigma=sigma, valid=valid, degenerate=degenerate)


def _rayleigh_ritz(k, m, basis):
    kr = basis.conj().T @ (k @ basis)
    mr = basis.conj().T @ (m @ basis)
    kr = 0.5 * (kr + kr.conj().T)
    mr = 0.5 * (mr + mr.conj().T)
    vals, y = la.eigh(kr, mr)
    return vals, basis @ y


def solve_dense(problem, m_count: int, vectors: bool = True) -> EigenResult:
    t0 = time.perf_counter()
    k, m = _pencil(problem)
    kd = k.toarray() if sp.issparse(k) else np.asarray(k)
    md = m.toarray() if sp.issparse(m) else np.asarray(m)
    n = kd.shape[0]
    count = min(m_count, n)
    vals, vecs = la.eigh(kd, md, subset_by_index=[0, count - 1])
    return _finish(kd, md, vals, vecs, "dense", t0, keep_vectors=vectors)


def _factorize(k, m, sigma):
    a = (k - sigma * m).tocsc()
    return spla.splu(a)


def _arpack(k, m, count, sigma, tol, seed, ncv=None):
    lu = None
    last_err = None
    for s in (sigma, 2 * sigma):
        try:
            lu = _factorize(k, m, s)
            sigma = s
            break
        except RuntimeError as err:
            last_err = err
            log.warning("factorization of K - sigma M failed at sigma=%g: %s", s, err)
    if lu is None:
        raise EigenSolverError(f"factorization breakdown at sigma={sigma} and {2 * sigma}") from last_err
    n = k.shape[0]
    dtype = np.result_type(k.dtype, m.dtype)
    op_inv = spla.LinearOperator((n, n), matvec=lambda x: lu.solve(np.asarray(x, dtype=dtype)),
                                 dtype=dtype)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n)
    if np.iscomplexobj(np.empty(0, dtype)):
        v0 = v0 + 1j * rng.standard_normal(n)
    if ncv is None:
        ncv = min(n - 1, max(2 * count + 1, count + 20))
    kwargs = dict(k=count, M=m, sigma=sigma, which="LM", OPinv=op_inv, v0=v0, tol=0,
                  ncv=ncv, maxiter=MAX_RESTARTS * ncv)
    if np.issubdtype(dtype, np.complexfloating):
        vals, vecs = spla.eigs(k, **kwargs)
    else:
        vals, vecs = spla.eigsh(k, **kwargs)
    return np.real(vals), vecs, sigma


def solve_smallest(problem, m: int, tol: float = 1e-8, sigma: Optional[float] = None,
                   seed: int = 0, vectors: bool = True, dense_limit: int = DENSE_LIMIT,
                   force_iterative: bool = False) -> EigenResult:
    """The ``m`` smallest eigenpairs of the pencil.

    ``tol`` bounds the relative residual ``|K u - lam M u| / |M u|`` divided by
    ``max(1, |lam|)``; pairs above it mark the result invalid.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    k, mm = _pencil(problem)
    n = k.shape[0]
    if (n <= dense_limit or m >= n - 2) and not force_iterative:
        return solve_dense((k, mm), m, vectors)
    if sigma is None:
        sigma = default_shift(k, mm)
    return _solve_shifted(k, mm, m, sigma, tol, seed, vectors, "shift-invert")


def solve_near(problem, sigma: float, count: int, tol: float = 1e-8, seed: int = 0,
               vectors: bool = True) -> EigenResult:
    """The ``count`` eigenpairs closest to ``sigma``, in increasing order."""
    k, mm = _pencil(problem)
    n = k.shape[0]
    if n <= DENSE_LIMIT:
        t0 = time.perf_counter()
        kd, md = k.toarray(), mm.toarray()
        vals, vecs = la.eigh(kd, md)
        idx = np.sort(np.argsort(np.abs(vals - sigma), kind="stable")[:count])
        return _finish(kd, md, vals[idx], vecs[:, idx], "dense", t0, sigma=sigma,
                       keep_vectors=vectors)
    return _solve_shifted(k, mm, count, sigma, tol, seed, vectors, "shift-invert-interior")


def _solve_shifted(k, mm, count, sigma, tol, seed, vectors, method):
    t0 = time.perf_counter()
    valid = True
    try:
        vals, vecs, sigma = _arpack(k, mm, count, sigma, tol, seed)
    except spla.ArpackNoConvergence as err:
        log.warning("ARPACK did not converge: %d of %d pairs", len(err.eigenvalues), count)
        vals, vecs = np.real(err.eigenvalues), err.eigenvectors
        valid = False
        if vecs is None or len(vals) == 0:
            return EigenResult(values=np.array([]), vectors=None, residuals=np.array([]),
                               wall_time=time.perf_counter() - t0, method=method,
                               sigma=sigma, valid=False)
    vals, vecs = _rayleigh_ritz(k, mm, vecs)
    result = _finish(k, mm, vals, vecs, method, t0, iterations=0, sigma=sigma, valid=valid,
                     keep_vectors=True)
    scaled = result.residuals / np.maximum(1.0, np.abs(result.values))
    if np.any(scaled > tol):
        log.warning("%s: residual %.3g above tol %.3g", method, scaled.max(), tol)
        result.valid = False
    if not vectors:
        result.vectors = None
    return result


@dataclass
class VerificationReport:
    residual_violations: list
    orthonormality_violations: list
    max_residual: float
    max_orthonormality_error: float

    @property
    def ok(self) -> bool:
        return not self.residual_violations and not self.orthonormality_violations


def verify_result(problem, result: EigenResult, tol: float = 1e-8,
                  ortho_tol: float = 1e-8) -> VerificationReport:
    """Recompute residuals and M-orthonormality of ``result`` from scratch."""
    if result.vectors is None:
        raise ValueError("verification needs eigenvectors")
    k, m = _pencil(problem)
    u = result.vectors
    res = residual_norms(k, m, result.values, u)
    scaled = res / np.maximum(1.0, np.abs(result.values))
    gram = u.conj().T @ (m @ u)
    err = np.abs(gram - np.eye(gram.shape[0]))
    bad_res = [(int(i), float(scaled[i])) for i in np.flatnonzero(scaled > tol)]
    bad_orth = [(int(i), int(j), float(err[i, j])) for i, j in zip(*np.nonzero(err > ortho_tol))
                if i <= j]
    return VerificationReport(bad_res, bad_orth, float(scaled.max(initial=0.0)),
                              float(err.max(initial=0.0)))
