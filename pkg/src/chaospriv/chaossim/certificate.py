"""Demidovich-type convergence certificate for responders."""

from dataclasses import dataclass

import numpy as np

from .._validation import check_square_matrix
from .systems import AffineResponder


@dataclass(frozen=True, eq=False)
class ConvergenceCertificate:
    P: np.ndarray
    q_eigenvalues: np.ndarray
    max_eigenvalue_of_Q: float
    c: float
    alpha: float
    lambda_max_P: float
    valid: bool

    def to_dict(self):
        return {
            "P": self.P.tolist(),
            "q_eigenvalues": [float(v) for v in self.q_eigenvalues],
            "max_eigenvalue_of_Q": float(self.max_eigenvalue_of_Q),
            "c": float(self.c),
            "alpha": float(self.alpha),
            "lambda_max_P": float(self.lambda_max_P),
            "valid": bool(self.valid),
        }


def symmetric_part(P, J):
    """``(P J + J^T P) / 2``."""
    return 0.5 * (P @ J + J.T @ P)


def convergence_certificate(system, P=None, sample_box=None, n_samples=2000, seed=0, tol=1e-12):
    """Check that every eigenvalue of ``(P J + J^T P)/2`` is at most ``-c < 0``.

    For affine responders the Jacobian is the constant matrix ``A``.  Other
    systems are probed at ``n_samples`` points drawn uniformly from
    ``sample_box = (state_low, state_high, u_low, u_high)`` and the worst
    case is reported; such a sampled certificate is evidence, not proof.
    """
    n = system.dimension
    P = np.eye(n) if P is None else check_square_matrix(P, "P")
    if P.shape != (n, n):
        raise ValueError(f"P must be {n}x{n}")
    if not np.allclose(P, P.T, rtol=0, atol=1e-12):
        raise ValueError("P must be symmetric")
    p_eigs = np.linalg.eigvalsh(P)
    if p_eigs[0] <= 0:
        raise ValueError("P must be positive definite")

    if isinstance(system, AffineResponder):
        worst = np.linalg.eigvalsh(symmetric_part(P, np.asarray(system.A)))
    else:
        if sample_box is None:
            raise ValueError("non-affine systems need a sample_box to probe the Jacobian")
        lo, hi, ulo, uhi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in sample_box)
        rng = np.random.default_rng(seed)
        worst = None
        for _ in range(n_samples):
            x = rng.uniform(lo, hi, size=n) if lo.size == 1 else rng.uniform(lo, hi)
            u = rng.uniform(ulo, uhi)
            u = u[0] if u.size == 1 else u
            eigs = np.linalg.eigvalsh(symmetric_part(P, system.jacobian(x, u)))
            if worst is None or eigs[-1] > worst[-1]:
                worst = eigs
    lam = float(worst[-1])
    c = -lam
    lam_p = float(p_eigs[-1])
    return ConvergenceCertificate(P=np.array(P), q_eigenvalues=np.array(worst),
                                  max_eigenvalue_of_Q=lam, c=c, alpha=c / lam_p,
                                  lambda_max_P=lam_p, valid=bool(lam < -tol))
