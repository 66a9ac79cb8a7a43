"""Operator comparison metrics."""

import numpy as np

__all__ = ["fidelity", "aligned_fidelity", "row_phase_alignment", "phase_aligned_distance"]


def _pair(u, u_hat):
    u = np.asarray(u)
    u_hat = np.asarray(u_hat)
    if u.shape != u_hat.shape or u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"dimension mismatch: {u.shape} vs {u_hat.shape}")
    return u, u_hat


def fidelity(u, u_hat) -> float:
    """``|tr(U^H U_hat)| / N``."""
    u, u_hat = _pair(u, u_hat)
    return float(abs(np.vdot(u, u_hat)) / u.shape[0])


def row_phase_alignment(u, u_hat) -> np.ndarray:
    """Phases ``delta`` such that ``diag(e^{i delta}) @ u_hat`` best matches ``u`` row by row."""
    u, u_hat = _pair(u, u_hat)
    overlap = np.einsum("ij,ij->i", u_hat.conj(), u)
    return np.angle(overlap)


def aligned_fidelity(u, u_hat) -> float:
    """Fidelity after the optimal output phase correction of ``u_hat``."""
    u, u_hat = _pair(u, u_hat)
    overlap = np.einsum("ij,ij->i", u_hat.conj(), u)
    return float(np.abs(overlap).sum() / u.shape[0])


def phase_aligned_distance(u, u_hat) -> float:
    """``min_D ||D U_hat - U||_F`` over diagonal phase matrices ``D``."""
    delta = row_phase_alignment(u, u_hat)
    u, u_hat = _pair(u, u_hat)
    return float(np.linalg.norm(np.exp(1j * delta)[:, None] * u_hat - u))
