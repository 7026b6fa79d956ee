"""Matrix-free Krylov solves with a per-Fourier-mode block preconditioner."""
import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import SolverDiverged


class ModalPreconditioner:
    """Exact inverse of a horizontally translation-invariant operator.

    apply_avg maps arrays [..., nx, ny, nv] to the same shape and must commute
    with horizontal shifts (coefficients depending on x3 only).  Its response
    to a point source gives every Fourier-mode block at once.
    """

    def __init__(self, apply_avg, nx, ny, nv, chunk=64):
        self.nx, self.ny, self.nv = nx, ny, nv
        nky = ny // 2 + 1
        H = np.empty((nx, nky, nv, nv), dtype=complex)
        for start in range(0, nv, chunk):
            idx = np.arange(start, min(nv, start + chunk))
            E = np.zeros((len(idx), nx, ny, nv))
            E[np.arange(len(idx)), 0, 0, idx] = 1.0
            out = np.fft.rfft2(apply_avg(E), axes=(1, 2))
            H[:, :, :, idx] = np.moveaxis(out, 0, -1)
        self.Hinv = np.linalg.inv(H)

    def __call__(self, r):
        rh = np.fft.rfft2(r, axes=(0, 1))
        xh = np.einsum("abij,abj->abi", self.Hinv, rh)
        return np.fft.irfft2(xh, s=(self.nx, self.ny), axes=(0, 1))


def krylov_solve(apply, precond, b, shape, tol=1e-12, maxiter=400, restart=80, x0=None,
                 what="linear system"):
    """GMRES on flattened arrays; raises SolverDiverged with the residual history."""
    n = int(np.prod(shape))
    bf = np.asarray(b, dtype=float).reshape(n)
    bnorm = float(np.linalg.norm(bf))
    if bnorm == 0.0:
        return np.zeros(shape), {"iterations": 0, "residuals": [0.0], "relative_residual": 0.0}

    def mv(x):
        return apply(x.reshape(shape)).reshape(n)

    A = LinearOperator((n, n), matvec=mv, dtype=float)
    M = None
    if precond is not None:
        M = LinearOperator((n, n), matvec=lambda x: precond(x.reshape(shape)).reshape(n), dtype=float)
    history = []
    x = None if x0 is None else np.asarray(x0, dtype=float).reshape(n)
    res = np.inf
    for _ in range(4):
        x, info = gmres(A, bf, x0=x, rtol=tol, atol=0.0, restart=restart, maxiter=maxiter, M=M,
                        callback=lambda r: history.append(float(r)), callback_type="pr_norm")
        res = float(np.linalg.norm(mv(x) - bf)) / bnorm
        if res <= tol:
            break
    if res > 10.0 * tol:
        raise SolverDiverged(f"{what}: GMRES stopped with relative residual {res:.3e}", history + [res])
    return x.reshape(shape), {"iterations": len(history), "residuals": history, "relative_residual": res}
