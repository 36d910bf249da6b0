"""Soft-margin kernel SVM trained by sequential minimal optimization.

Pair selection follows the maximal-violating-pair rule on the cached
kernel matrix; convergence is declared when the KKT gap drops below the
tolerance, with a hard iteration cap surfaced as a warning rather than an
error. Margins are mapped to [0, 1] by a logistic link fitted on the
validation fold's decision values (the ranking, and hence AUC, is
unaffected by this monotone map).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..util import sigmoid, stable_matmul, stable_row_norms

SMO_TOL = 1e-3
SMO_MAX_ITER = 100_000
ETA_FLOOR = 1e-12
PLATT_MAX_ITER = 100
ALPHA_CUTOFF = 1e-12


def _kernel_params(kernel: str, degree: int, n_features: int) -> dict:
    # gamma fixed at 1/n_features; polynomial kernel inhomogeneous (coef0=1)
    return {
        "kernel": kernel,
        "degree": int(degree),
        "gamma": 1.0 / n_features,
        "coef0": 1.0 if kernel == "polynomial" else 0.0,
    }


def _kernel_from_products(products: np.ndarray, x_norms, sv_norms, kp: dict) -> np.ndarray:
    kernel = kp["kernel"]
    if kernel == "rbf":
        sq = x_norms[:, None] + sv_norms[None, :] - 2.0 * products
        return np.exp(-kp["gamma"] * sq)
    if kernel == "polynomial":
        return (kp["gamma"] * products + kp["coef0"]) ** kp["degree"]
    if kernel == "sigmoid":
        return np.tanh(kp["gamma"] * products + kp["coef0"])
    raise ValueError(f"unknown kernel {kernel!r}")


def _full_kernel_matrix(x: np.ndarray, kp: dict) -> np.ndarray:
    products = x @ x.T
    norms = np.einsum("ij,ij->i", x, x)
    return _kernel_from_products(products, norms, norms, kp)


@dataclass
class SvmState:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i for the support vectors
    intercept: float
    kernel: str
    degree: int
    gamma: float
    coef0: float
    platt_a: float
    platt_b: float

    def decision_values(self, x: np.ndarray) -> np.ndarray:
        """Margins, computed row-stably against the stored support vectors."""
        x = np.asarray(x, dtype=np.float64)
        kp = {
            "kernel": self.kernel,
            "degree": self.degree,
            "gamma": self.gamma,
            "coef0": self.coef0,
        }
        products = stable_matmul(x, self.support_vectors.T)
        x_norms = stable_row_norms(x)
        sv_norms = stable_row_norms(self.support_vectors)
        k = _kernel_from_products(np.atleast_2d(products), x_norms, sv_norms, kp)
        margins = np.full(k.shape[0], self.intercept, dtype=np.float64)
        for j in range(k.shape[1]):
            margins += self.dual_coef[j] * k[:, j]
        return margins

    def predict_scores(self, x: np.ndarray) -> np.ndarray:
        f = self.decision_values(x)
        return sigmoid(-(self.platt_a * f + self.platt_b))

    def to_jsonable(self) -> dict:
        return {
            "model": "svm",
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "intercept": self.intercept,
            "kernel": self.kernel,
            "degree": self.degree,
            "gamma": self.gamma,
            "coef0": self.coef0,
            "platt_a": self.platt_a,
            "platt_b": self.platt_b,
        }

    @classmethod
    def from_jsonable(cls, payload: dict) -> "SvmState":
        return cls(
            support_vectors=np.asarray(payload["support_vectors"], dtype=np.float64),
            dual_coef=np.asarray(payload["dual_coef"], dtype=np.float64),
            intercept=payload["intercept"],
            kernel=payload["kernel"],
            degree=payload["degree"],
            gamma=payload["gamma"],
            coef0=payload["coef0"],
            platt_a=payload["platt_a"],
            platt_b=payload["platt_b"],
        )


def smo_solve(k: np.ndarray, y_signed: np.ndarray, c: float) -> tuple[np.ndarray, float, bool]:
    """Dual soft-margin solve; returns (alpha, intercept, converged)."""
    n = y_signed.size
    alpha = np.zeros(n, dtype=np.float64)
    f = -y_signed.astype(np.float64)  # f_i = sum_j alpha_j y_j K_ij - y_i

    converged = False
    for _ in range(SMO_MAX_ITER):
        up_mask = ((y_signed > 0) & (alpha < c)) | ((y_signed < 0) & (alpha > 0))
        low_mask = ((y_signed < 0) & (alpha < c)) | ((y_signed > 0) & (alpha > 0))
        f_up = np.where(up_mask, f, np.inf)
        f_low = np.where(low_mask, f, -np.inf)
        i = int(np.argmin(f_up))
        j = int(np.argmax(f_low))
        b_up, b_low = f[i], f[j]
        if b_low <= b_up + 2.0 * SMO_TOL:
            converged = True
            break

        y1, y2 = y_signed[i], y_signed[j]
        a1_old, a2_old = alpha[i], alpha[j]
        if y1 != y2:
            low_bound = max(0.0, a2_old - a1_old)
            high_bound = min(c, c + a2_old - a1_old)
        else:
            low_bound = max(0.0, a2_old + a1_old - c)
            high_bound = min(c, a2_old + a1_old)
        if high_bound - low_bound < 1e-15:
            # pair cannot move; nudge f to skip it next round is unsound, so
            # fall back to the second-most violating partner
            f_low_alt = f_low.copy()
            f_low_alt[j] = -np.inf
            j = int(np.argmax(f_low_alt))
            if not np.isfinite(f_low_alt[j]):
                converged = True
                break
            y2 = y_signed[j]
            a2_old = alpha[j]
            if y1 != y2:
                low_bound = max(0.0, a2_old - a1_old)
                high_bound = min(c, c + a2_old - a1_old)
            else:
                low_bound = max(0.0, a2_old + a1_old - c)
                high_bound = min(c, a2_old + a1_old)
            if high_bound - low_bound < 1e-15:
                converged = True
                break

        eta = k[i, i] + k[j, j] - 2.0 * k[i, j]
        eta = max(eta, ETA_FLOOR)  # indefinite kernels: take a clipped step
        a2_new = a2_old + y2 * (f[i] - f[j]) / eta
        a2_new = min(max(a2_new, low_bound), high_bound)
        a1_new = a1_old + y1 * y2 * (a2_old - a2_new)
        if abs(a2_new - a2_old) < 1e-14:
            converged = True
            break
        alpha[i] = a1_new
        alpha[j] = a2_new
        f = f + y1 * (a1_new - a1_old) * k[:, i] + y2 * (a2_new - a2_old) * k[:, j]

    up_mask = ((y_signed > 0) & (alpha < c)) | ((y_signed < 0) & (alpha > 0))
    low_mask = ((y_signed < 0) & (alpha < c)) | ((y_signed > 0) & (alpha > 0))
    b_up = float(np.min(np.where(up_mask, f, np.inf)))
    b_low = float(np.max(np.where(low_mask, f, -np.inf)))
    if not np.isfinite(b_up):
        b_up = b_low
    if not np.isfinite(b_low):
        b_low = b_up
    intercept = -(b_up + b_low) / 2.0
    return alpha, intercept, converged


def fit_platt(decision_values: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """Logistic link on margins, Newton iterations with backtracking."""
    f = np.asarray(decision_values, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        return -1.0, 0.0
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    t = np.where(y == 1, hi, lo)

    a, b = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))

    def objective(a_, b_):
        z = a_ * f + b_
        return float(
            np.sum(np.maximum(z, 0.0) - (1.0 - t) * z + np.log1p(np.exp(-np.abs(z))))
        )

    obj = objective(a, b)
    for _ in range(PLATT_MAX_ITER):
        z = a * f + b
        p = sigmoid(-z)  # P(y=1 | f) under the fitted link
        grad_z = t - p  # d/dz of the per-sample negative log-likelihood
        g_a = float(np.sum(grad_z * f))
        g_b = float(np.sum(grad_z))
        if abs(g_a) < 1e-10 and abs(g_b) < 1e-10:
            break
        w = p * (1.0 - p) + 1e-12
        h_aa = float(np.sum(w * f * f)) + 1e-12
        h_ab = float(np.sum(w * f))
        h_bb = float(np.sum(w)) + 1e-12
        det = h_aa * h_bb - h_ab * h_ab
        if det <= 0:
            break
        step_a = (h_bb * g_a - h_ab * g_b) / det
        step_b = (h_aa * g_b - h_ab * g_a) / det
        stepsize = 1.0
        improved = False
        for _ in range(20):
            cand_a = a - stepsize * step_a
            cand_b = b - stepsize * step_b
            cand_obj = objective(cand_a, cand_b)
            if cand_obj < obj + 1e-12:
                a, b, obj = cand_a, cand_b, cand_obj
                improved = True
                break
            stepsize *= 0.5
        if not improved:
            break
    return a, b


def fit_svm(hp: dict, x: np.ndarray, y: np.ndarray, x_val, y_val):
    warnings = []
    y_signed = np.where(y > 0.5, 1.0, -1.0)
    kp = _kernel_params(str(hp["kernel"]), int(hp["degree"]), x.shape[1])
    k = _full_kernel_matrix(x, kp)
    alpha, intercept, converged = smo_solve(k, y_signed, float(hp["c"]))
    if not converged:
        warnings.append(f"SMO did not converge within {SMO_MAX_ITER} iterations")

    support = np.nonzero(alpha > ALPHA_CUTOFF)[0]
    if support.size == 0:
        # all multipliers at zero: fall back to the full set so the
        # decision function stays defined (margin = intercept everywhere)
        support = np.arange(x.shape[0])
    state = SvmState(
        support_vectors=x[support].copy(),
        dual_coef=(alpha * y_signed)[support],
        intercept=float(intercept),
        kernel=kp["kernel"],
        degree=kp["degree"],
        gamma=kp["gamma"],
        coef0=kp["coef0"],
        platt_a=-1.0,
        platt_b=0.0,
    )
    if x_val is not None and y_val is not None and len(y_val) > 0 and (
        0 < np.sum(y_val) < len(y_val)
    ):
        val_margins = state.decision_values(x_val)
        a, b = fit_platt(val_margins, y_val)
        if a >= 0.0:
            # a non-negative slope would invert the ranking; keep the
            # identity-direction link instead
            warnings.append("Platt link fit produced non-negative slope; using default")
            a, b = -1.0, 0.0
        state.platt_a = a
        state.platt_b = b
    else:
        warnings.append("validation labels degenerate; default probability link")
    return state, warnings
