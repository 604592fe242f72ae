"""Gain synthesis from weighted Gramians and the exponential-convergence certificate.

Consensus gain ``K = mu B^T W_c^{-1}(alpha, t*)`` and observer gain
``L = mu W_o^{-1}(alpha, t*) C^T``, where the weighted Gramians integrate the
half-reversed dynamics ``e^{-A t / 2}`` against ``e^{-alpha t}`` over ``[0, t*]``.
With ``mu >= 1 / lambda_H(N)`` every closed-loop block ``A - lambda B K``
visited by the switching network decays at rate ``alpha``; the certificate
then chains the per-phase bounds into a contraction factor ``rho`` per
``ell`` connectivity windows.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import SynthesisError, ValidationError
from .numkit import finite_gramian, matrix_exp
from .spectral import jacobi_eigh, lambda_H

# Relative eigenvalue floor below which a Gramian is declared singular.
GRAMIAN_RCOND = 1e-12
# Grid for the growth envelope of e^{At}.
C1_STEP = 1e-3
C1_HORIZON_FACTOR = 20.0
C1_INFLATION = 1.01
_REANCHOR = 1000


@dataclass(frozen=True, eq=False)
class PlantModel:
    """Shared linear dynamics ``x' = A x + B u``, ``y = C x``."""

    A: np.ndarray
    B: np.ndarray
    C: Optional[np.ndarray] = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValidationError(f"A must be square, got shape {A.shape}")
        n = A.shape[0]
        B = np.array(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if B.shape[0] != n:
            raise ValidationError(f"B must have {n} rows, got shape {B.shape}")
        C = None
        if self.C is not None:
            C = np.array(self.C, dtype=float)
            if C.ndim == 1:
                C = C.reshape(1, -1)
            if C.shape[1] != n:
                raise ValidationError(f"C must have {n} columns, got shape {C.shape}")
        for name, M in (("A", A), ("B", B), ("C", C)):
            if M is not None:
                M.setflags(write=False)
                object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def controllability_matrix(self) -> np.ndarray:
        blocks = [self.B]
        for _ in range(self.n - 1):
            blocks.append(self.A @ blocks[-1])
        return np.hstack(blocks)

    def observability_matrix(self) -> np.ndarray:
        if self.C is None:
            raise ValidationError("plant has no output matrix C")
        blocks = [self.C]
        for _ in range(self.n - 1):
            blocks.append(blocks[-1] @ self.A)
        return np.vstack(blocks)

    def controllability_rank(self) -> int:
        return int(np.linalg.matrix_rank(self.controllability_matrix()))

    def observability_rank(self) -> int:
        return int(np.linalg.matrix_rank(self.observability_matrix()))


def spectral_abscissa(A) -> float:
    """Largest real part among the eigenvalues of ``A``."""
    return float(np.max(np.linalg.eigvals(np.asarray(A, dtype=float)).real))


def _check_weights(alpha, t_star):
    if not alpha > 0:
        raise SynthesisError(f"alpha must be positive, got {alpha}")
    if not t_star > 0:
        raise SynthesisError(f"t_star must be positive, got {t_star}")


def _require_definite(W, what):
    w, _ = jacobi_eigh(W)
    if not w[0] > GRAMIAN_RCOND * max(w[-1], 0.0):
        raise SynthesisError(
            f"{what} Gramian singular: smallest eigenvalue {w[0]:.3e} "
            f"(largest {w[-1]:.3e})"
        )
    return W


def weighted_ctrl_gramian(A, B, alpha, t_star) -> np.ndarray:
    """``int_0^{t*} e^{-alpha t} e^{-A t/2} B B^T e^{-A^T t/2} dt``."""
    _check_weights(alpha, t_star)
    A = np.asarray(A, dtype=float)
    F = -0.5 * (A + alpha * np.eye(A.shape[0]))
    return _require_definite(finite_gramian(F, B, t_star), "controllability")


def weighted_obs_gramian(A, C, alpha, t_star) -> np.ndarray:
    """``int_0^{t*} e^{-alpha t} e^{-A^T t/2} C^T C e^{-A t/2} dt``."""
    _check_weights(alpha, t_star)
    A = np.asarray(A, dtype=float)
    C = np.atleast_2d(np.asarray(C, dtype=float))
    F = -0.5 * (A.T + alpha * np.eye(A.shape[0]))
    return _require_definite(finite_gramian(F, C.T, t_star), "observability")


def mu_floor(n_followers=None, eig_floor=None) -> float:
    """Smallest admissible ``mu``: ``1/lambda_H(N)``, or ``1/eig_floor`` when given."""
    if eig_floor is not None:
        return 1.0 / eig_floor
    if n_followers is not None:
        return 1.0 / lambda_H(n_followers)
    return 0.0


def _check_mu(mu, n_followers, eig_floor):
    floor = mu_floor(n_followers, eig_floor)
    if mu < floor * (1.0 - 1e-12):
        raise SynthesisError(f"mu = {mu:.6g} is below the required floor {floor:.6g}")


def feedback_gain(plant: PlantModel, alpha, t_star, mu, n_followers=None, eig_floor=None):
    """``K = mu B^T W_c^{-1}(alpha, t*)``.

    ``n_followers`` enforces ``mu >= 1/lambda_H(N)``; ``eig_floor`` replaces
    that floor with a measured smallest nonzero eigenvalue.
    """
    _check_mu(mu, n_followers, eig_floor)
    W = weighted_ctrl_gramian(plant.A, plant.B, alpha, t_star)
    return mu * np.linalg.solve(W, plant.B).T


def observer_gain(plant: PlantModel, alpha, t_star, mu, n_followers=None, eig_floor=None):
    """``L = mu W_o^{-1}(alpha, t*) C^T``."""
    if plant.C is None:
        raise SynthesisError("observer gain requested but the plant has no C")
    _check_mu(mu, n_followers, eig_floor)
    W = weighted_obs_gramian(plant.A, plant.C, alpha, t_star)
    return mu * np.linalg.solve(W, plant.C.T)


@dataclass(frozen=True, eq=False)
class GainDesign:
    alpha: float
    t_star: float
    mu: float
    W_c: Optional[np.ndarray] = None
    W_o: Optional[np.ndarray] = None
    K: Optional[np.ndarray] = None
    L: Optional[np.ndarray] = None

    def coupling(self, plant: PlantModel, mode: str) -> np.ndarray:
        """``B K`` for consensus or ``L C`` for the observer."""
        if mode == "consensus":
            if self.K is None:
                raise SynthesisError("consensus mode needs a feedback gain K")
            return plant.B @ self.K
        if mode == "observer":
            if self.L is None or plant.C is None:
                raise SynthesisError("observer mode needs an observer gain L and C")
            return self.L @ plant.C
        raise ValueError(f"unknown mode {mode!r}")

    def to_dict(self):
        out = {"alpha": self.alpha, "t_star": self.t_star, "mu": self.mu}
        for name in ("W_c", "W_o", "K", "L"):
            M = getattr(self, name)
            out[name] = None if M is None else M.tolist()
        return out


def design_gains(
    plant: PlantModel,
    alpha,
    t_star,
    mu,
    mode="consensus",
    n_followers=None,
    eig_floor=None,
) -> GainDesign:
    """Synthesize K, L or both (``mode`` in consensus / observer / both)."""
    if mode not in ("consensus", "observer", "both"):
        raise ValueError(f"unknown mode {mode!r}")
    kw = dict(n_followers=n_followers, eig_floor=eig_floor)
    W_c = K = W_o = L = None
    if mode in ("consensus", "both"):
        W_c = weighted_ctrl_gramian(plant.A, plant.B, alpha, t_star)
        K = feedback_gain(plant, alpha, t_star, mu, **kw)
    if mode in ("observer", "both"):
        if plant.C is None:
            raise SynthesisError("observer design requested but the plant has no C")
        W_o = weighted_obs_gramian(plant.A, plant.C, alpha, t_star)
        L = observer_gain(plant, alpha, t_star, mu, **kw)
    return GainDesign(float(alpha), float(t_star), float(mu), W_c, W_o, K, L)


def instability_margin(delta, T_c) -> float:
    """``-ln(delta) / T_c``; infinite for ``delta = 0``."""
    if not 0.0 <= delta < 1.0:
        raise SynthesisError(f"delta must lie in [0, 1), got {delta}")
    if not T_c > 0:
        raise SynthesisError("T_c must be positive")
    if delta == 0.0:
        return math.inf
    return -math.log(delta) / T_c


@dataclass(frozen=True)
class SolvabilityCheck:
    verdict: str
    lambda_max: float
    margin: float

    @property
    def solvable(self) -> bool:
        return self.verdict == "solvable"

    @property
    def slack(self) -> float:
        return self.margin - self.lambda_max

    def summary(self) -> str:
        rel = "<" if self.solvable else ">="
        tail = "" if self.solvable else " (sufficient condition only; not a proof of impossibility)"
        return (
            f"lambda_max(A) = {self.lambda_max:.6g} {rel} -ln(delta)/T_c = "
            f"{self.margin:.6g}: {self.verdict}{tail}"
        )


def check_solvable(A, delta, T_c) -> SolvabilityCheck:
    """Compare the spectral abscissa of ``A`` with the instability margin."""
    lam = spectral_abscissa(A)
    margin = instability_margin(delta, T_c)
    verdict = "solvable" if lam < margin else "not_certified"
    return SolvabilityCheck(verdict, lam, margin)


def select_lambda_star(A, delta, T_c) -> float:
    """Midpoint of ``(lambda_max(A), -ln(delta)/T_c)``; ``lambda_max + 1`` when delta is 0."""
    check = check_solvable(A, delta, T_c)
    if not check.solvable:
        raise SynthesisError("infeasible interval for lambda*: " + check.summary())
    if math.isinf(check.margin):
        return check.lambda_max + 1.0
    return 0.5 * (check.lambda_max + check.margin)


def growth_envelope_C1(A, lambda_star) -> float:
    """Constant ``C1 >= 1`` with ``||e^{At}|| <= C1 e^{lambda* t}`` for ``t >= 0``.

    When the logarithmic norm ``lambda_max((A + A^T)/2)`` is at most
    ``lambda*`` the bound holds with ``C1 = 1`` exactly. Otherwise
    ``||e^{At}|| e^{-lambda* t}`` is maximized on a grid of step 1e-3 over
    ``[0, 20 / (lambda* - lambda_max(A))]`` and the peak is inflated by 1%.
    """
    A = np.asarray(A, dtype=float)
    gap = lambda_star - spectral_abscissa(A)
    if not gap > 0:
        raise SynthesisError(
            f"lambda* = {lambda_star:.6g} must exceed lambda_max(A) = {lambda_star - gap:.6g}"
        )
    log_norm, _ = jacobi_eigh(0.5 * (A + A.T))
    if log_norm[-1] <= lambda_star:
        return 1.0
    peak = _envelope_peak(A, lambda_star, C1_HORIZON_FACTOR / gap, C1_STEP)
    return 1.0 if peak <= 1.0 else C1_INFLATION * peak


def _envelope_peak(A, lambda_star, t_max, step):
    n_steps = int(math.ceil(t_max / step))
    E_step = matrix_exp(A * step)
    peak = 1.0
    k = 0
    while k <= n_steps:
        E = matrix_exp(A * (k * step))
        chunk = min(_REANCHOR, n_steps - k + 1)
        stack = np.empty((chunk,) + A.shape)
        for i in range(chunk):
            stack[i] = E
            E = E @ E_step
        t = (k + np.arange(chunk)) * step
        vals = np.linalg.norm(stack, ord=2, axis=(1, 2)) * np.exp(-lambda_star * t)
        peak = max(peak, float(vals.max()))
        k += chunk
    return peak


def select_ell(C1, delta, lambda_star, T_c) -> int:
    """Smallest window count with ``C1 (delta e^{lambda* T_c})^ell < 1``."""
    if delta == 0.0:
        return 1
    denom = math.log(delta) + lambda_star * T_c
    if not denom < 0:
        raise SynthesisError(
            f"ln(delta) + lambda* T_c = {denom:.6g} must be negative"
        )
    ell = math.floor(-math.log(C1) / denom) + 1
    while C1 * (delta * math.exp(lambda_star * T_c)) ** ell >= 1.0:
        ell += 1
    return ell


def unweighted_gramian(plant: PlantModel, mode="consensus", t_star=1.0) -> np.ndarray:
    """``W(0, t*)`` of the half-reversed dynamics, for the constant ``C0``."""
    if mode == "consensus":
        return finite_gramian(-0.5 * plant.A, plant.B, t_star)
    if plant.C is None:
        raise SynthesisError("observer certificate needs C")
    return finite_gramian(-0.5 * plant.A.T, plant.C.T, t_star)


@dataclass
class Certificate:
    """Constants proving ``||x(t)|| <= (C2/rho) e^{-varrho t} ||x(0)||``.

    ``certified`` is True only when ``rho < 1`` and ``mu`` respects the
    ``1/lambda_H(N)`` floor.
    """

    mode: str
    delta: float
    T_c: float
    tau: float
    alpha: float
    t_star: float
    mu: float
    lambda_max: float
    margin: float
    lambda_star: float
    C1: float
    ell: int
    C0: float
    phases_per_window: int
    C3: float
    C2: float
    log_C3: float
    log_C2: float
    psi_contraction: float
    alpha_threshold: float
    rho: float
    varrho: float
    certified: bool
    notes: list = field(default_factory=list)

    def envelope(self, t):
        """``(C2 / rho) e^{-varrho t}`` evaluated in log space."""
        t = np.asarray(t, dtype=float)
        return np.exp(self.log_C2 - math.log(self.rho) - self.varrho * t)

    @property
    def transition_bound(self) -> float:
        """Bound on one phase transition matrix: ``C0 + C1 e^{lambda* T_c}``."""
        return self.C0 + self.C1 * math.exp(self.lambda_star * self.T_c)

    def to_dict(self):
        out = asdict(self)
        for k, v in out.items():
            if isinstance(v, float) and not math.isfinite(v):
                out[k] = str(v)
        return out

    def summary(self) -> str:
        lines = [
            f"[{self.mode}] lambda_max(A) = {self.lambda_max:.6g}, margin = {self.margin:.6g}, "
            f"lambda* = {self.lambda_star:.6g}",
            f"  C1 = {self.C1:.6g}, ell = {self.ell}, C0(t*) = {self.C0:.6g}, "
            f"ceil(T_c/tau) = {self.phases_per_window}",
            f"  ln C3 = {self.log_C3:.6g}, alpha threshold = {self.alpha_threshold:.6g} "
            f"(alpha = {self.alpha:.6g})",
            f"  rho = {self.rho:.6g}, varrho = {self.varrho:.6g}",
        ]
        if self.certified:
            lines.append("  CERTIFIED: exponential convergence at rate >= varrho")
        for note in self.notes:
            lines.append(f"  NOT CERTIFIED: {note}")
        return "\n".join(lines)


def decay_certificate(
    plant: PlantModel,
    design: GainDesign,
    delta,
    T_c,
    tau,
    ell_override=None,
    mode="consensus",
    n_followers=None,
) -> Certificate:
    """Assemble lambda*, C1, ell, C0, C3, the alpha threshold, rho and varrho.

    The window phase count uses the worst case ``ceil(T_c / tau)`` so the
    certificate holds for any schedule with the given ``T_c`` and dwell floor.
    """
    if mode == "consensus" and design.K is None:
        raise SynthesisError("consensus certificate needs K in the design")
    if mode == "observer" and design.L is None:
        raise SynthesisError("observer certificate needs L in the design")
    if not tau > 0:
        raise SynthesisError("dwell floor tau must be positive")
    check = check_solvable(plant.A, delta, T_c)
    if not check.solvable:
        raise SynthesisError("cannot certify: " + check.summary())
    lam_star = select_lambda_star(plant.A, delta, T_c)
    C1 = growth_envelope_C1(plant.A, lam_star)
    ell = select_ell(C1, delta, lam_star, T_c)
    if ell_override is not None:
        ell_override = int(ell_override)
        if ell_override < 1 or (
            delta > 0 and C1 * (delta * math.exp(lam_star * T_c)) ** ell_override >= 1.0
        ):
            raise SynthesisError(
                f"ell = {ell_override} does not make C1 (delta e^(lambda* T_c))^ell < 1"
            )
        ell = ell_override

    w, _ = jacobi_eigh(unweighted_gramian(plant, mode, design.t_star))
    if not w[0] > 0:
        raise SynthesisError("unweighted Gramian W(0, t*) is singular")
    alpha = design.alpha
    C0 = math.sqrt(w[-1] / w[0]) * math.exp(0.5 * alpha * design.t_star)

    m = math.ceil(T_c / tau - 1e-9)
    growth = lam_star * T_c
    log_window = m * math.log(C0 + C1) + growth
    log_C3 = math.log(C0 * m * ell / (C0 + C1)) + ell * log_window
    log_C2 = math.log(C0 + C1 * math.exp(growth)) + ell * log_window
    psi = C1 * (delta * math.exp(growth)) ** ell
    alpha_threshold = (log_C3 - math.log1p(-psi)) / tau - lam_star
    rho = psi + math.exp(log_C3 - (alpha + lam_star) * tau)
    varrho = math.log(1.0 / rho) / (T_c * ell)

    notes = []
    if not rho < 1.0:
        notes.append(
            f"rho = {rho:.6g} >= 1; raise alpha above {alpha_threshold:.6g} "
            "(or shorten t*)"
        )
    if n_followers is not None and design.mu * lambda_H(n_followers) < 1.0 - 1e-12:
        notes.append(
            f"mu = {design.mu:.6g} is below 1/lambda_H(N) = {1.0 / lambda_H(n_followers):.6g}"
        )
    return Certificate(
        mode=mode,
        delta=float(delta),
        T_c=float(T_c),
        tau=float(tau),
        alpha=alpha,
        t_star=design.t_star,
        mu=design.mu,
        lambda_max=check.lambda_max,
        margin=check.margin,
        lambda_star=lam_star,
        C1=C1,
        ell=ell,
        C0=C0,
        phases_per_window=m,
        C3=_safe_exp(log_C3),
        C2=_safe_exp(log_C2),
        log_C3=log_C3,
        log_C2=log_C2,
        psi_contraction=psi,
        alpha_threshold=alpha_threshold,
        rho=rho,
        varrho=varrho,
        certified=not notes,
        notes=notes,
    )


def _safe_exp(x):
    return math.exp(x) if x < 709.0 else math.inf
