"""Monotone operators: forward evaluation, resolvent evaluation, inexact-prox errors.

An operator declares which evaluations it supports instead of having them
inferred: a forward-capable operator is single-valued and continuous on the
whole space, a prox-capable operator exposes its resolvent (I + rho*T)^{-1}.
The solver branches on this declaration, so asking for a missing capability
is a contract error rather than a silent fallback.

Internal callables work on raw float64 arrays; the public entry points
(:func:`forward_eval`, :func:`prox_eval`, :func:`inject_error`) speak
:class:`~projsplit.linalg.Vec` and enforce spaces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapabilityError, ConfigError, ShapeError
from .linalg import Space, Vec


class MonotoneOperator:
    """A monotone operator T on a finite-dimensional space.

    Parameters
    ----------
    space : Space
        The space the operator acts on.
    forward : callable(ndarray) -> ndarray, optional
        Single-valued evaluation x -> T(x).
    prox : callable(ndarray, float) -> ndarray, optional
        Resolvent evaluation (a, rho) -> (I + rho*T)^{-1}(a).
    name : str
        Label used in error messages and traces.

    At least one of ``forward``/``prox`` must be given.
    """

    __slots__ = ("space", "name", "_forward", "_prox")

    def __init__(self, space: Space, *, forward=None, prox=None, name="operator"):
        if forward is None and prox is None:
            raise ConfigError(f"operator '{name}' declares no capability")
        self.space = space
        self.name = name
        self._forward = forward
        self._prox = prox

    @property
    def forward_evaluable(self) -> bool:
        return self._forward is not None

    @property
    def prox_evaluable(self) -> bool:
        return self._prox is not None

    def __repr__(self):
        caps = "/".join(c for c, on in (("forward", self.forward_evaluable),
                                        ("prox", self.prox_evaluable)) if on)
        return f"MonotoneOperator({self.name}, dim={self.space.dim}, {caps})"


@dataclass(frozen=True)
class ProxResult:
    """Resolvent output: x = (I + rho*T)^{-1}(a) and y = (a - x)/rho in T(x)."""

    x: Vec
    y: Vec


def forward_eval(op: MonotoneOperator, x: Vec) -> Vec:
    """Evaluate T(x) for a forward-capable operator."""
    if not op.forward_evaluable:
        raise CapabilityError(f"operator '{op.name}' is not forward-evaluable")
    if x.space != op.space:
        raise ShapeError(f"operator '{op.name}' acts on dim {op.space.dim}, got dim {x.space.dim}")
    return Vec(op.space, op._forward(x.entries))


def prox_eval(op: MonotoneOperator, rho: float, a: Vec) -> ProxResult:
    """Evaluate the resolvent at a with stepsize rho > 0.

    The pair (x, y) satisfies x + rho*y = a by construction, with y in T(x).
    """
    if not op.prox_evaluable:
        raise CapabilityError(f"operator '{op.name}' is not prox-evaluable")
    if rho <= 0:
        raise ConfigError(f"prox stepsize rho must be > 0, got {rho}")
    if a.space != op.space:
        raise ShapeError(f"operator '{op.name}' acts on dim {op.space.dim}, got dim {a.space.dim}")
    x = Vec(op.space, op._prox(a.entries, float(rho)))
    y = (a - x) / rho
    return ProxResult(x=x, y=y)


# ---------------------------------------------------------------------------
# inexact proximal steps
# ---------------------------------------------------------------------------

@dataclass
class ErrorPolicy:
    """Controls perturbation of proximal-step inputs.

    Accepted errors always satisfy the two admissibility inequalities

        <G z - x, e>  >= -sigma * ||G z - x||^2
        <e, y - w>    <=  rho * sigma * ||y - w||^2

    for the prox output (x, y) computed at the perturbed input. ``none``
    mode injects nothing; ``seeded-random`` draws a direction from a seeded
    generator, scales it to ``magnitude``, and halves it until both
    inequalities hold (falling back to zero, which always satisfies them).
    """

    sigma: float = 0.0
    mode: str = "none"  # "none" | "seeded-random"
    magnitude: float = 0.0
    seed: int = 0
    _rng: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not 0.0 <= self.sigma < 1.0:
            raise ConfigError(f"sigma must lie in [0, 1), got {self.sigma}")
        if self.mode not in ("none", "seeded-random"):
            raise ConfigError(f"error mode must be 'none' or 'seeded-random', got {self.mode!r}")
        if self.magnitude < 0:
            raise ConfigError(f"error magnitude must be >= 0, got {self.magnitude}")

    def fresh(self) -> "ErrorPolicy":
        """A copy with a newly seeded generator; one per solver run."""
        return ErrorPolicy(self.sigma, self.mode, self.magnitude, self.seed)

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            self._rng = np.random.default_rng(self.seed)
        return self._rng


def error_inequality_gaps(e: Vec, result: ProxResult, z_block: Vec, w_block: Vec,
                          rho: float, sigma: float) -> tuple[float, float]:
    """Slack of the two admissibility inequalities; both must be >= 0."""
    gz_minus_x = z_block - result.x
    y_minus_w = result.y - w_block
    g1 = gz_minus_x.dot(e) + sigma * gz_minus_x.dot(gz_minus_x)
    g2 = rho * sigma * y_minus_w.dot(y_minus_w) - e.dot(y_minus_w)
    return g1, g2


_MAX_HALVINGS = 50


def inject_error(policy: ErrorPolicy, base_input: Vec, op: MonotoneOperator, rho: float,
                 z_block: Vec, w_block: Vec) -> tuple[Vec, ProxResult]:
    """Perturb a prox input by an admissible error and evaluate the resolvent.

    ``base_input`` is the unperturbed input G z + rho*w; ``z_block`` is G z
    itself. Returns the accepted error e and the prox result at base + e.
    """
    zero = base_input.space.zeros()
    if policy.mode == "none" or policy.magnitude == 0.0:
        return zero, prox_eval(op, rho, base_input)

    direction = policy.rng.standard_normal(base_input.space.dim)
    nrm = np.linalg.norm(direction)
    if nrm == 0.0:
        return zero, prox_eval(op, rho, base_input)
    e = Vec(base_input.space, policy.magnitude * direction / nrm)

    for _ in range(_MAX_HALVINGS):
        result = prox_eval(op, rho, base_input + e)
        g1, g2 = error_inequality_gaps(e, result, z_block, w_block, rho, policy.sigma)
        if g1 >= 0.0 and g2 >= 0.0:
            return e, result
        e = 0.5 * e

    result = prox_eval(op, rho, base_input)
    g1, g2 = error_inequality_gaps(zero, result, z_block, w_block, rho, policy.sigma)
    assert g1 >= -1e-12 and g2 >= -1e-12
    return zero, result


# ---------------------------------------------------------------------------
# operator library
# ---------------------------------------------------------------------------

def affine_monotone(matrix, shift) -> MonotoneOperator:
    """T(x) = M x + b. Requires M + M^T positive semidefinite.

    Monotonicity is checked at construction through the smallest eigenvalue
    of the symmetric part, a cheap guard at the scales this library targets.
    Supports both forward evaluation and the resolvent (a linear solve).
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError(f"affine operator needs a square matrix, got shape {m.shape}")
    b = np.asarray(shift, dtype=float).reshape(-1)
    if b.shape[0] != m.shape[0]:
        raise ShapeError(f"shift length {b.shape[0]} does not match matrix size {m.shape[0]}")
    lam_min = float(np.linalg.eigvalsh(0.5 * (m + m.T)).min())
    if lam_min < -1e-10:
        raise ConfigError(f"matrix is not monotone: min eig of symmetric part = {lam_min:.3e}")
    dim = m.shape[0]
    eye = np.eye(dim)

    def fwd(x):
        return m @ x + b

    def prox(a, rho):
        return np.linalg.solve(eye + rho * m, a - rho * b)

    return MonotoneOperator(Space(dim), forward=fwd, prox=prox, name="affine")


def gradient_quadratic(design, target) -> MonotoneOperator:
    """Gradient of the least-squares loss 0.5*||A x - b||^2: T(x) = A^T(A x - b)."""
    a_mat = np.asarray(design, dtype=float)
    b = np.asarray(target, dtype=float).reshape(-1)
    if a_mat.ndim != 2 or a_mat.shape[0] != b.shape[0]:
        raise ShapeError("design/target shapes are inconsistent")
    dim = a_mat.shape[1]
    gram = a_mat.T @ a_mat
    atb = a_mat.T @ b
    eye = np.eye(dim)

    def fwd(x):
        return a_mat.T @ (a_mat @ x - b)

    def prox(v, rho):
        return np.linalg.solve(eye + rho * gram, v + rho * atb)

    return MonotoneOperator(Space(dim), forward=fwd, prox=prox, name="grad-quadratic")


def l1_subdifferential(lam: float, dim: int) -> MonotoneOperator:
    """Subdifferential of lam*||.||_1; resolvent is soft thresholding."""
    if lam <= 0:
        raise ConfigError(f"l1 threshold must be > 0, got {lam}")

    def prox(a, rho):
        t = rho * lam
        return np.sign(a) * np.maximum(np.abs(a) - t, 0.0)

    return MonotoneOperator(Space(dim), prox=prox, name="l1")


def box_normal_cone(lower, upper) -> MonotoneOperator:
    """Normal cone of the box [lower, upper]; resolvent is the projection."""
    lo = np.asarray(lower, dtype=float).reshape(-1)
    hi = np.asarray(upper, dtype=float).reshape(-1)
    if lo.shape != hi.shape:
        raise ShapeError("box bounds must have equal length")
    if not np.all(lo < hi):
        raise ConfigError("box requires lower < upper componentwise")

    def prox(a, rho):
        return np.clip(a, lo, hi)

    return MonotoneOperator(Space(lo.shape[0]), prox=prox, name="box-normal-cone")


def cube(dim: int) -> MonotoneOperator:
    """T(x) = x^3 componentwise: continuous and monotone but not Lipschitz."""
    return MonotoneOperator(Space(dim), forward=lambda x: x ** 3, name="cube")


def signed_sqrt(dim: int) -> MonotoneOperator:
    """T(x) = sign(x)*sqrt(|x|) componentwise: continuous, non-Lipschitz at 0."""
    def fwd(x):
        return np.sign(x) * np.sqrt(np.abs(x))

    return MonotoneOperator(Space(dim), forward=fwd, name="signed-sqrt")


def zero_op(dim: int) -> MonotoneOperator:
    """T = 0; the resolvent is the identity."""
    return MonotoneOperator(Space(dim), forward=lambda x: np.zeros_like(x),
                            prox=lambda a, rho: a, name="zero")
