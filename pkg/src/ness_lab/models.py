"""Problem instances: mobility K(q), entropy density s(q) and the static covariance.

A :class:`ModelSpec` bundles the phenomenology of one nonlinear diffusion
``dq/dt = div(K(q) grad q)`` on (0, 1) with reservoir densities at both ends.
Derivatives are supplied analytically; finite differences only appear in the
test-suite as an oracle.

Conventions
-----------
* ``q`` is always an ``(n,)`` array, even for scalar models.
* ``mobility_grad(q)[j, k, l]`` is ``dK_jk / dq_l``.
* ``static_covariance(q)`` is ``J(q) = -(Hess s(q))^{-1}``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .exceptions import DomainViolation, PhaseWindowError

__all__ = [
    "ModelSpec",
    "ModelCatalogEntry",
    "ValidationReport",
    "CATALOG",
    "make_model",
    "polynomial_model",
    "default_window",
    "eval_mobility",
    "eval_mobility_grad",
    "eval_static_covariance",
    "validate_model",
]

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ModelSpec:
    """One problem instance of the nonlinear diffusion."""

    name: str
    n: int
    mobility_fn: ArrayFn
    mobility_grad_fn: ArrayFn
    entropy_fn: Callable[[np.ndarray], float]
    entropy_grad_fn: ArrayFn
    entropy_hess_fn: ArrayFn
    q_left: np.ndarray
    q_right: np.ndarray
    window_lo: np.ndarray
    window_hi: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("component count must be positive")
        for attr in ("q_left", "q_right", "window_lo", "window_hi"):
            arr = np.atleast_1d(np.asarray(getattr(self, attr), dtype=float))
            if arr.shape != (self.n,):
                raise ValueError(f"{attr} must have shape ({self.n},), got {arr.shape}")
            object.__setattr__(self, attr, arr)
        if np.any(self.window_lo > self.window_hi):
            raise ValueError("domain window has lo > hi")
        for attr in ("q_left", "q_right"):
            q = getattr(self, attr)
            bad = np.flatnonzero((q < self.window_lo) | (q > self.window_hi))
            if bad.size:
                c = int(bad[0])
                raise DomainViolation(
                    f"{attr}[{c}] = {q[c]!r} lies outside the domain window "
                    f"[{self.window_lo[c]}, {self.window_hi[c]}] of model {self.name!r}",
                    component=c,
                    value=float(q[c]),
                )

    def check_domain(self, q) -> np.ndarray:
        q = np.atleast_1d(np.asarray(q, dtype=float))
        if q.shape != (self.n,):
            raise ValueError(f"expected a {self.n}-vector, got shape {q.shape}")
        bad = np.flatnonzero(~((q >= self.window_lo) & (q <= self.window_hi)))
        if bad.size:
            c = int(bad[0])
            raise DomainViolation(
                f"component {c} of q = {q[c]!r} outside domain window "
                f"[{self.window_lo[c]}, {self.window_hi[c]}] of model {self.name!r}",
                component=c,
                value=float(q[c]),
            )
        return q

    def mobility(self, q) -> np.ndarray:
        q = self.check_domain(q)
        return np.asarray(self.mobility_fn(q), dtype=float).reshape(self.n, self.n)

    def mobility_grad(self, q) -> np.ndarray:
        q = self.check_domain(q)
        return np.asarray(self.mobility_grad_fn(q), dtype=float).reshape(self.n, self.n, self.n)

    def entropy(self, q) -> float:
        return float(self.entropy_fn(self.check_domain(q)))

    def entropy_hess(self, q) -> np.ndarray:
        q = self.check_domain(q)
        return np.asarray(self.entropy_hess_fn(q), dtype=float).reshape(self.n, self.n)

    def static_covariance(self, q) -> np.ndarray:
        hess = self.entropy_hess(q)
        if not np.all(np.isfinite(hess)):
            raise PhaseWindowError(f"entropy Hessian not finite at q = {np.atleast_1d(q)}")
        sym = 0.5 * (hess + hess.T)
        eig = np.linalg.eigvalsh(sym)
        if eig.max() >= 0.0:
            raise PhaseWindowError(
                f"entropy Hessian not negative definite at q = {np.atleast_1d(q)} "
                f"(largest eigenvalue {eig.max():.3e})"
            )
        J = -np.linalg.inv(sym)
        return 0.5 * (J + J.T)

    @property
    def is_equilibrium(self) -> bool:
        return bool(np.array_equal(self.q_left, self.q_right))

    def with_boundaries(self, q_left, q_right, window=None) -> "ModelSpec":
        """Copy with new reservoir densities (window re-derived unless given)."""
        entry = CATALOG.get(self.name)
        natural = entry.natural if entry is not None else None
        lo, hi = window if window is not None else default_window(q_left, q_right, natural)
        return replace(self, q_left=q_left, q_right=q_right, window_lo=lo, window_hi=hi)


def default_window(q_left, q_right, natural=None, inflate=0.05):
    """Boundary span inflated by ``inflate`` on each side, clipped to ``natural``.

    A degenerate span (equal boundaries) is widened by ``inflate`` in absolute
    terms so probes and fluctuations still have room.
    """
    ql = np.atleast_1d(np.asarray(q_left, dtype=float))
    qr = np.atleast_1d(np.asarray(q_right, dtype=float))
    lo = np.minimum(ql, qr)
    hi = np.maximum(ql, qr)
    margin = inflate * np.where(hi > lo, hi - lo, 1.0)
    lo, hi = lo - margin, hi + margin
    if natural is not None:
        nlo, nhi = natural
        lo = np.maximum(lo, nlo)
        hi = np.minimum(hi, nhi)
    return lo, hi


# --------------------------------------------------------------------------
# building blocks


def _binary_entropy(q):
    return float(np.sum(-q * np.log(q) - (1 - q) * np.log(1 - q)))


def _binary_entropy_grad(q):
    return np.log((1 - q) / q)


def _binary_entropy_hess(q):
    with np.errstate(divide="ignore"):
        return np.diag(-1.0 / (q * (1 - q)))


def _quadratic_entropy(q):
    return float(-0.5 * q @ q)


def _quadratic_entropy_grad(q):
    return -q


def _quadratic_entropy_hess(q):
    return -np.eye(q.size)


_OPEN_UNIT = (1e-12, 1 - 1e-12)


def _ssep(q_left, q_right, window=None):
    lo, hi = window or default_window(q_left, q_right, _OPEN_UNIT)
    return ModelSpec(
        name="ssep",
        n=1,
        mobility_fn=lambda q: np.ones((1, 1)),
        mobility_grad_fn=lambda q: np.zeros((1, 1, 1)),
        entropy_fn=_binary_entropy,
        entropy_grad_fn=_binary_entropy_grad,
        entropy_hess_fn=_binary_entropy_hess,
        q_left=q_left,
        q_right=q_right,
        window_lo=lo,
        window_hi=hi,
    )


def _gaussian(q_left, q_right, window=None, kappa=1.0):
    lo, hi = window or default_window(q_left, q_right)
    return ModelSpec(
        name="gaussian",
        n=1,
        mobility_fn=lambda q: np.full((1, 1), kappa),
        mobility_grad_fn=lambda q: np.zeros((1, 1, 1)),
        entropy_fn=_quadratic_entropy,
        entropy_grad_fn=_quadratic_entropy_grad,
        entropy_hess_fn=_quadratic_entropy_hess,
        q_left=q_left,
        q_right=q_right,
        window_lo=lo,
        window_hi=hi,
        params={"kappa": kappa},
    )


def _power_law(q_left, q_right, window=None, alpha=1.0):
    lo, hi = window or default_window(q_left, q_right, _OPEN_UNIT)
    return ModelSpec(
        name="power_law",
        n=1,
        mobility_fn=lambda q: np.array([[q[0] ** alpha]]),
        mobility_grad_fn=lambda q: np.array([[[alpha * q[0] ** (alpha - 1)]]]),
        entropy_fn=_binary_entropy,
        entropy_grad_fn=_binary_entropy_grad,
        entropy_hess_fn=_binary_entropy_hess,
        q_left=q_left,
        q_right=q_right,
        window_lo=lo,
        window_hi=hi,
        params={"alpha": alpha},
    )


def _two_component(q_left, q_right, window=None, epsilon=0.2):
    # K = I + eps * [[0, q1], [q2, 0]]; independent binary entropies.
    def mobility(q):
        return np.array([[1.0, epsilon * q[0]], [epsilon * q[1], 1.0]])

    def mobility_grad(q):
        g = np.zeros((2, 2, 2))
        g[0, 1, 0] = epsilon
        g[1, 0, 1] = epsilon
        return g

    lo, hi = window or default_window(q_left, q_right, _OPEN_UNIT)
    return ModelSpec(
        name="two_component",
        n=2,
        mobility_fn=mobility,
        mobility_grad_fn=mobility_grad,
        entropy_fn=_binary_entropy,
        entropy_grad_fn=_binary_entropy_grad,
        entropy_hess_fn=_binary_entropy_hess,
        q_left=q_left,
        q_right=q_right,
        window_lo=lo,
        window_hi=hi,
        params={"epsilon": epsilon},
    )


def polynomial_model(q_left, q_right, mobility_coeffs, entropy_coeffs, window=None):
    """Scalar model with ``K(q) = sum_i k_i q^i`` and ``s(q) = sum_i s_i q^i``.

    Coefficients are in ascending order of power.
    """
    K = np.polynomial.Polynomial(np.asarray(mobility_coeffs, dtype=float))
    s = np.polynomial.Polynomial(np.asarray(entropy_coeffs, dtype=float))
    dK, ds, d2s = K.deriv(), s.deriv(), s.deriv(2)
    lo, hi = window or default_window(q_left, q_right)
    return ModelSpec(
        name="polynomial",
        n=1,
        mobility_fn=lambda q: np.array([[K(q[0])]]),
        mobility_grad_fn=lambda q: np.array([[[dK(q[0])]]]),
        entropy_fn=lambda q: float(s(q[0])),
        entropy_grad_fn=lambda q: np.array([ds(q[0])]),
        entropy_hess_fn=lambda q: np.array([[d2s(q[0])]]),
        q_left=q_left,
        q_right=q_right,
        window_lo=lo,
        window_hi=hi,
        params={
            "mobility_coeffs": [float(c) for c in mobility_coeffs],
            "entropy_coeffs": [float(c) for c in entropy_coeffs],
        },
    )


@dataclass(frozen=True)
class ModelCatalogEntry:
    """Named factory plus the analytic facts tests rely on."""

    name: str
    factory: Callable[..., ModelSpec]
    n: int
    natural: Optional[tuple] = None
    closed_form_notes: dict = field(default_factory=dict)


def _ssep_profile(q_left, q_right):
    a, b = float(q_left[0]), float(q_right[0] - q_left[0])
    return lambda x: (a + b * np.asarray(x))[..., None]


def _ssep_phi(q_left, q_right):
    return -2.0 * float(q_right[0] - q_left[0]) ** 2


def _power_law_profile(q_left, q_right):
    # alpha = 1 only: (q q')' = 0  =>  q^2 linear in x.
    l2, r2 = float(q_left[0]) ** 2, float(q_right[0]) ** 2
    return lambda x: np.sqrt(l2 + (r2 - l2) * np.asarray(x))[..., None]


def _gaussian_profile(q_left, q_right):
    a, b = float(q_left[0]), float(q_right[0] - q_left[0])
    return lambda x: (a + b * np.asarray(x))[..., None]


CATALOG = {
    entry.name: entry
    for entry in (
        ModelCatalogEntry(
            "ssep", _ssep, 1, _OPEN_UNIT,
            {"steady_profile": _ssep_profile, "phi": _ssep_phi},
        ),
        ModelCatalogEntry(
            "gaussian", _gaussian, 1, None,
            {"steady_profile": _gaussian_profile, "phi": lambda ql, qr: 0.0},
        ),
        ModelCatalogEntry(
            "power_law", _power_law, 1, _OPEN_UNIT,
            {"steady_profile_alpha1": _power_law_profile},
        ),
        ModelCatalogEntry("two_component", _two_component, 2, _OPEN_UNIT),
    )
}


def make_model(name, q_left, q_right, window=None, **params) -> ModelSpec:
    """Build a catalog model (or ``name='polynomial'`` with coefficient params)."""
    q_left = np.atleast_1d(np.asarray(q_left, dtype=float))
    q_right = np.atleast_1d(np.asarray(q_right, dtype=float))
    if window is not None:
        window = tuple(np.atleast_1d(np.asarray(w, dtype=float)) for w in window)
    if name == "polynomial":
        return polynomial_model(q_left, q_right, window=window, **params)
    try:
        entry = CATALOG[name]
    except KeyError:
        known = ", ".join(sorted([*CATALOG, "polynomial"]))
        raise KeyError(f"unknown model {name!r}; known models: {known}") from None
    return entry.factory(q_left, q_right, window, **params)


def eval_mobility(spec: ModelSpec, q) -> np.ndarray:
    return spec.mobility(q)


def eval_mobility_grad(spec: ModelSpec, q) -> np.ndarray:
    return spec.mobility_grad(q)


def eval_static_covariance(spec: ModelSpec, q) -> np.ndarray:
    return spec.static_covariance(q)


@dataclass
class ValidationReport:
    passed: bool
    probes: int
    max_hessian_eig: float
    min_mobility_sym_eig: float
    failures: list = field(default_factory=list)


def validate_model(spec: ModelSpec, probe_count: int = 11) -> ValidationReport:
    """Probe the single-phase assumptions on a lattice spanning the window.

    Checks that Hess s is finite and negative definite, that K has a positive
    definite symmetric part, and that K' is finite. Failures are collected,
    never raised.
    """
    if probe_count < 2:
        raise ValueError("probe_count must be >= 2")
    axes = [np.linspace(lo, hi, probe_count) for lo, hi in zip(spec.window_lo, spec.window_hi)]
    worst_hess = -np.inf
    worst_mob = np.inf
    failures = []
    count = 0
    with np.errstate(all="ignore"):
        for point in itertools.product(*axes):
            q = np.array(point)
            count += 1
            hess = np.asarray(spec.entropy_hess_fn(q), dtype=float).reshape(spec.n, spec.n)
            if not np.all(np.isfinite(hess)):
                failures.append((q, "singular Hessian (non-finite entries)"))
                worst_hess = np.inf
            else:
                top = np.linalg.eigvalsh(0.5 * (hess + hess.T)).max()
                worst_hess = max(worst_hess, top)
                if top >= 0:
                    failures.append((q, f"Hessian not negative definite (eig {top:.3e})"))
            K = np.asarray(spec.mobility_fn(q), dtype=float).reshape(spec.n, spec.n)
            dK = np.asarray(spec.mobility_grad_fn(q), dtype=float)
            if not (np.all(np.isfinite(K)) and np.all(np.isfinite(dK))):
                failures.append((q, "mobility or its gradient not finite"))
                worst_mob = -np.inf
                continue
            low = np.linalg.eigvalsh(0.5 * (K + K.T)).min()
            worst_mob = min(worst_mob, low)
            if low <= 0:
                failures.append((q, f"mobility not parabolic (sym eig {low:.3e})"))
    return ValidationReport(
        passed=not failures,
        probes=count,
        max_hessian_eig=float(worst_hess),
        min_mobility_sym_eig=float(worst_mob),
        failures=failures,
    )
