"""
Vector field bundles: V, its Jacobian, the derived second-order field and an
optional drift, with a registry of built-in fields referenced by name from
experiment configs.

All callables are batched: y has shape (..., e), V(y) has shape (..., e, d),
jacV(y) has shape (..., e, d, e) with jacV(y)[..., k, b, g] = d_g V_k^b(y),
and W(y) has shape (..., e). Plug-in fields must be pure and re-entrant.
"""
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))
from config.config import FIELD_SETTINGS, TOLERANCES
from src.exceptions import DimensionMismatchError, InvalidArgumentError
from src.logger import setup_logger

logger = setup_logger(__name__)

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class VectorFieldBundle:
    e: int
    d: int
    V: ArrayFn
    jacV: ArrayFn
    W: Optional[ArrayFn] = None
    trust_radius: float = FIELD_SETTINGS["default_trust_radius"]
    name: str = "custom"
    params: Dict[str, Any] = field(default_factory=dict)

    def in_trust_region(self, y: np.ndarray) -> np.ndarray:
        return np.linalg.norm(np.asarray(y, dtype=float), axis=-1) <= self.trust_radius

    def drift(self, y: np.ndarray) -> np.ndarray:
        if self.W is None:
            return np.zeros_like(y)
        return self.W(y)


class DerivedField:
    """y -> (VV_k(y))_k with VV_k^{ab}(y) = sum_g d_g V_k^b(y) V_g^a(y); shape (..., e, d, d)"""

    def __init__(self, bundle: VectorFieldBundle):
        self.bundle = bundle

    def __call__(self, y: np.ndarray) -> np.ndarray:
        return self.from_values(self.bundle.V(y), self.bundle.jacV(y))

    @staticmethod
    def from_values(V: np.ndarray, jac: np.ndarray) -> np.ndarray:
        return np.einsum("...kbg,...ga->...kab", jac, V)


def _probe_shapes(bundle: VectorFieldBundle) -> None:
    y = np.zeros(bundle.e)
    v_shape = np.shape(bundle.V(y))
    j_shape = np.shape(bundle.jacV(y))
    if v_shape != (bundle.e, bundle.d):
        raise DimensionMismatchError(f"V returns shape {v_shape}, expected {(bundle.e, bundle.d)}")
    if j_shape != (bundle.e, bundle.d, bundle.e):
        raise DimensionMismatchError(
            f"jacV returns shape {j_shape}, expected {(bundle.e, bundle.d, bundle.e)}"
        )
    if bundle.W is not None and np.shape(bundle.W(y)) != (bundle.e,):
        raise DimensionMismatchError(f"W returns shape {np.shape(bundle.W(y))}, expected {(bundle.e,)}")


def derived_field(bundle: VectorFieldBundle) -> DerivedField:
    _probe_shapes(bundle)
    return DerivedField(bundle)


def contract(Vk: np.ndarray, Xi: np.ndarray) -> float:
    """Matrix inner product Vk : Xi = trace(Vk Xi^T)"""
    Vk = np.asarray(Vk, dtype=float)
    Xi = np.asarray(Xi, dtype=float)
    if Vk.shape != Xi.shape:
        raise DimensionMismatchError(f"Shape mismatch: {Vk.shape} vs {Xi.shape}")
    return float(np.sum(Vk * Xi))


def contract_all(VV: np.ndarray, Xi: np.ndarray) -> np.ndarray:
    """Batched (VV_k : Xi)_k for VV of shape (..., e, d, d) and Xi of shape (..., d, d)"""
    return np.einsum("...kab,...ab->...k", VV, Xi)


@dataclass
class JacobianReport:
    errors: List[float]
    tolerance: float
    outside_trust_region: int = 0

    @property
    def max_error(self) -> float:
        return max(self.errors) if self.errors else 0.0

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    @property
    def failures(self) -> List[int]:
        return [i for i, err in enumerate(self.errors) if err > self.tolerance]


def validate_jacobian(bundle: VectorFieldBundle, points) -> JacobianReport:
    """
    Compare jacV against central finite differences of V.

    Args:
        bundle: Field to check
        points: Iterable of points in R^e

    Returns:
        JacobianReport: Per-point max error relative to max(1, |J_fd|)
    """
    tol = TOLERANCES["jacobian"]
    base_step = TOLERANCES["jacobian_step"]
    errors = []
    outside = 0
    for y in points:
        y = np.asarray(y, dtype=float).reshape(bundle.e)
        if not bundle.in_trust_region(y):
            outside += 1
        h = base_step * max(1.0, float(np.max(np.abs(y))))
        fd = np.empty((bundle.e, bundle.d, bundle.e))
        for g in range(bundle.e):
            step = np.zeros(bundle.e)
            step[g] = h
            fd[..., g] = (bundle.V(y + step) - bundle.V(y - step)) / (2.0 * h)
        jac = np.asarray(bundle.jacV(y))
        if jac.shape != fd.shape:
            raise DimensionMismatchError(f"jacV returns shape {jac.shape}, expected {fd.shape}")
        errors.append(float(np.max(np.abs(jac - fd)) / max(1.0, float(np.max(np.abs(fd))))))

    if outside:
        logger.warning(f"{outside} validation points lie outside the trust region of '{bundle.name}'")
    report = JacobianReport(errors=errors, tolerance=tol, outside_trust_region=outside)
    if not report.passed:
        logger.warning(f"Jacobian check failed for '{bundle.name}': max error {report.max_error:.3e}")
    return report


FIELD_REGISTRY: Dict[str, Callable[..., VectorFieldBundle]] = {}


def register_field(name: str):
    """Decorator adding a bundle factory to the registry under `name`"""
    def decorator(factory):
        FIELD_REGISTRY[name] = factory
        return factory
    return decorator


def get_field(name: str, **params) -> VectorFieldBundle:
    if name not in FIELD_REGISTRY:
        raise InvalidArgumentError(
            f"Unknown vector field '{name}', available: {sorted(FIELD_REGISTRY)}"
        )
    try:
        bundle = FIELD_REGISTRY[name](**params)
    except TypeError as e:
        raise InvalidArgumentError(f"Bad parameters for field '{name}': {e}") from e
    _probe_shapes(bundle)
    return bundle


@register_field("linear")
def linear_field(sigma=1.0, mu: float = 0.0, trust_radius: float = FIELD_SETTINGS["default_trust_radius"]) -> VectorFieldBundle:
    """Scalar linear field V(y) = y * sigma^T (one column per noise channel), drift W(y) = mu * y"""
    sig = np.atleast_1d(np.asarray(sigma, dtype=float))
    d = sig.size

    def V(y):
        return y[..., :, None] * sig

    def jacV(y):
        return np.broadcast_to(sig[:, None], y.shape[:-1] + (1, d, 1)).copy()

    W = (lambda y: mu * y) if mu != 0.0 else None
    return VectorFieldBundle(1, d, V, jacV, W, trust_radius, "linear", {"sigma": sigma, "mu": mu})


@register_field("constant")
def constant_field(C=((1.0,),), w=None, trust_radius: float = np.inf) -> VectorFieldBundle:
    """Constant V = C of shape (e, d), optional constant drift w"""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    e, d = C.shape

    def V(y):
        return np.broadcast_to(C, y.shape[:-1] + (e, d)).copy()

    def jacV(y):
        return np.zeros(y.shape[:-1] + (e, d, e))

    W = None
    if w is not None:
        w_arr = np.atleast_1d(np.asarray(w, dtype=float))
        W = lambda y: np.broadcast_to(w_arr, y.shape).copy()  # noqa: E731
    return VectorFieldBundle(e, d, V, jacV, W, trust_radius, "constant", {"C": C.tolist(), "w": w})


@register_field("affine")
def affine_field(B, C=None, A=None, trust_radius: float = FIELD_SETTINGS["default_trust_radius"]) -> VectorFieldBundle:
    """V_k^b(y) = sum_g B[k, b, g] y_g + C[k, b]; optional linear drift W(y) = A y"""
    B = np.asarray(B, dtype=float)
    if B.ndim != 3 or B.shape[0] != B.shape[2]:
        raise InvalidArgumentError(f"B must have shape (e, d, e), got {B.shape}")
    e, d, _ = B.shape
    C = np.zeros((e, d)) if C is None else np.asarray(C, dtype=float).reshape(e, d)

    def V(y):
        return np.einsum("kbg,...g->...kb", B, y) + C

    def jacV(y):
        return np.broadcast_to(B, y.shape[:-1] + B.shape).copy()

    W = None
    if A is not None:
        A_arr = np.asarray(A, dtype=float).reshape(e, e)
        W = lambda y: np.einsum("kg,...g->...k", A_arr, y)  # noqa: E731
    params = {"B": B.tolist(), "C": C.tolist(), "A": A}
    return VectorFieldBundle(e, d, V, jacV, W, trust_radius, "affine", params)


@register_field("scalar_pair")
def scalar_pair_field(trust_radius: float = FIELD_SETTINGS["default_trust_radius"]) -> VectorFieldBundle:
    """e = 1, d = 2, V(y) = (y, 1)"""

    def V(y):
        return np.stack([y[..., 0], np.ones_like(y[..., 0])], axis=-1)[..., None, :]

    def jacV(y):
        jac = np.zeros(y.shape[:-1] + (1, 2, 1))
        jac[..., 0, 0, 0] = 1.0
        return jac

    return VectorFieldBundle(1, 2, V, jacV, None, trust_radius, "scalar_pair", {})


@register_field("trig")
def trig_field(scale: float = 1.0) -> VectorFieldBundle:
    """Bounded smooth test field: e = 1, d = 2, V(y) = scale * (sin y, cos y)"""

    def V(y):
        return scale * np.stack([np.sin(y[..., 0]), np.cos(y[..., 0])], axis=-1)[..., None, :]

    def jacV(y):
        jac = np.zeros(y.shape[:-1] + (1, 2, 1))
        jac[..., 0, 0, 0] = scale * np.cos(y[..., 0])
        jac[..., 0, 1, 0] = -scale * np.sin(y[..., 0])
        return jac

    return VectorFieldBundle(1, 2, V, jacV, None, np.inf, "trig", {"scale": scale})
