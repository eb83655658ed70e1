"""Constrained gradient update rules for continual learning.

All rules operate on flat (1-D, float64) gradient vectors and share the
same gating: a projection is applied only when the proposed gradient
conflicts with the reference gradient drawn from episodic memory, i.e.
when their inner product is negative. Otherwise every rule passes the
proposed gradient through untouched.

Rules:

* ``agem_project``     -- remove the conflicting component:
                          g~ = g - (g.g_ref / g_ref.g_ref) g_ref
* ``soft_gem_update``  -- enforce a positive margin eps on normalized
                          gradients: g~ = gh - (gh.gh_ref - eps) gh_ref
* ``aagem_update``     -- average the normalized gradients:
                          g~ = (gh + gh_ref) / 2
* ``gem_project``      -- nearest vector satisfying g~.g_k >= 0 for a
                          whole set of per-task constraint gradients,
                          solved through the nonnegative dual QP.

where gh = g/|g| and gh_ref = g_ref/|g_ref|.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import InvalidEpsilon, SolverNotConverged, ZeroGradient, ZeroUpdateWarning

# Norms at or below this floor are treated as degenerate batches.
ZERO_FLOOR = 1e-12

# Dual QP solver caps (constraint counts are tiny, <= tasks - 1).
GEM_MAX_ITER = 10_000
GEM_KKT_TOL = 1e-8


def _as_grad(v) -> np.ndarray:
    return np.asarray(v, dtype=np.float64)


def normalize(grad) -> np.ndarray:
    """Return grad scaled to unit Euclidean norm.

    Raises ZeroGradient when |grad| <= ZERO_FLOOR.
    """
    grad = _as_grad(grad)
    norm = float(np.linalg.norm(grad))
    if norm <= ZERO_FLOOR:
        raise ZeroGradient(f"gradient norm {norm:g} at or below floor {ZERO_FLOOR:g}")
    return grad / norm


def violation_check(grad, ref_grad) -> bool:
    """True when the proposed gradient conflicts with the reference one.

    The conflict test is sign(grad . ref_grad) < 0, which is invariant
    to normalization, so the raw dot product is used directly.
    """
    grad = _as_grad(grad)
    ref_grad = _as_grad(ref_grad)
    if np.linalg.norm(grad) <= ZERO_FLOOR or np.linalg.norm(ref_grad) <= ZERO_FLOOR:
        raise ZeroGradient("violation test needs two nonzero gradients")
    return float(grad @ ref_grad) < 0.0


def agem_project(grad, ref_grad) -> np.ndarray:
    """Single-constraint projection of the proposed gradient.

    On a violation, removes the component along the reference gradient:

        g~ = g - (g . g_ref / g_ref . g_ref) g_ref

    leaving g~ . g_ref = 0. Without a violation, returns grad unchanged.
    """
    grad = _as_grad(grad)
    ref_grad = _as_grad(ref_grad)
    if np.linalg.norm(ref_grad) <= ZERO_FLOOR:
        raise ZeroGradient("reference gradient is degenerate")
    dot = float(grad @ ref_grad)
    if dot >= 0.0:
        return grad
    return grad - (dot / float(ref_grad @ ref_grad)) * ref_grad


def soft_gem_update(grad, ref_grad, epsilon: float) -> np.ndarray:
    """Projection with a soft margin eps in [0, 1] on normalized gradients.

    On a violation the update solves

        min_z 1/2 |gh - z|^2   s.t.  z . gh_ref >= eps

    whose closed form is g~ = gh - (gh . gh_ref - eps) gh_ref, so the
    result sits exactly on the margin: g~ . gh_ref = eps. Without a
    violation, returns grad unchanged.

    eps = 0 exactly dispatches to ``agem_project`` on the ORIGINAL
    unnormalized gradients (the two coincide only in that limit).
    """
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidEpsilon(f"epsilon must lie in [0, 1], got {epsilon!r}")
    if epsilon == 0.0:
        return agem_project(grad, ref_grad)
    grad = _as_grad(grad)
    ref_grad = _as_grad(ref_grad)
    unit = normalize(grad)
    unit_ref = normalize(ref_grad)
    if float(grad @ ref_grad) >= 0.0:
        return grad
    dot = float(unit @ unit_ref)
    return unit - ((dot - epsilon) / float(unit_ref @ unit_ref)) * unit_ref


def aagem_update(grad, ref_grad) -> np.ndarray:
    """Average of the normalized proposed and reference gradients.

    On a violation returns (gh + gh_ref) / 2, so the inner product with
    gh_ref becomes (gh . gh_ref + 1) / 2 >= 0. Without a violation,
    returns grad unchanged.

    Exactly opposed unit gradients average to the zero vector; that case
    emits ZeroUpdateWarning and the caller should skip the step.
    """
    grad = _as_grad(grad)
    ref_grad = _as_grad(ref_grad)
    unit = normalize(grad)
    unit_ref = normalize(ref_grad)
    if float(grad @ ref_grad) >= 0.0:
        return grad
    update = 0.5 * (unit + unit_ref)
    if not update.any():
        warnings.warn(
            "opposed unit gradients averaged to zero; skip this step",
            ZeroUpdateWarning,
            stacklevel=2,
        )
    return update


def gem_project(grad, constraint_grads) -> np.ndarray:
    """Nearest vector to grad with nonnegative dot against every constraint.

        min_z 1/2 |g - z|^2   s.t.  z . g_k >= 0  for all k

    Solved through the dual: z = g + G^T v with v >= 0 minimizing
    1/2 v^T (G G^T) v + v^T G g, by accelerated projected gradient
    descent with step 1/L, L = trace(G G^T). Constraint rows are scaled
    to unit norm first (the constraints only fix directions), which
    keeps the Gram matrix well conditioned; acceleration restarts
    whenever the dual objective rises.

    Constraint gradients with degenerate norm impose nothing and are
    dropped. If grad already satisfies every constraint it is returned
    unchanged. Raises SolverNotConverged (with the final KKT residual)
    after GEM_MAX_ITER iterations.
    """
    grad = _as_grad(grad)
    rows = [_as_grad(c) for c in constraint_grads]
    rows = [c for c in rows if np.linalg.norm(c) > ZERO_FLOOR]
    if not rows:
        return grad
    G = np.stack(rows)
    if np.all(G @ grad >= 0.0):
        return grad

    G = G / np.linalg.norm(G, axis=1, keepdims=True)
    dots = G @ grad
    gram = G @ G.T
    step = 1.0 / float(np.trace(gram))
    scale = max(1.0, float(np.linalg.norm(grad)))

    def natural_residual(u, slack):
        # componentwise min(v, G z): zero iff v >= 0, G z >= 0 and
        # v_k (G z)_k = 0 hold together; well scaled even for large duals
        return float(np.max(np.abs(np.minimum(u, slack / scale))))

    def polished(u, slack):
        # exact equality-KKT solve on the working set the iterates have
        # identified; rescues degenerate duals (e.g. more constraints
        # than dimensions) where first-order steps crawl
        active = np.flatnonzero((slack / scale <= 1e-6) | (u >= 1e-8))
        if len(active) == 0:
            return None
        sub = np.linalg.lstsq(gram[np.ix_(active, active)], -dots[active], rcond=None)[0]
        candidate = np.zeros_like(u)
        candidate[active] = sub
        return candidate

    def dual_objective(u):
        return 0.5 * float(u @ gram @ u) + float(u @ dots)

    v = np.zeros(len(rows))
    momentum = v
    t = 1.0
    value = dual_objective(v)
    residual = np.inf
    for iteration in range(GEM_MAX_ITER):
        slack = gram @ v + dots          # = G z for z = g + G^T v
        residual = natural_residual(v, slack)
        if residual < GEM_KKT_TOL:
            break
        if iteration % 500 == 499:
            candidate = polished(v, slack)
            if candidate is not None:
                cand_slack = gram @ candidate + dots
                if natural_residual(candidate, cand_slack) < GEM_KKT_TOL:
                    v = np.maximum(0.0, candidate)
                    break
        v_next = np.maximum(0.0, momentum - step * (gram @ momentum + dots))
        value_next = dual_objective(v_next)
        if value_next > value:           # restart the momentum sequence
            v_next = np.maximum(0.0, v - step * slack)
            value_next = dual_objective(v_next)
            momentum = v_next
            t = 1.0
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            momentum = v_next + ((t - 1.0) / t_next) * (v_next - v)
            t = t_next
        v, value = v_next, value_next
    else:
        raise SolverNotConverged(
            f"dual QP stalled at KKT residual {residual:.3e} "
            f"after {GEM_MAX_ITER} iterations",
            residual=residual,
        )
    return grad + G.T @ v
