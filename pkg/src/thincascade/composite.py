"""Uniform composite approximation on the thin physical domain.

For a thickness eps the approximation blends three ingredients:

  * branch fields: transverse correctors plus the one-dimensional limit
    solutions, evaluated in (x, y/eps);
  * joint terms evaluated in fully stretched coordinates (x/eps, y/eps),
    active on a window |x| < 2 l eps^alpha around the joint;
  * end layers in (distance-to-end)/eps coordinates, active near x = -+1,
    which restore the exact zero condition at the clamped ends.

The window exponent alpha must sit in (2/3, 1): wide enough that the joint
terms take over before the branch Taylor data degrades, narrow enough that
the stretched window stays inside the truncated joint mesh.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cutoffs import end_cutoff, plateau_cutoff
from .inner import InnerExpansion

__all__ = ["CompositeConfig", "CompositeField"]


@dataclass(frozen=True)
class CompositeConfig:
    alpha: float = 0.75
    delta_end: float = 0.25


class CompositeField:
    """Evaluator for the order-m composite approximation at one thickness."""

    def __init__(
        self,
        expansion: InnerExpansion,
        eps: float,
        config: CompositeConfig | None = None,
    ) -> None:
        config = config or CompositeConfig()
        if not 0.0 < eps < 1.0:
            raise ValueError(f"thickness must lie in (0, 1), got {eps}")
        if not 2.0 / 3.0 < config.alpha < 1.0:
            raise ValueError(f"window exponent must lie in (2/3, 1), got {config.alpha}")
        geom = expansion.geom
        outer = 2.0 * geom.l * eps**config.alpha
        if outer / eps > expansion.L:
            raise ValueError(
                f"joint window {outer / eps:.2f} (stretched) exceeds the truncated "
                f"joint domain L={expansion.L}; decrease eps or increase L"
            )
        if outer >= 1.0 - config.delta_end:
            raise ValueError(
                f"joint window reaches x={outer:.2f}, colliding with the clamped-end "
                f"zone beyond {1.0 - config.delta_end}; decrease eps"
            )
        self.expansion = expansion
        self.eps = eps
        self.config = config
        self.m = expansion.m
        self.chi_joint = plateau_cutoff(geom.l * eps**config.alpha, outer)
        self.chi_end = {1: end_cutoff(1, config.delta_end), 2: end_cutoff(2, config.delta_end)}
        self.n_terms = [expansion.n_term(k) for k in range(2 * expansion.m + 1)]
        # branch data per order k: (u_k, du_k/dx, du_k/deta, omega_{k+2})
        self.branch_terms: dict[int, list] = {1: [], 2: []}
        for branch in (1, 2):
            for k in range(2 * expansion.m + 1):
                u_k = expansion.u.get((branch, k))
                if u_k is not None and u_k.is_zero():
                    u_k = None
                self.branch_terms[branch].append(
                    (
                        u_k,
                        u_k.x_derivative(1) if u_k is not None else None,
                        u_k.eta_derivative() if u_k is not None else None,
                        expansion.omega[k + 2],
                    )
                )

    # ------------------------------------------------------------------

    def _eval(self, x, y, want_grad: bool):
        eps = self.eps
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        x = x.astype(float)
        y = y.astype(float)
        eta = y / eps
        val = np.zeros(x.shape)
        gx = np.zeros(x.shape) if want_grad else None
        gy = np.zeros(x.shape) if want_grad else None

        chi = self.chi_joint.value(x)
        dchi = self.chi_joint.d1(x) if want_grad else None
        outer_w = 1.0 - chi

        # --- branch part: (1 - chi) * sum eps^k (u_k + omega_{k+2}) -------
        for branch in (1, 2):
            mask = (x < 0.0) if branch == 1 else (x >= 0.0)
            mask &= outer_w > 0.0
            if not np.any(mask):
                continue
            xb, etab = x[mask], eta[mask]
            vb = np.zeros(xb.shape)
            gxb = np.zeros(xb.shape) if want_grad else None
            gyb = np.zeros(xb.shape) if want_grad else None
            for k, (u_k, du_dx, du_de, om) in enumerate(self.branch_terms[branch]):
                ek = eps**k
                term = om.value(xb, branch)
                dterm = om.deriv(xb, branch, 1) if want_grad else None
                if u_k is not None:
                    term = term + u_k.value(xb, etab)
                    if want_grad:
                        dterm = dterm + du_dx.value(xb, etab)
                        gyb += ek * du_de.value(xb, etab) / eps
                vb += ek * term
                if want_grad:
                    gxb += ek * dterm
            w = outer_w[mask]
            val[mask] += w * vb
            if want_grad:
                gx[mask] += w * gxb - dchi[mask] * vb
                gy[mask] += w * gyb

        # --- joint part: chi * sum eps^k N_k(x/eps, y/eps) ----------------
        jmask = chi > 0.0
        if np.any(jmask):
            xisub = x[jmask] / eps
            etasub = eta[jmask]
            vj = np.zeros(xisub.shape)
            gxj = np.zeros(xisub.shape) if want_grad else None
            gyj = np.zeros(xisub.shape) if want_grad else None
            for k, term in enumerate(self.n_terms):
                ek = eps**k
                vj += ek * term.value(xisub, etasub)
                if want_grad:
                    dxi, deta_ = term.gradient(xisub, etasub)
                    gxj += ek * dxi / eps
                    gyj += ek * deta_ / eps
            w = chi[jmask]
            val[jmask] += w * vj
            if want_grad:
                gx[jmask] += w * gxj + dchi[jmask] * vj
                gy[jmask] += w * gyj

        # --- end layers ----------------------------------------------------
        for branch in (1, 2):
            cend = self.chi_end[branch]
            cv = cend.value(x)
            lmask = cv > 0.0
            if not np.any(lmask):
                continue
            zeta = ((1.0 + x[lmask]) if branch == 1 else (1.0 - x[lmask])) / eps
            etal = eta[lmask]
            sign = 1.0 if branch == 1 else -1.0
            vl = np.zeros(zeta.shape)
            gxl = np.zeros(zeta.shape) if want_grad else None
            gyl = np.zeros(zeta.shape) if want_grad else None
            for k in range(2, 2 * self.m + 1, 2):
                layer = self.expansion.layer(branch, k)
                if layer is None or layer.is_zero():
                    continue
                ek = eps**k
                vl += ek * layer.value(zeta, etal)
                if want_grad:
                    dz, de = layer.gradient(zeta, etal)
                    gxl += ek * sign * dz / eps
                    gyl += ek * de / eps
            val[lmask] += cv[lmask] * vl
            if want_grad:
                gx[lmask] += cv[lmask] * gxl + cend.d1(x[lmask]) * vl
                gy[lmask] += cv[lmask] * gyl
        return (val, gx, gy) if want_grad else val

    def value(self, x, y):
        return self._eval(x, y, want_grad=False)

    def value_and_gradient(self, x, y):
        return self._eval(x, y, want_grad=True)
