"""Pure NumPy moment accumulation (the fallback backend).

Stacks the five u-side design rows and three v-side design rows for one
chunk of raw pairs, element-for-element in the same operation order as
the compiled backend, then accumulates the cross-moment blocks through
scipy's dgemm binding with the same transpose flags and beta=1. Both
backends therefore execute the identical BLAS call and produce
bitwise-identical moment matrices at every problem size. A plain
``out += L @ R.T`` would not: it sums the product into a temporary
first, which rounds differently from in-place accumulation once the
inner dimension spans multiple BLAS panels.
"""

import numpy as np
from scipy.linalg.blas import dgemm

NAME = "numpy"
COMPILED = False


def accumulate(KU, DU, KV, DV, w, y, out):
    """out (5M, 3M) += L @ R.T for one chunk of P pairs.

    L rows (per grid node a): K_u*w, K_u*w*du, K_u*w*du^2, K_u*w*y, K_u*w*y*du.
    R rows (per grid node b): K_v, K_v*dv, K_v*dv^2.
    """
    m, p = KU.shape
    if p == 0:
        return
    L = np.empty((5 * m, p))
    R = np.empty((3 * m, p))
    kuw = L[0:m]
    np.multiply(KU, w, out=kuw)
    np.multiply(kuw, DU, out=L[m : 2 * m])
    np.multiply(L[m : 2 * m], DU, out=L[2 * m : 3 * m])
    np.multiply(kuw, y, out=L[3 * m : 4 * m])
    np.multiply(L[3 * m : 4 * m], DU, out=L[4 * m : 5 * m])
    R[0:m] = KV
    np.multiply(KV, DV, out=R[m : 2 * m])
    np.multiply(R[m : 2 * m], DV, out=R[2 * m : 3 * m])
    # In BLAS terms: out^T (3M x 5M column-major) += R @ L^T, matching the
    # compiled backend's call exactly. The transposed views are
    # F-contiguous, so no copies are made and c is updated in place.
    dgemm(1.0, R.T, L.T, beta=1.0, c=out.T, trans_a=1, overwrite_c=1)
