"""Recovery-sequence energy convergence for the thin-film functional.

Prescribes a smooth in-plane deformation and a target third column, builds
the recovery fields ubar + eps * x3 * b on a slab, and prints the gap between
the rescaled 3-D energy and the reduced 2-D target as eps shrinks.
"""

import numpy as np

from nlfilm import energy as en
from nlfilm import field as F
from nlfilm import gamma as gm
from nlfilm import geometry as geo
from nlfilm import kernel as K
from nlfilm.nlgrad import Horizon, NonlocalOperator


def bump(t):
    t = np.clip(np.abs(t), 0.0, 1.0)
    return (1.0 - t**2) ** 4


def main():
    k3 = K.make_truncated_fractional(0.5, "bump")
    k2 = K.reduce_kernel(k3)
    g = F.Grid((64, 64, 16), (6.0, 6.0, 4.0))
    dom = geo.SlabDomain(geo.Rectangle(1.5, 1.5, center=(3.0, 3.0)),
                         (1.5, 2.5), Horizon(1.0, 0.5), g)
    op3 = NonlocalOperator(k3, Horizon(1.0, 0.5), g)
    g2 = dom.plane_grid
    op2 = NonlocalOperator(k2, 1.0, g2)

    X2, Y2 = g2.mesh()
    prof = bump(np.hypot(X2 - 3, Y2 - 3) / 0.7)
    ubar = F.Field(g2, np.stack([
        prof * np.sin(np.pi * X2 / 3.0), prof, 0.5 * prof], axis=-1))
    dfield = F.Field(g2, np.stack([
        0.3 * prof, 0.2 * prof * np.cos(np.pi * Y2 / 3.0),
        0.4 * prof], axis=-1))

    W = en.lp_density(2)
    omega2, _ = en._plane_masks(dom)
    Gbar = op2.gradient(ubar).data.reshape(g2.dims + (3, 2))
    Ffull = np.concatenate([Gbar, dfield.data[..., None]], axis=-1)
    target = float(np.sum(W.evaluate(Ffull)[omega2]) * g2.cell_volume)
    print(f"reduced 2-D target energy: {target:.6f}")

    eps_list = [0.2, 0.1, 0.05, 0.025]
    fields, b = gm.recovery_sequence(ubar, dfield, op2, dom, eps_list,
                                     representative="smooth")
    print(f"{'eps':>7} {'energy':>12} {'gap':>12} {'ratio':>8}")
    prev = None
    for eps, u in zip(eps_list, fields):
        val = en.thin_energy(W, op3, dom, eps, u, check_support=False)
        gap = abs(val - target)
        ratio = "" if prev is None else f"{gap / prev:8.3f}"
        print(f"{eps:7.3f} {val:12.6f} {gap:12.3e} {ratio:>8}")
        prev = gap


if __name__ == "__main__":
    main()
