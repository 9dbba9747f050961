"""Central finite-difference oracle used to verify analytic gradients.

Independent of the library's backward pass: it only ever calls the loss
function.
"""

import numpy as np

FD_STEP = 1e-5


def finite_difference(loss_fn, arrays, h=FD_STEP):
    """Numeric gradient for each array in *arrays* (mutated in place and
    restored); ``loss_fn()`` must read the same array objects."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            orig = arr[ix]
            arr[ix] = orig + h
            up = loss_fn()
            arr[ix] = orig - h
            down = loss_fn()
            arr[ix] = orig
            g[ix] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    """Worst elementwise |a - n| / max(|a|, |n|, floor)."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst
