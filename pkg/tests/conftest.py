import numpy as np

from transgap.constants import compute_cw, measure_norms
from transgap.models import layout_for
from transgap.rng import stream


def sample_weight_pair(spec, base_seed: int, pair_seed: int, radius: float = 0.5):
    """A pair (w, w') inside a common ball, plus their measured constants.

    Both points start from the seeded initialization and differ by a random
    step of at most ``radius``.  The returned c_W is the max spectral norm
    over the matrix blocks of both points, so the pair sits inside the
    spectral ball it is checked against.
    """
    from transgap.models import init_params

    layout = layout_for(spec)
    w = init_params(spec, base_seed)
    rng = stream(pair_seed, "pair_direction")
    direction = rng.normal(size=layout.dim)
    direction *= radius * rng.random() / np.linalg.norm(direction)
    w2 = w + direction
    cw = max(compute_cw(w, layout)[0], compute_cw(w2, layout)[0])
    return w, w2, cw


def pair_norms(spec, p, w, w2):
    """Propagation norms valid for both endpoints (gprgnn norms vary with
    the coefficient block; take the elementwise max)."""
    layout = layout_for(spec)
    if spec.arch != "gprgnn":
        return measure_norms(spec, p)
    na = measure_norms(spec, p, gamma=layout.view(w, "gamma"))
    nb = measure_norms(spec, p, gamma=layout.view(w2, "gamma"))
    from transgap.constants import PropagationNorms
    return PropagationNorms(a_inf=max(na.a_inf, nb.a_inf),
                            a2_inf=max(na.a2_inf, nb.a2_inf),
                            g_inf=max(na.g_inf, nb.g_inf),
                            power_sum=max(na.power_sum, nb.power_sum))
