"""Shared test utilities: flatten model parameters and grad-check whole objectives.

The finite-difference side re-evaluates the objective with an independent
forward pass in extended precision (``np.longdouble``). In float64 the
difference quotient carries ~1e-11 of round-off, which swamps the relative
error of coordinates whose true gradient is ~1e-8 (dead-ish units, L1 signs
cancelling over a batch).
"""
import numpy as np

from gucnet.model import Mode, forward_latent
from gucnet.numeric import grad_check

LD = np.longdouble


def flat_params(model):
    return np.concatenate([p.ravel() for p in model.parameters().values()])


def flat_grads(model, grads):
    return np.concatenate([grads[n].ravel() if n in grads else np.zeros(p.size)
                           for n, p in model.parameters().items()])


def unflatten(model, vec):
    out, pos = {}, 0
    for name, p in model.parameters().items():
        out[name] = vec[pos:pos + p.size].reshape(p.shape)
        pos += p.size
    return out


def _tower_ld(params, prefix, n_layers, x, masks):
    h = x.astype(LD)
    for i in range(n_layers):
        z = h @ params[f"{prefix}.W{i}"].astype(LD) + params[f"{prefix}.b{i}"].astype(LD)
        if i == n_layers - 1:
            return z
        h = np.maximum(z, 0)
        if masks[i] is not None:
            h = h * masks[i].astype(LD)


def _ce_ld(logits, labels):
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return (lse - z[np.arange(len(labels)), labels]).mean()


def reference_objective(model, vec, objective, alpha, x, labels, y=None, y_labels=None, masks=None):
    """Objective value at flat parameters ``vec``, computed in long double."""
    p = unflatten(model, vec)
    mx, my = masks if masks is not None else (None, None)
    nx = len(model.tower_x.weights)
    lx = _tower_ld(p, "x", nx, x, mx or [None] * nx)
    head = lambda lat: lat @ p["head.W"].astype(LD) + p["head.b"].astype(LD)  # noqa: E731
    if model.mode is Mode.TEXTURE:
        ny = len(model.tower_y.weights)
        ly = _tower_ld(p, "y", ny, y, my or [None] * ny)
        return _ce_ld(head(np.vstack([lx, ly])), np.concatenate([labels, y_labels]))
    ce = _ce_ld(head(lx), labels) if objective in ("ce", "joint") else LD(0)
    ml = LD(0)
    if objective in ("ml", "joint"):
        ml = np.abs(lx - model.prototypes.vectors[labels].astype(LD)).mean()
    return ce + LD(alpha) * ml


def model_grad_error(model, objective, alpha=0.5, dropout_seed=None, h=1e-5, **batch):
    """Max relative error of the model's analytic gradient against central differences.

    With ``dropout_seed`` set the model runs in training mode; the masks it
    drew are reused by the reference objective at every perturbed point.
    """
    from gucnet.numeric import Rng64
    rng = None if dropout_seed is None else Rng64(dropout_seed)
    x, labels = batch["x"], batch["labels"]
    y, y_labels = batch.get("y"), batch.get("y_labels")
    res = model.compute_gradients(x, labels, objective=objective, alpha=alpha, rng=rng, y=y, y_labels=y_labels)
    masks = None
    if dropout_seed is not None:
        # replay the same draws to recover the masks used above
        rng = Rng64(dropout_seed)
        _, cx = forward_latent(model.tower_x, x, rng)
        my = forward_latent(model.tower_y, y, rng)[1].masks if model.tower_y is not None else None
        masks = (cx.masks, my)
    analytic = flat_grads(model, res.grads)
    base = flat_params(model)
    return grad_check(lambda v: reference_objective(model, v, objective, alpha, x, labels, y, y_labels, masks),
                      base, analytic, h=h)


def kink_margin(model, x, labels):
    """Smallest distance of any ReLU input or latent-minus-prototype entry from zero."""
    tower = model.tower_x
    was = tower.training
    tower.training = False
    latent, cache = forward_latent(tower, x)
    tower.training = was
    margins = [np.min(np.abs(z)) for z in cache.pre]
    if model.prototypes is not None:
        margins.append(np.min(np.abs(latent - model.prototypes.vectors[labels])))
    return min(margins)
