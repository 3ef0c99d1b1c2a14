"""Central finite-difference gradient checking.

The oracle re-evaluates the forward function in float64 at theta +/- h and
never touches the backward rules it is checking. Elements whose perturbation
flips the sign of any ReLU input are skipped: a central difference across a
kink estimates neither one-sided slope.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from .autograd import Tensor, no_grad, record_relu_signs


@dataclass
class GradCheckReport:
    max_rel_err: float = 0.0
    checked: int = 0
    skipped_kinks: int = 0
    worst: tuple = ()  # (param name, flat element index)
    per_param: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.checked > 0


def _relu_signs_match(a: list, b: list) -> bool:
    if len(a) != len(b):
        return False
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def numerical_gradient(
    fn: Callable[[], Tensor],
    param: Tensor,
    indices: Sequence[int],
    h: float = 1e-3,
) -> tuple[np.ndarray, np.ndarray]:
    """Central differences of fn() w.r.t. flat elements of param.

    Returns (estimates, kink_mask); kink_mask flags elements where a ReLU
    input changed sign between the two evaluations.
    """
    flat = param.data.reshape(-1)
    grads = np.zeros(len(indices))
    kinks = np.zeros(len(indices), dtype=bool)
    for j, i in enumerate(indices):
        orig = flat[i]
        signs_plus: list = []
        signs_minus: list = []
        flat[i] = orig + h
        with no_grad(), record_relu_signs(signs_plus):
            f_plus = fn().item()
        flat[i] = orig - h
        with no_grad(), record_relu_signs(signs_minus):
            f_minus = fn().item()
        flat[i] = orig
        grads[j] = (f_plus - f_minus) / (2.0 * h)
        kinks[j] = not _relu_signs_match(signs_plus, signs_minus)
    return grads, kinks


def check_gradients(
    fn: Callable[[], Tensor],
    params: Union[Sequence[Tensor], Mapping[str, Tensor]],
    h: float = 1e-3,
    rtol: float = 1e-4,
    denom_floor: float = 1e-6,
    sample_per_param: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> GradCheckReport:
    """Compare analytic gradients of fn() against central differences.

    fn must rebuild the graph on every call. params may be a sequence or a
    name->tensor mapping (names show up in failure messages). Set
    sample_per_param to check a random subset of each parameter tensor
    instead of a full sweep. Raises AssertionError when any checked element
    exceeds rtol.
    """
    if isinstance(params, Mapping):
        names = list(params.keys())
        params = list(params.values())
    else:
        params = list(params)
        names = [f"param {i}" for i in range(len(params))]
    for p in params:
        p.zero_grad()
    loss = fn()
    loss.backward()
    analytic = [p.grad.copy() if p.grad is not None else None for p in params]

    report = GradCheckReport()
    for pi, p in enumerate(params):
        if analytic[pi] is None:
            raise AssertionError(f"{names[pi]} received no gradient")
        n = p.data.size
        if sample_per_param is not None and sample_per_param < n:
            if rng is None:
                rng = np.random.default_rng(0)
            indices = np.sort(rng.choice(n, size=sample_per_param, replace=False))
        else:
            indices = np.arange(n)
        fd, kinks = numerical_gradient(fn, p, indices, h=h)
        ana = analytic[pi].reshape(-1)[indices]
        valid = ~kinks
        report.skipped_kinks += int(kinks.sum())
        if not valid.any():
            report.per_param.append(0.0)
            continue
        denom = np.maximum(np.maximum(np.abs(ana[valid]), np.abs(fd[valid])), denom_floor)
        rel = np.abs(ana[valid] - fd[valid]) / denom
        report.checked += int(valid.sum())
        report.per_param.append(float(rel.max()))
        if rel.max() > report.max_rel_err:
            report.max_rel_err = float(rel.max())
            worst_local = int(np.argmax(rel))
            report.worst = (names[pi], int(indices[valid][worst_local]))
    if report.max_rel_err > rtol:
        raise AssertionError(
            f"gradient mismatch: rel err {report.max_rel_err:.3e} > {rtol:.1e} "
            f"at {report.worst[0]}, element {report.worst[1]}"
        )
    if report.checked == 0:
        raise AssertionError("no gradient elements could be checked (all kinks)")
    return report
