"""Seeded input-set construction.

Correctness is judged on several independently drawn input sets, so a
candidate cannot pass by memorizing one tensor.  Every draw is seeded from
the request: set ``i`` offsets the base seed by ``i * SET_STRIDE`` (a prime,
so per-argument seeds inside one set never collide with the next set's).
When the task carries an explicit ``input_spec`` the tensors are drawn from
it directly; otherwise the reference module's own ``get_inputs()`` is called
under a reseeded global RNG, which keeps tasks written in the common
benchmark convention working unmodified.
"""

from __future__ import annotations

from typing import Any, Mapping, Sequence

import torch

SET_STRIDE = 9973

_FLOAT_DTYPES = {
    "float16": torch.float16,
    "bfloat16": torch.bfloat16,
    "float32": torch.float32,
    "float64": torch.float64,
}
_INT_DTYPES = {
    "int32": torch.int32,
    "int64": torch.int64,
}


class InputSpecError(Exception):
    """The input_spec cannot be realized (unknown dtype, missing bounds)."""


def _draw(spec: Mapping[str, Any], arg_index: int, base_seed: int) -> torch.Tensor:
    shape = tuple(spec.get("shape", ()))
    dtype_name = spec.get("dtype", "float32")
    generator = torch.Generator().manual_seed(base_seed + int(spec.get("seed", arg_index)))
    if dtype_name in _FLOAT_DTYPES:
        return torch.randn(shape, generator=generator, dtype=torch.float32).to(
            _FLOAT_DTYPES[dtype_name]
        )
    if dtype_name in _INT_DTYPES:
        if "high" not in spec:
            raise InputSpecError(f"integer input_spec entry needs 'high': {dict(spec)!r}")
        low = int(spec.get("low", 0))
        high = int(spec["high"])
        return torch.randint(low, high, shape, generator=generator, dtype=_INT_DTYPES[dtype_name])
    if dtype_name == "bool":
        return torch.randint(0, 2, shape, generator=generator, dtype=torch.int64).bool()
    raise InputSpecError(f"unsupported dtype {dtype_name!r} in input_spec")


def build_input_set(
    input_spec: Sequence[Mapping[str, Any]],
    set_index: int,
    seed: int,
    reference_module=None,
) -> list[torch.Tensor]:
    """One input set, deterministic in ``(input_spec, set_index, seed)``."""

    base_seed = seed + set_index * SET_STRIDE
    if input_spec:
        return [_draw(spec, j, base_seed) for j, spec in enumerate(input_spec)]
    if reference_module is None or not hasattr(reference_module, "get_inputs"):
        raise InputSpecError("task has no input_spec and the reference defines no get_inputs()")
    torch.manual_seed(base_seed)
    inputs = reference_module.get_inputs()
    if not isinstance(inputs, (list, tuple)):
        inputs = [inputs]
    return list(inputs)


def build_input_sets(
    input_spec: Sequence[Mapping[str, Any]],
    num_sets: int,
    seed: int,
    reference_module=None,
) -> list[list[torch.Tensor]]:
    return [
        build_input_set(input_spec, i, seed, reference_module=reference_module)
        for i in range(num_sets)
    ]


def to_device(inputs: Sequence[Any], device: torch.device) -> list[Any]:
    return [x.to(device) if isinstance(x, torch.Tensor) else x for x in inputs]
