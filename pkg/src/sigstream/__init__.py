"""sigstream: streaming truncated path signatures plus a toy offline-RL harness.

The algebra/signature layer is pure numpy. The tokenizer turns trajectory
windows into typed token sequences, the maze/data layer provides a
point-mass maze with scripted collection, and the model layer trains a
small causal-attention network on the token sequences.
"""

from .algebra import (
    TruncatedTensor,
    add,
    flatten,
    level_norm,
    level_offsets,
    level_sizes,
    make_tensor,
    product,
    scale,
    tensor_exp,
    tensor_power,
    unflatten,
    unit,
    zero,
)
from .signature import (
    ChannelSpec,
    FitReport,
    IscRecord,
    SignatureState,
    as_path,
    increments,
    isc_sequence,
    reconstruct,
    signature_batch,
    strict_iterated_sum,
    universal_fit,
)

__version__ = "0.1.0"


def __getattr__(name):
    # Heavier layers (torch import, env, tokenizer) load on first use so
    # `import sigstream` stays light for pure signature work.
    import importlib

    lazy = {
        "tokens", "maze", "data", "model", "rollout", "profiles",
        "verify", "bench", "cli",
    }
    if name in lazy:
        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
