"""Recurrent sequence learning with variational adaptive noise and dropout."""

from vand._core import (  # noqa: F401
    VandError,
    __version__,
    analyze,
    evaluate,
    gen_data,
    generate,
    load_dataset,
    rollout,
    sweep,
    train,
)
