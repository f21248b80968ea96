"""Versioned model checkpoints: group -> named tensors plus the serialized topology."""

import pickle
from pathlib import Path
from typing import Any

import torch

from hfunet.errors import CheckpointError
from hfunet.logging_config import get_logger
from hfunet.models.topology import ParameterGroup, TopologyConfig
from hfunet.services.model_zoo import HFNet, ModelState

logger = get_logger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(
    path: str | Path, state: ModelState, metadata: dict[str, Any] | None = None
) -> Path:
    """Write a checkpoint file.

    Args:
        path: Target file, parent directories are created
        state: Model to store
        metadata: JSON-compatible extras (step, seed, run id)

    Returns:
        The written path
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    groups: dict[str, dict[str, torch.Tensor]] = {group.value: {} for group in ParameterGroup}
    for name, tensor in state.network.state_dict().items():
        groups[name.split(".", 1)[0]][name] = tensor.detach().cpu().clone()
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "topology": state.cfg.model_dump(mode="json"),
        "groups": groups,
        "checksums": {group.value: digest for group, digest in state.checksums().items()},
        "metadata": metadata or {},
    }
    torch.save(payload, target)
    logger.debug("Saved checkpoint", path=str(target), topology=state.cfg.label())
    return target


def load_checkpoint(
    path: str | Path, expected: TopologyConfig | None = None
) -> tuple[ModelState, dict[str, Any]]:
    """Read a checkpoint and rebuild its model.

    Args:
        path: Checkpoint file
        expected: Topology the caller requires; a different stored topology is rejected

    Returns:
        Model state and the stored metadata

    Raises:
        CheckpointError: If the file is unreadable, of another format version, disagrees
            with ``expected`` or fails its checksums
    """
    try:
        payload = torch.load(Path(path), map_location="cpu", weights_only=True)
    except (OSError, RuntimeError, EOFError, pickle.UnpicklingError) as e:
        msg = f"Cannot read checkpoint {path}: {e}"
        raise CheckpointError(msg) from e

    if not isinstance(payload, dict) or payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        msg = f"Checkpoint {path} has an unsupported format"
        raise CheckpointError(msg)

    try:
        cfg = TopologyConfig.model_validate(payload["topology"])
    except ValueError as e:
        msg = f"Checkpoint {path} stores an invalid topology: {e}"
        raise CheckpointError(msg) from e
    if expected is not None and cfg != expected:
        msg = (
            f"Checkpoint topology {cfg.model_dump(mode='json')} disagrees with the requested "
            f"topology {expected.model_dump(mode='json')}"
        )
        raise CheckpointError(msg)

    state_dict = {
        name: tensor for tensors in payload["groups"].values() for name, tensor in tensors.items()
    }
    network = HFNet(cfg)
    try:
        network.load_state_dict(state_dict, strict=True)
    except RuntimeError as e:
        msg = f"Checkpoint {path} parameters do not match its topology: {e}"
        raise CheckpointError(msg) from e

    state = ModelState(cfg, network)
    stored = payload.get("checksums", {})
    for group, digest in state.checksums().items():
        if stored.get(group.value) != digest:
            msg = f"Checkpoint {path} checksum mismatch in group '{group.value}'"
            raise CheckpointError(msg)
    return state, dict(payload.get("metadata", {}))
