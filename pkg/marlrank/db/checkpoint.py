"""Parameter files: one .npz archive per checkpoint.

The archive holds a JSON header (format version, F, k, activation, action
encoding, layer shapes) and one little-endian float64 array per weight and
bias, so a save/load round trip is bit-exact.
"""
import io
import json
import logging
import zipfile
from pathlib import Path

import numpy as np

from marlrank.errors import CheckpointError, ShapeError
from marlrank.models.params import LayerParams, ModelParams
from marlrank.schemas.schemas import ActionEncoding, Activation

logger = logging.getLogger(__name__)

HEADER_KEY = "header"


def save_params(params: ModelParams) -> bytes:
    layers = params.named_layers()
    header = {
        "version": ModelParams.FORMAT_VERSION,
        "feature_dim": params.feature_dim,
        "k": params.k,
        "activation": params.policy.activation.value,
        "action_encoding": params.action_encoding.value,
        "shapes": {name: list(layer.weights.shape) for name, layer in layers.items()},
    }
    arrays = {HEADER_KEY: np.frombuffer(json.dumps(header).encode("utf-8"), dtype=np.uint8)}
    for name, layer in layers.items():
        arrays[f"{name}.weights"] = layer.weights.astype("<f8")
        arrays[f"{name}.bias"] = layer.bias.astype("<f8")
    buffer = io.BytesIO()
    np.savez(buffer, **arrays)
    return buffer.getvalue()


def _read_header(archive) -> dict:
    try:
        header = json.loads(archive[HEADER_KEY].tobytes().decode("utf-8"))
    except (KeyError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"checkpoint header is missing or unreadable: {e}") from e
    version = header.get("version")
    if version != ModelParams.FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version!r}, expected {ModelParams.FORMAT_VERSION}"
        )
    return header


def load_params(blob: bytes) -> ModelParams:
    try:
        with np.load(io.BytesIO(blob), allow_pickle=False) as archive:
            header = _read_header(archive)
            shapes = header["shapes"]
            layers = {}
            for name, shape in shapes.items():
                weights = archive[f"{name}.weights"]
                bias = archive[f"{name}.bias"]
                if list(weights.shape) != list(shape) or bias.shape != (shape[0],):
                    raise CheckpointError(
                        f"layer {name!r}: stored arrays {weights.shape}/{bias.shape} "
                        f"disagree with header shape {shape}"
                    )
                layers[name] = LayerParams(weights.astype(np.float64), bias.astype(np.float64))
            return ModelParams.build(
                layers["similarity"],
                [layers[name] for name in ModelParams.POLICY_NAMES],
                feature_dim=int(header["feature_dim"]),
                k=int(header["k"]),
                activation=Activation(header["activation"]),
                action_encoding=ActionEncoding(header["action_encoding"]),
            )
    except CheckpointError:
        raise
    except ShapeError as e:
        raise CheckpointError(f"checkpoint layers do not form a model: {e.detail}") from e
    except (zipfile.BadZipFile, ValueError, EOFError, KeyError, OSError) as e:
        raise CheckpointError(f"corrupt checkpoint: {e}") from e


def save_checkpoint(params: ModelParams, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(save_params(params))
    logger.info("Saved checkpoint %s", path)
    return path


def load_checkpoint(path: Path) -> ModelParams:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    params = load_params(path.read_bytes())
    logger.info("Loaded checkpoint %s (%r)", path, params)
    return params
