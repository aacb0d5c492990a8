"""Architecture registry and forward-pass wrappers for all networks.

Layer lists use keras-style, channels-last descriptors so the registry reads
like the published architecture tables; tensors are channels-first
internally.  Every preset initializes conv/dense kernels from a zero-mean
normal with sigma 0.02 and zero biases (the one documented default used
everywhere), reproducibly from the build seed.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

KINDS = ("generator", "discriminator", "adversary", "classifier")

INIT_STD = 0.02
LOG_VAR_CLAMP = 10.0
VARIANCE_FLOOR = float(np.exp(-LOG_VAR_CLAMP))

_CKPT_MAGIC = b"GPCK"
_CKPT_VERSION = 1


class ShapeError(ValueError):
    """Raised when consecutive layers do not compose."""


def _conv_out(size: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-size // stride)  # ceil
    if padding == "valid":
        return (size - kernel) // stride + 1
    raise ShapeError(f"unknown padding {padding!r}")


def walk_shapes(input_shape, layers):
    """Propagate a channels-last shape through the layer list.

    Returns the list of intermediate shapes (ints for flat activations,
    (H, W, C) tuples for spatial ones), starting with the input shape.
    """

    shape = tuple(input_shape) if not isinstance(input_shape, int) else input_shape
    if isinstance(shape, tuple) and len(shape) == 1:
        shape = shape[0]
    trace = [shape]
    for i, layer in enumerate(layers):
        kind = layer["type"]
        spatial = isinstance(shape, tuple)
        if kind == "dense":
            if spatial:
                raise ShapeError(f"layer {i}: dense requires a flat input, got {shape}")
            shape = int(layer["units"])
        elif kind in ("conv", "conv_transpose"):
            if not spatial:
                raise ShapeError(f"layer {i}: {kind} requires a spatial input, got {shape}")
            h, w, _ = shape
            k = int(layer["kernel"])
            s = int(layer.get("stride", 1))
            pad = layer.get("padding", "same")
            if kind == "conv":
                h, w = _conv_out(h, k, s, pad), _conv_out(w, k, s, pad)
            else:
                if pad != "same":
                    raise ShapeError(f"layer {i}: conv_transpose supports 'same' padding only")
                h, w = h * s, w * s
            shape = (h, w, int(layer["filters"]))
        elif kind == "max_pool":
            if not spatial:
                raise ShapeError(f"layer {i}: max_pool requires a spatial input")
            h, w, c = shape
            size = int(layer["size"])
            shape = ((h - size) // size + 1, (w - size) // size + 1, c)
        elif kind == "flatten":
            if not spatial:
                raise ShapeError(f"layer {i}: flatten requires a spatial input")
            shape = int(np.prod(shape))
        elif kind == "reshape":
            target = tuple(int(v) for v in layer["shape"])
            if spatial or shape != int(np.prod(target)):
                raise ShapeError(f"layer {i}: cannot reshape {shape} into {target}")
            shape = target
        elif kind in ("batch_norm", "activation", "leaky_relu", "dropout"):
            pass
        else:
            raise ShapeError(f"layer {i}: unknown layer type {kind!r}")
        trace.append(shape)
    return trace


@dataclass(frozen=True)
class ArchSpec:
    """Declarative network architecture: kind, input shape, ordered layers."""

    kind: str
    input_shape: tuple
    layers: tuple
    preset_name: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "layers", tuple(dict(l) for l in self.layers))
        walk_shapes(self.input_shape, self.layers)  # raises ShapeError on mismatch

    @property
    def output_shape(self):
        return walk_shapes(self.input_shape, self.layers)[-1]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "preset_name": self.preset_name,
            "input_shape": list(self.input_shape),
            "layers": [dict(l) for l in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        return cls(
            kind=d["kind"],
            input_shape=tuple(d["input_shape"]),
            layers=tuple(d["layers"]),
            preset_name=d.get("preset_name"),
        )


class _ToSpatial(nn.Module):
    """Reshape a flat activation into channels-first (C, H, W)."""

    def __init__(self, hwc):
        super().__init__()
        self.hwc = hwc

    def forward(self, x):
        h, w, c = self.hwc
        return x.view(x.size(0), h, w, c).permute(0, 3, 1, 2).contiguous()


class _Activation(nn.Module):
    def __init__(self, name: str):
        super().__init__()
        self.name = name

    def forward(self, x):
        if self.name == "relu":
            return torch.relu(x)
        if self.name == "sigmoid":
            return torch.sigmoid(x)
        if self.name == "tanh":
            return torch.tanh(x)
        if self.name == "softmax":
            return torch.softmax(x, dim=1)
        raise ValueError(f"unknown activation {self.name!r}")


def _build_module(spec: ArchSpec) -> nn.Module:
    shapes = walk_shapes(spec.input_shape, spec.layers)
    mods: list[nn.Module] = []
    for layer, shape_in in zip(spec.layers, shapes[:-1]):
        kind = layer["type"]
        if kind == "dense":
            mods.append(nn.Linear(int(shape_in), int(layer["units"])))
        elif kind == "conv":
            k = int(layer["kernel"])
            s = int(layer.get("stride", 1))
            pad = (k - 1) // 2 if layer.get("padding", "same") == "same" else 0
            mods.append(nn.Conv2d(shape_in[2], int(layer["filters"]), k, s, pad))
        elif kind == "conv_transpose":
            k = int(layer["kernel"])
            s = int(layer.get("stride", 1))
            pad = (k - s + 1) // 2
            out_pad = s - k + 2 * pad
            mods.append(nn.ConvTranspose2d(shape_in[2], int(layer["filters"]), k, s, pad, out_pad))
        elif kind == "max_pool":
            mods.append(nn.MaxPool2d(int(layer["size"])))
        elif kind == "batch_norm":
            kwargs = {}
            if "momentum" in layer:
                kwargs["momentum"] = float(layer["momentum"])
            if "epsilon" in layer:
                kwargs["eps"] = float(layer["epsilon"])
            if isinstance(shape_in, tuple):
                mods.append(nn.BatchNorm2d(shape_in[2], **kwargs))
            else:
                mods.append(nn.BatchNorm1d(int(shape_in), **kwargs))
        elif kind == "leaky_relu":
            mods.append(nn.LeakyReLU(float(layer.get("alpha", 0.2))))
        elif kind == "activation":
            mods.append(_Activation(layer["name"]))
        elif kind == "dropout":
            mods.append(nn.Dropout(float(layer["rate"])))
        elif kind == "flatten":
            mods.append(nn.Flatten())
        elif kind == "reshape":
            mods.append(_ToSpatial(tuple(int(v) for v in layer["shape"])))
        else:  # pragma: no cover - guarded by walk_shapes
            raise ShapeError(f"unknown layer type {kind!r}")
    if isinstance(shapes[-1], tuple):
        seen_reshape = any(l["type"] == "reshape" for l in spec.layers)
        if not seen_reshape and not any(l["type"] in ("conv", "conv_transpose") for l in spec.layers):
            raise ShapeError("spatial output requires a reshape or conv layer")
    return nn.Sequential(*mods)


def _init_parameters(module: nn.Module, seed: int, kind: str) -> None:
    # GAN networks use the published zero-mean normal (sigma 0.02); the
    # classifier kind uses Glorot uniform, without which softmax training
    # stalls on a long plateau.
    gen = torch.Generator().manual_seed(seed)
    for name, p in module.named_parameters():
        with torch.no_grad():
            if p.ndim >= 2:
                if kind == "classifier":
                    fan_in, fan_out = nn.init._calculate_fan_in_and_fan_out(p)
                    bound = math.sqrt(6.0 / (fan_in + fan_out))
                    p.uniform_(-bound, bound, generator=gen)
                else:
                    p.normal_(0.0, INIT_STD, generator=gen)
            elif name.endswith("weight"):  # batch-norm scale
                p.fill_(1.0)
            else:
                p.zero_()


@dataclass
class Network:
    """A built network: spec, torch module, and the seed it was built from."""

    spec: ArchSpec
    module: nn.Module
    init_seed: int
    flat_input: bool = field(init=False)

    def __post_init__(self):
        self.flat_input = len(self.spec.input_shape) == 1

    @property
    def kind(self) -> str:
        return self.spec.kind

    @property
    def input_shape(self):
        return self.spec.input_shape

    @property
    def output_shape(self):
        return self.spec.output_shape

    @property
    def latent_dim(self) -> int:
        if self.kind != "generator":
            raise ValueError("latent_dim is defined for generators only")
        return int(self.spec.input_shape[0])

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.module.parameters())

    @property
    def pixel_range(self) -> tuple[float, float]:
        """Output range of a generator, from its final activation."""

        last = self.spec.layers[-1]
        name = last.get("activation") or last.get("name")
        if name == "tanh":
            return (-1.0, 1.0)
        return (0.0, 1.0)

    def forward(self, x: torch.Tensor, train_mode: bool = False) -> torch.Tensor:
        self.module.train(train_mode)
        return self.module(x)

    def _to_tensor(self, arr: np.ndarray) -> torch.Tensor:
        t = torch.as_tensor(np.asarray(arr), dtype=torch.float32)
        if not self.flat_input and t.ndim == 4:
            t = t.permute(0, 3, 1, 2).contiguous()
        return t

    def predict(self, inputs: np.ndarray, batch_size: int = 512) -> np.ndarray:
        """Numpy-in, numpy-out forward pass in evaluation mode.

        Discriminators return a 1-D score vector; classifiers an (N, classes)
        probability matrix; generators an (N, H, W, C) image stack.
        """

        self.module.eval()
        outs = []
        with torch.no_grad():
            x = self._to_tensor(inputs)
            for i in range(0, len(x), batch_size):
                outs.append(self.module(x[i : i + batch_size]))
        out = torch.cat(outs) if outs else torch.empty(0)
        if self.kind == "discriminator":
            return out.squeeze(1).double().numpy()
        if self.kind == "generator" and out.ndim == 4:
            return out.permute(0, 2, 3, 1).double().numpy()
        return out.double().numpy()

    def generate(self, n: int, seed: int, batch_size: int = 512) -> np.ndarray:
        """Draw n samples from a generator, reproducibly from the seed."""

        z = sample_latent(n, self.latent_dim, seed)
        return self.predict(z.numpy(), batch_size=batch_size)


def build_network(spec: ArchSpec, init_seed: int) -> Network:
    """Build and reproducibly initialize a network from its spec."""

    module = _build_module(spec)
    _init_parameters(module, init_seed, spec.kind)
    return Network(spec=spec, module=module, init_seed=init_seed)


def sample_latent(batch: int, dim: int, seed: int) -> torch.Tensor:
    """I.i.d. standard-normal latent batch, reproducible from the seed."""

    if batch < 1 or dim < 1:
        raise ValueError("batch and dim must be positive")
    gen = torch.Generator().manual_seed(seed)
    return torch.randn(batch, dim, generator=gen)


@dataclass
class AdversaryOutput:
    """Per-pixel Gaussian parameters emitted by the leakage adversary."""

    mu: torch.Tensor
    log_var: torch.Tensor

    def __post_init__(self):
        if self.mu.shape != self.log_var.shape:
            raise ValueError("mu and log_var must have identical shapes")


def split_adversary_output(raw: torch.Tensor) -> AdversaryOutput:
    """Split the adversary's flat 2d-vector head into clamped (mu, log_var)."""

    if raw.shape[-1] % 2:
        raise ValueError("adversary head must emit an even number of units")
    d = raw.shape[-1] // 2
    return AdversaryOutput(
        mu=raw[..., :d],
        log_var=raw[..., d:].clamp(-LOG_VAR_CLAMP, LOG_VAR_CLAMP),
    )


class _ReplayModule(nn.Module):
    """Maps each latent row to a fixed bank image via the first coordinate.

    The index is floor(Phi(z_0) * bank_size), so standard-normal latents hit
    the bank uniformly and the mapping is a pure function of the latent.
    """

    def __init__(self, bank: torch.Tensor):
        super().__init__()
        self.register_buffer("bank", bank)

    def forward(self, z):
        u = 0.5 * (1.0 + torch.erf(z[:, 0] / np.sqrt(2.0)))
        idx = (u * len(self.bank)).long().clamp(0, len(self.bank) - 1)
        return self.bank[idx]


def replay_generator(bank_images: np.ndarray, latent_dim: int = 8, name: str = "replay") -> Network:
    """Generator that replays images from a fixed bank (tests and baselines)."""

    bank = np.asarray(bank_images, dtype=np.float32)
    if bank.ndim != 4:
        raise ValueError("bank images must be (N, H, W, C)")
    h, w, c = bank.shape[1:]
    spec = ArchSpec(
        kind="generator",
        input_shape=(latent_dim,),
        layers=(
            {"type": "dense", "units": h * w * c},
            {"type": "reshape", "shape": [h, w, c]},
        ),
        preset_name=name,
    )
    module = _ReplayModule(torch.as_tensor(bank).permute(0, 3, 1, 2).contiguous())
    return Network(spec=spec, module=module, init_seed=0)


# --------------------------------------------------------------------------
# Checkpoint format: magic, version, JSON header (spec + init_seed), then one
# record per tensor -- name, dtype, shape, little-endian payload.
# --------------------------------------------------------------------------


def save_checkpoint(network: Network, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps(
        {"spec": network.spec.to_dict(), "init_seed": network.init_seed},
        sort_keys=True,
    ).encode()
    state = network.module.state_dict()
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<I", _CKPT_VERSION))
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        f.write(struct.pack("<I", len(state)))
        for name, tensor in state.items():
            arr = tensor.detach().cpu().numpy()
            nb = name.encode()
            db = str(arr.dtype).encode()
            f.write(struct.pack("<H", len(nb)) + nb)
            f.write(struct.pack("<H", len(db)) + db)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
            f.write(arr.astype(arr.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path: Path) -> Network:
    path = Path(path)
    with open(path, "rb") as f:
        if f.read(4) != _CKPT_MAGIC:
            raise ValueError(f"{path}: not a ganprivacy checkpoint")
        (version,) = struct.unpack("<I", f.read(4))
        if version != _CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen))
        (n_tensors,) = struct.unpack("<I", f.read(4))
        state = {}
        for _ in range(n_tensors):
            (nlen,) = struct.unpack("<H", f.read(2))
            name = f.read(nlen).decode()
            (dlen,) = struct.unpack("<H", f.read(2))
            dtype = np.dtype(f.read(dlen).decode())
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim)) if ndim else ()
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(f.read(count * dtype.itemsize), dtype=dtype.newbyteorder("<"))
            state[name] = torch.as_tensor(arr.reshape(shape).copy())
    network = build_network(ArchSpec.from_dict(header["spec"]), header["init_seed"])
    network.module.load_state_dict(state)
    return network


# --------------------------------------------------------------------------
# Presets.  The appendix-* entries reproduce the published 28x28 grayscale
# architectures verbatim; the desk-* entries are CPU-sized stand-ins used by
# the shipped desk-scale configs.
# --------------------------------------------------------------------------


def _lrelu():
    return {"type": "leaky_relu", "alpha": 0.2}


def _published_generator(preset_name: str) -> ArchSpec:
    return ArchSpec(
        kind="generator",
        input_shape=(100,),
        layers=(
            {"type": "dense", "units": 7 * 7 * 512},
            _lrelu(),
            {"type": "reshape", "shape": [7, 7, 512]},
            {"type": "conv_transpose", "filters": 128, "kernel": 5, "stride": 2},
            _lrelu(),
            {"type": "conv_transpose", "filters": 128, "kernel": 5, "stride": 2},
            _lrelu(),
            {"type": "conv", "filters": 1, "kernel": 5},
            {"type": "activation", "name": "sigmoid"},
        ),
        preset_name=preset_name,
    )


def _disc(layers, preset_name: str) -> ArchSpec:
    tail = (
        {"type": "flatten"},
        {"type": "dense", "units": 1},
        {"type": "activation", "name": "sigmoid"},
    )
    return ArchSpec(
        kind="discriminator",
        input_shape=(28, 28, 1),
        layers=tuple(layers) + tail,
        preset_name=preset_name,
    )


def _preset_table() -> dict:
    conv = lambda f, k=5, s=2: {"type": "conv", "filters": f, "kernel": k, "stride": s}
    bn = {"type": "batch_norm"}

    table = {
        "appendix1-generator": lambda: _published_generator("appendix1-generator"),
        "appendix2-generator": lambda: _published_generator("appendix2-generator"),
        "appendix3-generator": lambda: _published_generator("appendix3-generator"),
        "appendix1-discriminator-a": lambda: _disc(
            [conv(32), _lrelu(), conv(64), _lrelu(), conv(128), _lrelu()],
            "appendix1-discriminator-a",
        ),
        "appendix1-discriminator-b": lambda: _disc(
            [conv(64), _lrelu(), conv(128), _lrelu()], "appendix1-discriminator-b"
        ),
        "appendix1-discriminator-c": lambda: _disc(
            [conv(64), _lrelu(), conv(64), _lrelu()], "appendix1-discriminator-c"
        ),
        "appendix2-discriminator": lambda: _disc(
            [conv(32), dict(bn), _lrelu(), conv(32), dict(bn), _lrelu()],
            "appendix2-discriminator",
        ),
        "appendix3-discriminator-mnist": lambda: _disc(
            [conv(64), _lrelu(), conv(64), _lrelu()], "appendix3-discriminator-mnist"
        ),
        "appendix3-discriminator-fashion": lambda: _disc(
            [conv(64), _lrelu(), conv(128), _lrelu()], "appendix3-discriminator-fashion"
        ),
        "appendix3-adversary": lambda: ArchSpec(
            kind="adversary",
            input_shape=(28, 28, 1),
            layers=(
                {"type": "conv", "filters": 64, "kernel": 3, "stride": 2},
                _lrelu(),
                {"type": "conv", "filters": 64, "kernel": 3, "stride": 2},
                _lrelu(),
                {"type": "flatten"},
                {"type": "dense", "units": 28 * 28 * 2},
            ),
            preset_name="appendix3-adversary",
        ),
        "appendix4-classifier": lambda: ArchSpec(
            kind="classifier",
            input_shape=(28, 28, 1),
            layers=(
                {"type": "conv", "filters": 32, "kernel": 3, "padding": "valid"},
                {"type": "activation", "name": "relu"},
                {"type": "max_pool", "size": 2},
                {"type": "conv", "filters": 64, "kernel": 3, "padding": "valid"},
                {"type": "activation", "name": "relu"},
                {"type": "conv", "filters": 64, "kernel": 3, "padding": "valid"},
                {"type": "activation", "name": "relu"},
                {"type": "max_pool", "size": 2},
                {"type": "flatten"},
                {"type": "dense", "units": 100},
                {"type": "activation", "name": "relu"},
                {"type": "dense", "units": 10},
                {"type": "activation", "name": "softmax"},
            ),
            preset_name="appendix4-classifier",
        ),
        "desk-generator": lambda: ArchSpec(
            kind="generator",
            input_shape=(64,),
            layers=(
                {"type": "dense", "units": 7 * 7 * 64},
                _lrelu(),
                {"type": "reshape", "shape": [7, 7, 64]},
                {"type": "conv_transpose", "filters": 32, "kernel": 5, "stride": 2},
                _lrelu(),
                {"type": "conv_transpose", "filters": 32, "kernel": 5, "stride": 2},
                _lrelu(),
                {"type": "conv", "filters": 1, "kernel": 5},
                {"type": "activation", "name": "sigmoid"},
            ),
            preset_name="desk-generator",
        ),
        "desk-adversary": lambda: ArchSpec(
            kind="adversary",
            input_shape=(28, 28, 1),
            layers=(
                {"type": "conv", "filters": 32, "kernel": 3, "stride": 2},
                _lrelu(),
                {"type": "conv", "filters": 32, "kernel": 3, "stride": 2},
                _lrelu(),
                {"type": "flatten"},
                {"type": "dense", "units": 28 * 28 * 2},
            ),
            preset_name="desk-adversary",
        ),
        "desk-classifier": lambda: ArchSpec(
            kind="classifier",
            input_shape=(28, 28, 1),
            layers=(
                {"type": "conv", "filters": 16, "kernel": 3, "padding": "valid"},
                {"type": "activation", "name": "relu"},
                {"type": "max_pool", "size": 2},
                {"type": "conv", "filters": 32, "kernel": 3, "padding": "valid"},
                {"type": "activation", "name": "relu"},
                {"type": "max_pool", "size": 2},
                {"type": "flatten"},
                {"type": "dense", "units": 64},
                {"type": "activation", "name": "relu"},
                {"type": "dense", "units": 10},
                {"type": "activation", "name": "softmax"},
            ),
            preset_name="desk-classifier",
        ),
    }
    return table


_PRESETS = _preset_table()


def preset_names() -> list[str]:
    return sorted(_PRESETS)


def get_preset(name: str) -> ArchSpec:
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; known presets: {preset_names()}") from None
