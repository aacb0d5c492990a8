"""Shared fixtures: the offline digits corpus and toy architectures."""

import numpy as np
import pytest
import torch

from ganprivacy.data import build_attack_pool, load_dataset, make_split
from ganprivacy.models import ArchSpec

torch.set_num_threads(1)


@pytest.fixture(scope="session")
def digits():
    return load_dataset("digits")


@pytest.fixture(scope="session")
def digits_split(digits):
    return make_split(digits, 0.10, seed=7)


@pytest.fixture(scope="session")
def digits_pool(digits, digits_split):
    return build_attack_pool(digits, digits_split)


def toy_generator_spec(latent: int = 3, side: int = 2) -> ArchSpec:
    return ArchSpec(
        kind="generator",
        input_shape=(latent,),
        layers=(
            {"type": "dense", "units": 8},
            {"type": "activation", "name": "tanh"},
            {"type": "dense", "units": side * side},
            {"type": "activation", "name": "sigmoid"},
            {"type": "reshape", "shape": [side, side, 1]},
        ),
        preset_name="toy-generator",
    )


def toy_discriminator_spec(side: int = 2) -> ArchSpec:
    return ArchSpec(
        kind="discriminator",
        input_shape=(side, side, 1),
        layers=(
            {"type": "flatten"},
            {"type": "dense", "units": 6},
            {"type": "activation", "name": "tanh"},
            {"type": "dense", "units": 1},
            {"type": "activation", "name": "sigmoid"},
        ),
        preset_name="toy-discriminator",
    )


def toy_adversary_spec(side: int = 2) -> ArchSpec:
    return ArchSpec(
        kind="adversary",
        input_shape=(side, side, 1),
        layers=(
            {"type": "flatten"},
            {"type": "dense", "units": 6},
            {"type": "activation", "name": "tanh"},
            {"type": "dense", "units": 2 * side * side},
        ),
        preset_name="toy-adversary",
    )


def small_image_generator_spec(latent: int = 16) -> ArchSpec:
    """Dense generator over 28x28 images for fast overfit smoke runs."""

    return ArchSpec(
        kind="generator",
        input_shape=(latent,),
        layers=(
            {"type": "dense", "units": 64},
            {"type": "leaky_relu", "alpha": 0.2},
            {"type": "dense", "units": 28 * 28},
            {"type": "activation", "name": "sigmoid"},
            {"type": "reshape", "shape": [28, 28, 1]},
        ),
        preset_name="small-generator",
    )


def small_image_discriminator_spec() -> ArchSpec:
    return ArchSpec(
        kind="discriminator",
        input_shape=(28, 28, 1),
        layers=(
            {"type": "flatten"},
            {"type": "dense", "units": 64},
            {"type": "leaky_relu", "alpha": 0.2},
            {"type": "dense", "units": 1},
            {"type": "activation", "name": "sigmoid"},
        ),
        preset_name="small-discriminator",
    )


def small_image_adversary_spec() -> ArchSpec:
    return ArchSpec(
        kind="adversary",
        input_shape=(28, 28, 1),
        layers=(
            {"type": "flatten"},
            {"type": "dense", "units": 32},
            {"type": "leaky_relu", "alpha": 0.2},
            {"type": "dense", "units": 2 * 28 * 28},
        ),
        preset_name="small-adversary",
    )


def tiny_digits_dataset(digits, n: int = 64):
    """Small slice of the digits corpus for fast trainer tests."""

    from ganprivacy.data import subsample

    return subsample(digits, n)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(0)


# --- gradient-check helpers (shared by the trainer and acceptance tests) ---


def flat_grad(loss, params):
    grads = torch.autograd.grad(loss, params)
    return torch.cat([g.reshape(-1) for g in grads])


def finite_difference_grad(loss_fn, params, h_scale=1e-6):
    """Central finite differences of a scalar loss over flattened parameters."""

    from torch.nn.utils import parameters_to_vector, vector_to_parameters

    vec = parameters_to_vector(params).detach().clone()
    grad = torch.zeros_like(vec)
    for i in range(len(vec)):
        h = h_scale * max(1.0, float(vec[i].abs()))
        for sign in (1.0, -1.0):
            bumped = vec.clone()
            bumped[i] += sign * h
            vector_to_parameters(bumped, params)
            with torch.no_grad():
                val = float(loss_fn())
            grad[i] += sign * val / (2.0 * h)
    vector_to_parameters(vec, params)
    return grad


def gradient_relative_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    return float((analytic - numeric).norm() / numeric.norm())
