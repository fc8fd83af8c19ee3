"""KEM providers and the suite registry.

The default registry holds six suites: the classical ``dh-baseline``, the
real ``toy-lwe`` lattice KEM, and four mock profiles loaded from a flat
config file (``mock-kyber``, ``mock-bike``, ``mock-hqc``, ``mock-frodo``).
"""
from __future__ import annotations

import os
from importlib import resources
from typing import Dict, Iterator, Optional, Tuple, Union

from ..flatconf import ConfigError, load_flat, parse_flat
from .base import (
    InvalidPublicValue,
    KemError,
    KemParams,
    KemProvider,
    KeyPair,
    MalformedCiphertext,
    MalformedPublicKey,
    UnknownSuite,
    hash_stream,
)
from .dh import DhGroup, DhKem, dh_keygen, dh_public, dh_shared, get_group
from .mock import MockKem
from .toylwe import ToyLweKem, ToyLweParams, expand_matrix

__all__ = [
    "InvalidPublicValue", "KemError", "KemParams", "KemProvider", "KeyPair",
    "MalformedCiphertext", "MalformedPublicKey", "UnknownSuite", "hash_stream",
    "DhGroup", "DhKem", "dh_keygen", "dh_public", "dh_shared", "get_group",
    "MockKem", "ToyLweKem", "ToyLweParams", "expand_matrix",
    "KemRegistry", "load_mock_profiles", "default_registry",
    "keygen", "encapsulate", "decapsulate",
]

MOCK_FIELDS = ("public_key_len", "ciphertext_len", "shared_secret_len", "encaps_cost_us")


def parse_mock_profiles(values: Dict[str, str], source: str = "mock config") -> Dict[str, KemParams]:
    grouped: Dict[str, Dict[str, str]] = {}
    for key, value in values.items():
        suite, _, field = key.rpartition(".")
        if not suite or field not in MOCK_FIELDS:
            raise ConfigError(f"{source}: unknown key {key!r}")
        grouped.setdefault(suite, {})[field] = value
    profiles = {}
    for suite, fields in grouped.items():
        for field in MOCK_FIELDS:
            if field not in fields:
                raise ConfigError(f"{source}: missing key {suite}.{field}")
        try:
            profiles[suite] = KemParams(
                public_key_len=int(fields["public_key_len"]),
                ciphertext_len=int(fields["ciphertext_len"]),
                shared_secret_len=int(fields["shared_secret_len"]),
                encaps_cost_us=float(fields["encaps_cost_us"]),
            )
        except ValueError as exc:
            raise ConfigError(f"{source}: suite {suite}: {exc}") from exc
    return profiles


def load_mock_profiles(path: Union[str, os.PathLike, None] = None) -> Dict[str, KemParams]:
    if path is None:
        text = resources.files("pqofh.data").joinpath("mock_kems.conf").read_text("utf-8")
        return parse_mock_profiles(parse_flat(text, "mock_kems.conf"), "mock_kems.conf")
    return parse_mock_profiles(load_flat(path), str(path))


class KemRegistry:
    def __init__(self, providers=()):
        self._providers: Dict[str, KemProvider] = {}
        for provider in providers:
            self.register(provider)

    def register(self, provider: KemProvider) -> None:
        if provider.name in self._providers:
            raise ValueError(f"suite {provider.name!r} already registered")
        self._providers[provider.name] = provider

    def get(self, name: str) -> KemProvider:
        try:
            return self._providers[name]
        except KeyError:
            raise UnknownSuite(name) from None

    def __contains__(self, name) -> bool:
        return name in self._providers

    def __iter__(self) -> Iterator[KemProvider]:
        return iter(self._providers.values())

    def __len__(self) -> int:
        return len(self._providers)

    def names(self):
        return list(self._providers)


def default_registry(mock_config: Union[str, os.PathLike, None] = None) -> KemRegistry:
    lwe = ToyLweParams()
    if lwe.message_bits < 128:
        raise ValueError("toy-lwe must encapsulate at least 128 bits")
    registry = KemRegistry([DhKem(), ToyLweKem(lwe)])
    for name, params in load_mock_profiles(mock_config).items():
        registry.register(MockKem(name, params))
    return registry


_default: Optional[KemRegistry] = None


def _registry(registry: Optional[KemRegistry]) -> KemRegistry:
    global _default
    if registry is not None:
        return registry
    if _default is None:
        _default = default_registry()
    return _default


def keygen(suite: str, seed: bytes, registry: Optional[KemRegistry] = None) -> KeyPair:
    return _registry(registry).get(suite).keygen(seed)


def encapsulate(suite: str, public_key: bytes, seed: bytes,
                registry: Optional[KemRegistry] = None) -> Tuple[bytes, bytes]:
    return _registry(registry).get(suite).encapsulate(public_key, seed)


def decapsulate(suite: str, secret_key: bytes, ciphertext: bytes,
                registry: Optional[KemRegistry] = None) -> bytes:
    return _registry(registry).get(suite).decapsulate(secret_key, ciphertext)
