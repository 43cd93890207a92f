from __future__ import annotations


class SpecFpError(Exception):
    """Base class for all errors raised by this package."""


class AudioFormatError(SpecFpError):
    """Audio file that cannot be decoded or has an unsupported format."""


class ConfigError(SpecFpError, ValueError):
    """Invalid parameter or inconsistent configuration."""


class FingerprintFileError(SpecFpError):
    """Fingerprint file that is corrupted or incompatible."""
