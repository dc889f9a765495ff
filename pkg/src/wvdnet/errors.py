"""Error categories shared across the package.

ValueError stays the exception of choice for contract violations inside the
numeric code; these classes exist so the CLI can map failures onto distinct
exit codes.
"""


class ConfigError(Exception):
    """Bad configuration: unknown keys, unparsable values, bad flag combinations."""


class DataError(Exception):
    """Bad input data: undecodable audio, malformed manifests, missing files."""
