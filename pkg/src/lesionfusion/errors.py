"""Exception types shared across the package."""


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


class CheckpointError(Exception):
    """Unreadable, incompatible, or topology-mismatched checkpoint."""


class IngestError(Exception):
    """Fatal dataset ingestion problem (missing metadata, no samples)."""
