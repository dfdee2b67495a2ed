"""Exception types for the model server."""


class ModelLoadError(Exception):
    """A model id is known but its weights cannot be materialized."""
