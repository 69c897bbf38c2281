"""Dataset ingestion into the depthplan frame formats."""

__version__ = "0.1.0"
