"""Reference remote classifier service for the explanation engine's wire protocol."""

from .app import BridgeConfig, PatchSpec, create_app, load_bridge_config

__version__ = "0.1.0"
