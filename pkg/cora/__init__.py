# cora/__init__.py  –  command registry
import importlib

__version__ = "0.1.0"

# Submodules that expose commands
SUBMODULES = [
    "core.game_file",
    "envs.registry",
    "trainer.train",
    "trainer.bench",
    "theory.checks",
]

COMMAND_CLASS_MAPPINGS = {}
COMMAND_DISPLAY_NAME_MAPPINGS = {}

for submodule in SUBMODULES:
    module = importlib.import_module(f".{submodule}", package=__package__)
    COMMAND_CLASS_MAPPINGS.update(getattr(module, "COMMAND_CLASS_MAPPINGS", {}))
    COMMAND_DISPLAY_NAME_MAPPINGS.update(getattr(module, "COMMAND_DISPLAY_NAME_MAPPINGS", {}))

__all__ = ["COMMAND_CLASS_MAPPINGS", "COMMAND_DISPLAY_NAME_MAPPINGS", "__version__"]
