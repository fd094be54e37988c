# ─────────────────────────────────────────────────────────────────────────────
# Error hierarchy. Messages carry a bracketed component tag, e.g.
#   ArgumentError("[CoreSolve] lambda_reg must be > 0, got -1")
# The CLI maps ArgumentError to exit code 2 and everything else to 3.
# ─────────────────────────────────────────────────────────────────────────────


class CoraError(Exception):
    pass


class ArgumentError(CoraError, ValueError):
    pass


class CapacityError(ArgumentError):
    pass


class ConfigError(ArgumentError):
    def __init__(self, key: str, message: str):
        super().__init__(f"[Config] '{key}': {message}")
        self.key = key


class UnsupportedError(CoraError, NotImplementedError):
    pass


class TrainingAbort(CoraError, RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
