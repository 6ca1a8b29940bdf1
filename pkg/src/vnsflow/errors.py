class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit code 2."""


class NumericalAbort(RuntimeError):
    """A run had to stop (NaN, CFL violation, lost mass); exit code 3."""

    def __init__(self, message: str, step: int | None = None, subsystem: str | None = None):
        self.step = step
        self.subsystem = subsystem
        prefix = []
        if subsystem:
            prefix.append(subsystem)
        if step is not None:
            prefix.append(f"step {step}")
        super().__init__(f"[{', '.join(prefix)}] {message}" if prefix else message)
