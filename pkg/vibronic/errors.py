class VibronicError(Exception): ...


class ModelError(VibronicError): ...


class ArgumentError(VibronicError, ValueError): ...


class ConstraintError(VibronicError): ...


class NumericalError(VibronicError): ...


class ConvergenceError(VibronicError): ...


class SpectrumError(VibronicError): ...


class DesignError(VibronicError):
    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
