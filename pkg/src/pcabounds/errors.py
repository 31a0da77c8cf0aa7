"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A profile, law, or experiment parameter is outside its admissible range."""


class RangeError(ValueError):
    """An index argument (d, d', ...) is outside the valid range for the model."""


class DegenerateGapError(ValueError):
    """The spectral gap entering a resolvent weight is zero or below resolution."""


class UnsupportedProfileError(TypeError):
    """The operation is defined only for parametric eigenvalue profiles."""


class NumericError(RuntimeError):
    """A numerical routine failed; `diagnostics` carries context for debugging."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigError(ValueError):
    """Experiment configuration is invalid; `problems` lists every offending key."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
