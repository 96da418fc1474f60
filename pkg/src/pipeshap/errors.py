"""Exception types shared across the package."""


class PipeshapError(Exception):
    """Base class for all validation and input errors raised by pipeshap."""


class ProvenanceError(PipeshapError):
    """A provenance polynomial, assignment or dataset violates an invariant."""


class PipelineError(PipeshapError):
    """A pipeline specification cannot be applied to its inputs."""


class AddError(PipeshapError):
    """A decision diagram operation received incompatible operands."""


class EmptyCandidateSet(PipeshapError):
    """The candidate dataset under an assignment has no tuples."""


class ConfigError(PipeshapError):
    """An experiment configuration or input file is invalid."""
