"""Single-stage text-to-song token modelling at desk scale."""

__version__ = "0.1.0"
