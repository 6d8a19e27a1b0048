"""Nonparametric ODE estimation by two-step gradient matching."""

__version__ = "0.1.0"

from .exceptions import (
    BlowUpError,
    ConfigurationError,
    DivergenceError,
    GradMatchError,
    NumericalError,
    ParseError,
    ValidationError,
)
from .kernel_learning import KernelLearnConfig, StructureLearningVectorField, alternate_fit, project_psd
from .kernels import GaussianKernel
from .operator_kernels import OperatorKernel, StructureMatrix, block_gram
from .parametric import ParametricODE, fit_parametric
from .pipeline import FitReport, GradientMatchingODE
from .simulate import FhnParams, CalciumParams, NoiseSpec, error_map, integrate_rk4, simulate
from .smoother import KernelSmoother, KernelSmootherCV
from .sparse import SparseConfig, SparseVectorField, fit_sparse
from .timeseries import TimeSeries, TimeSeriesBundle, read_csv, write_csv
from .vector_field import (
    MultiVectorFieldRidge,
    OdeModel,
    VectorFieldRidge,
    fit_multi,
    fit_ridge,
    load_model,
    save_model,
)

__all__ = [
    "BlowUpError",
    "CalciumParams",
    "ConfigurationError",
    "DivergenceError",
    "FhnParams",
    "FitReport",
    "GaussianKernel",
    "GradMatchError",
    "GradientMatchingODE",
    "KernelLearnConfig",
    "KernelSmoother",
    "KernelSmootherCV",
    "MultiVectorFieldRidge",
    "NoiseSpec",
    "NumericalError",
    "OdeModel",
    "OperatorKernel",
    "ParametricODE",
    "ParseError",
    "SparseConfig",
    "SparseVectorField",
    "StructureLearningVectorField",
    "StructureMatrix",
    "TimeSeries",
    "TimeSeriesBundle",
    "ValidationError",
    "VectorFieldRidge",
    "alternate_fit",
    "block_gram",
    "error_map",
    "fit_multi",
    "fit_parametric",
    "fit_ridge",
    "fit_sparse",
    "integrate_rk4",
    "load_model",
    "project_psd",
    "read_csv",
    "save_model",
    "simulate",
    "write_csv",
]
