"""Matrix-weighted dyadic paraproducts: reducing operators, stopping times and norm estimates."""

__version__ = "0.1.0"

from .dyadic import DyadicInterval, StepFunction, haar_analysis, haar_synthesis, read_csv, write_csv
from .errors import ToolkitError
from .weights import MatrixWeight, WeightFamily, make_weight
from .reducing import ap_characteristic, reducing_table, reverse_holder_scan
from .operators import (
    SymbolCoefficients,
    bmo_norm,
    conjugated_paraproduct,
    dyadic_maximal,
    haar_multiplier,
    matrix_paraproduct,
    paraproduct,
    square_function,
)
from .stopping import StoppingConfig, build_stopping_tree, operator_T
from .estimators import boundedness_sweep, make_operator, operator_norm_estimate

__all__ = [
    "DyadicInterval", "StepFunction", "haar_analysis", "haar_synthesis", "read_csv", "write_csv",
    "ToolkitError", "MatrixWeight", "WeightFamily", "make_weight",
    "ap_characteristic", "reducing_table", "reverse_holder_scan",
    "SymbolCoefficients", "bmo_norm", "conjugated_paraproduct", "dyadic_maximal", "haar_multiplier",
    "matrix_paraproduct", "paraproduct", "square_function",
    "StoppingConfig", "build_stopping_tree", "operator_T",
    "boundedness_sweep", "make_operator", "operator_norm_estimate",
]
