"""Kernel estimation for the partially functional linear model with randomized sketches."""
from kpflm.errors import DatasetFormatError, InvalidArgumentError, NumericalError
from kpflm.funcdata import FunctionalDataset, Grid, integrate_product, load_dataset, make_grid, save_dataset
from kpflm.kernel import BERNOULLI, CrossKernelMatrix, KernelFunction, basis_functions, build_kc
from kpflm.sketch import choose_sketch_dim, make_sketch, statistical_dimension
from kpflm.solver import FitConfig, FitResult, SlopePredictor, fit, fit_exact, predict

__version__ = "0.1.0"
