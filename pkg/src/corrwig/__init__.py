"""corrwig: a simulation laboratory for correlated Wigner-type matrix pairs."""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    CorrelationProfile,
    EntryLaw,
    MatrixPairSample,
    PairModelSpec,
    SymmetryClass,
    UnrealizableCorrelation,
    sample_example_optimal,
    sample_gaussian_invariant,
    sample_mixture_pair,
    sample_pair,
    validate_spec,
)
from .filtering import FilterSpec, BasisMatrix  # noqa: F401
from .mde import NonConvergence, SelfEnergy, SpectralSolution  # noqa: F401
from .flow import (  # noqa: F401
    DegenerateCovariance,
    FlowState,
    GaussianDivisibleDecomposition,
    StepSizeUnstable,
    build_entry_data,
    evolve_em,
    evolve_exact,
    gaussian_divisible_split,
)
from .spectra import InsufficientSamples, LocalWindow, SpectrumPair  # noqa: F401
