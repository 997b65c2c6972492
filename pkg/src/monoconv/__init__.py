"""monoconv: exact monotone convolution of atomic measures, the Markov
chain it induces, and law-of-large-numbers stability experiments."""

__version__ = "0.1.0"

from .measures import (
    AtomicMeasure,
    ConfigError,
    MeasureSpec,
    SpecParseError,
    almost_equal,
    classical_convolve,
    dilate,
    materialize,
    mean,
    merge_atoms,
    parse_measure_spec,
    point_mass,
    random_atomic,
    sample,
    sample_many,
    second_moment,
    variance,
)
from .transforms import (
    HalfPlaneError,
    NevanlinnaForm,
    PoleError,
    RootFindError,
    cauchy_transform,
    compose_f_chain,
    f_derivative,
    f_transform,
    nevanlinna_form,
)
from .monotone import (
    AtomBudgetError,
    ConsistencyError,
    ConvolutionOptions,
    convolve,
    convolve_sequence,
    delta_convolve,
)
from .sequences import (
    ExplicitMeasures,
    ExplicitNormalizers,
    GeometricNormalizers,
    IidMeasures,
    PowerNormalizers,
    ScaledMeasures,
    SequenceSpec,
)
from .chain import (
    RngPolicy,
    TrajectoryBatch,
    conditional_moment_check,
    kernel_distribution,
    martingale_second_moment_check,
    simulate,
    step_sample,
    write_summary_csv,
)
from .lln import (
    StabilityReport,
    build_stability_report,
    centers,
    classical_baseline,
    condition_partial_sums,
    condition_report,
    emit_report,
    stability_exact,
    stability_mc,
)
from .selftest import run_selftest

__all__ = [name for name in dir() if not name.startswith("_")]
