"""Heralded single-photon source with built-in memory: model, Monte
Carlo click simulator, estimators, curve fits and the magic-detuning
calculation, plus a CLI tying them together."""

from .model import (
    ModelParams,
    WriteNoiseLine,
    EfficiencyChain,
    joint_pgf_eval,
    joint_pmf,
    mean_counts,
    g2_cross,
    conditional_read_mean,
    g2_conditional_auto,
    retrieval_efficiency_model,
    g2_unconditional,
    cauchy_schwarz_parameter,
    excitation_probability,
    p0_from_counts,
    escape_efficiency,
)
from .noise import NoiseLaw
from .simulate import (
    NoiseGrowth,
    SimConfig,
    SequenceRecord,
    ClickDataset,
    apply_memory_decay,
    sample_time_tags,
    simulate,
    simulate_sweep,
)
from .estimators import (
    CorrelationResult,
    estimate_g2_cross,
    estimate_g2_conditional,
    estimate_retrieval_efficiency,
    estimate_g2_unconditional,
    cauchy_schwarz_from_data,
    histogram_time_tags,
)
from .fitting import (
    SpectrumScan,
    SpectralFitResult,
    DecayFitResult,
    NoiseLineFit,
    EfficiencyFitResult,
    fit_write_spectrum,
    fit_read_spectrum,
    write_efficiency,
    fit_noise_line,
    fit_memory_decay,
    threshold_crossing,
    fit_detection_efficiencies,
    intrinsic_retrieval,
)
from .atomic import (
    faddeeva,
    CGInput,
    clebsch_gordan,
    wigner_6j,
    RamanLevelScheme,
    raman_coupling_static,
    raman_coupling_doppler,
    find_magic_detuning,
)

__version__ = "0.1.0"
