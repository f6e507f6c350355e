"""afclink: discrete-event simulator of a frequency-multiplexed photon-pair
link with wavelength conversion, an atomic-frequency-comb memory, a
GPS-comb-referenced lock chain, and a herald-synchronized noise shutter."""

__version__ = "0.1.0"

from .spectral import (  # noqa: F401
    LineProfile,
    SpectralGrid,
    eom_sideband_offsets,
    profile_density,
    tpc_mode_offsets,
)
from .events import EventBatch, PhotonEvent  # noqa: F401
from .lockchain import (  # noqa: F401
    DriftModel,
    LaserId,
    LaserNetworkState,
    LockChainConfig,
    RfOffsets,
    ServoModel,
    beat_frequency,
    derived_frequencies,
    matching_residual,
    simulate_lock_run,
    step_free_running,
    step_servo,
)
from .source import SourceConfig, apply_pair_correlation, sample_pairs  # noqa: F401
from .channel import (  # noqa: F401
    ConverterConfig,
    FiberLink,
    ShutterSchedule,
    convert,
    fiber_transmit,
    sample_conversion_noise,
    shutter_gate,
)
from .memory import (  # noqa: F401
    AFCConfig,
    AbsorptionSpectrum,
    InhomogeneousProfile,
    StorageOutcome,
    afc_efficiency,
    afc_efficiency_oracle,
    comb_spectrum,
    prepare_afc,
    store_retrieve,
)
from .detection import (  # noqa: F401
    CoincidenceHistogram,
    SPDConfig,
    build_histogram,
    compute_snr,
    detect,
    moving_average,
)
