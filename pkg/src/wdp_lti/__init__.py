"""Gaussian output-noise calibration that hides the input distribution of an LTI system."""
from wdp_lti.calibrate import (
    AdjacencySpec,
    NoiseSpec,
    PrivacySpec,
    achievable_delta,
    check_adjacent,
    corollary1_noise,
    theorem1_check,
    theorem2_noise,
)
from wdp_lti.lti import LtiSystem, StackedMaps, build_stacked, lipschitz_bound, pushforward, sensitivity
from wdp_lti.matgauss import (
    Gaussian,
    TvBoundReport,
    eig_extremes,
    kl_divergence,
    lemma1_bound,
    product,
    spd_sqrt,
    symmetrized_kl,
    w2_distance,
)
from wdp_lti.verify import TvEstimate, VerifyReport, dp_verify, log_density, sample, tv_monte_carlo

__version__ = "0.1.0"
