# Configuration file for the microcc laboratory

# Version tag written into every JSON report; bump when the report layout changes
REPORT_SCHEMA_VERSION = "1.0"

# Seed for every pseudo-random sample (probe directions, Garding vectors, test fields)
DEFAULT_SEED = 20240611

# Relative singular-value cutoff used to decide the kernel of a principal symbol
KERNEL_TOL = 1e-8

# |Q(lambda)| below this on every sampled cone vector certifies vanishing on the cone
CONE_RESIDUAL_TOL = 1e-10

# Number of extra (complex) probe directions drawn inside each sampled kernel
CONE_PROBE_COUNT = 8

# Unit covectors sampled on the cosphere when building a cone sample
SPHERE_SAMPLES = 64

# Lemma hypothesis check: Re Q on cone vectors may dip this far below zero
GARDING_HYPOTHESIS_TOL = 1e-10

# Unit vectors drawn per (x, xi) when estimating C_{delta,K}; the resample is denser
GARDING_VECTOR_SAMPLES = 200
GARDING_RESAMPLE_FACTOR = 10
GARDING_SAFETY_FACTOR = 1.1
GARDING_SLACK_TOL = -1e-8

# Symbol-class probe: dyadic |xi| scales, finite-difference step, allowed growth slope
PROBE_SCALES = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0)
PROBE_FD_STEP = 1e-4
PROBE_GROWTH_TOL = 0.25
PROBE_ZERO_FLOOR = 1e-6

# Oscillation radius search (seed radius is also the largest radius ever returned)
OSCILLATION_SEED_RADIUS = 1.0
OSCILLATION_RESOLUTION = 9
OSCILLATION_REL_TOL = 1e-6
# Shrink factor and step cap when the 2x finer recheck still exceeds gamma
OSCILLATION_SHRINK = 0.98
OSCILLATION_MAX_SHRINKS = 400

# Largest |a(x, xi) - a(0, xi)| tolerated on the spot-check samples of a multiplier
MULTIPLIER_DEFECT_TOL = 1e-9

# Direct (non-multiplier, non-separable) quantization is refused above this many pairs
DIRECT_SUM_LIMIT = 2 ** 31

# Metrics with |det g| below this are treated as degenerate
DEGENERACY_TOL = 1e-10

# Partition of unity: sum of bumps must equal one to this tolerance
PARTITION_TOL = 1e-10

# Spectral coefficients below REL_TOL * max are ignored when measuring bandwidth
BANDWIDTH_REL_TOL = 1e-13

# Verdict thresholds (the theorem gives no rates, so these are conventions)
WEAK_CONVERGENCE_TOL = 1e-6
MONOTONE_SLACK = 1e-12
PRECOMPACT_STALL_RATIO = 0.5
PRECOMPACT_ZERO_TAIL = 1e-12
PAIRING_DECAY_RATIO = 1e-3
CROSS_TERM_TOL = 1e-4
LOCALIZATION_TOL = 1e-10
FREEZE_SLACK = 1e-10
PUSHFORWARD_LINEAR_TOL = 1e-12
PUSHFORWARD_NONLINEAR_TOL = 1e-10

# Gaussian width of the periodized bumps in the weak-convergence test dictionary
DICTIONARY_BUMP_WIDTH = 1.0
DICTIONARY_BUMP_CENTERS = (3.141592653589793, 2.0)

# Registries addressable from scenario configs
BUILTIN_SYMBOLS = (
    "div3",
    "curl3",
    "divcurl6",
    "grad",
    "laplace",
    "dx1",
    "proj_first",
    "riesz1",
    "zero",
)
BUILTIN_QUADFORMS = (
    "dot3",
    "vnorm3",
    "square",
    "proj_cross",
    "mixed12",
    "variable12",
    "hyperbolic",
    "identity:<J>",
)
BUILTIN_METRICS = ("euclidean", "minkowski", "diag:<entries>", "conformal:<amplitude>")
BUILTIN_BUNDLE_METRICS = ("identity", "diag:<entries>", "hyperbolic")
BUILTIN_DIFFEOMORPHISMS = ("identity", "linear:<factor>", "rotation:<angle>", "sine:<amplitude>")
BUILTIN_SCENARIOS = (
    "divcurl3",
    "tartar-const",
    "variable-q",
    "variable-symbol",
    "manifold-minkowski",
    "counterexample",
    "counterexample-precompact",
    "garding",
    "pushforward-law",
    "two-chart",
)

# CSV columns of a convergence table, in order
CSV_COLUMNS = ("k", "epsilon", "pairing_re", "pairing_im", "target_re", "target_im", "gap_abs")

# CLI exit codes
EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_FAIL = 2
