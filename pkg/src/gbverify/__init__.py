"""Chart-based exterior calculus for checking Gauss-Bonnet and Thom-form identities numerically."""

from .bundles import (
    BundleError,
    CurvatureMatrix,
    FramedBundle,
    MetricConnection,
    curvature,
    direct_sum,
    frame_change_check,
    perturb_connection,
    pullback_bundle,
    rotate_frame,
)
from .euler import Check, EulerReport, block_euler_form, closedness_check, euler_form, gauss_bonnet
from .exprlang import DomainError, ParseError, differentiate, evaluate, parse
from .forms import (
    ChartDomain,
    ChartForm,
    FormError,
    evaluate_form,
    exterior_derivative,
    integrate_top_form,
    pullback,
    wedge,
)
from .models import ModelBundle, ModelError, catalog, get_model, load_model
from .pfaffian import SkewFormMatrix, conjugation_check, pfaffian
from .thom import (
    ThomProfile,
    fiber_integral,
    frame_invariance_check,
    make_profile,
    thom_form,
    zero_section_restrict,
)

__version__ = "0.1.0"
