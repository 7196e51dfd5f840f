"""Memory-efficient structured low-rank k-space completion.

Recovers unobserved samples of a 5-D k-space tensor (kx, ky, kz, coil, t)
by estimating annihilating filters from the Gram matrix of an implicit
multi-level block Hankel operator and enforcing them with a data-consistent
gradient-descent / exact-line-search solve.  Working memory stays on the
order of the data tensor; the Hankel matrix is never materialized outside
small test oracles.
"""

__version__ = "0.1.0"

from .core import (
    CIRCULAR,
    VALID,
    ConvSpec,
    Shape5,
    ShapeMismatchError,
    centered_fft_spatial,
    centered_ifft_spatial,
    linear_convolve_full,
    nd_convolve,
    nd_convolve_adjoint,
    unvec,
    vec,
)
from .hankel import (
    HankelOperator,
    HankelSizeCapError,
    explicit_hankel,
    gram_matrix,
    hankel_matrix_shape,
    hankel_matvec,
    hankel_nbytes,
    hankel_rmatvec,
)
from .nullspace import (
    EigenPair,
    FilterBank,
    RankRangeError,
    filters_from_nullspace,
    hermitian_eig,
    split_by_rank,
)
from .solver import (
    AcsError,
    MaskError,
    ObservedData,
    ReconConfig,
    ReconResult,
    annihilation_gradient,
    annihilation_objective,
    cadzow_baseline,
    cf_reconstruct,
    cf_reconstruct_with_acs,
    gd_els_solve,
)
from .dataset import (
    MaskSpec,
    MaskSpecError,
    PhantomData,
    PhantomSpec,
    TensorFileError,
    generate_mask,
    generate_phantom,
    generate_phantom_data,
    measure_rank,
    read_mask,
    read_tensor,
    write_tensor,
)
from .metrics import (
    EvalReport,
    error_map_pgm,
    image_snr_db,
    kspace_snr_db,
    ssos_image,
)

__all__ = [name for name in dir() if not name.startswith("_")]
