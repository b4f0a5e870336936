"""Spatially regularized sparse reconstruction of HARDI signal fields.

Spherical ridgelet (and baseline) dictionaries, an l1 + total-variation
split Bregman solver, synthetic crossing-fibre phantoms and the metrics used
to score reconstructions.
"""

__version__ = "0.1.0"

from .dictionary import (  # noqa: E402
    RidgeletSpec,
    build_dictionary,
    build_gaussian_dictionary,
    build_ridgelet_dictionary,
    build_sh_dictionary,
    funk_radon_multiplier,
    frt_kernel_matrix,
    assemble_sensing_matrix,
)
from .solver import (  # noqa: E402
    SolverParams,
    fista_voxel,
    sparse_only_reconstruct,
    split_bregman_reconstruct,
    tv_denoise,
)
from .sphere import icosphere, spiral_hemisphere  # noqa: E402
from .phantom import make_phantom1, make_phantom2, add_rician_noise  # noqa: E402

__all__ = [
    "RidgeletSpec", "build_dictionary", "build_gaussian_dictionary", "build_ridgelet_dictionary",
    "build_sh_dictionary", "funk_radon_multiplier", "frt_kernel_matrix", "assemble_sensing_matrix",
    "SolverParams", "fista_voxel", "sparse_only_reconstruct", "split_bregman_reconstruct",
    "tv_denoise", "icosphere", "spiral_hemisphere", "make_phantom1", "make_phantom2",
    "add_rician_noise",
]
