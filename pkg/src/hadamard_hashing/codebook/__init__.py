from .hadamard_codebook import (
    Codebook,
    HadamardMatrix,
    ProjectionMatrix,
    TargetCode,
    build_codebook,
    load_codebook,
    make_target,
    make_targets,
    project_and_sign,
    sample_projection,
    save_codebook,
    select_order,
    sign,
    sylvester,
)
