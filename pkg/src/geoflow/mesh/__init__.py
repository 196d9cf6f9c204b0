from .core import (
    AREA_EPS,
    AdmissibilityReport,
    BoundaryError,
    DegenerateElementError,
    MeshError,
    MeshTopologyError,
    SurfaceMesh,
    averaged_vertex_normals,
    check_admissible,
    face_normal_and_area,
    lumped_mass_vector,
    lumped_normal_vector,
    orient_outward,
    shoelace_area,
    signed_volume,
    surface_area,
    unit_vertex_normals,
    update_positions,
)
from .generators import (
    dumbbell_counts,
    dumbbell_grid_for_vertices,
    dumbbell_point,
    gen_cuboid,
    gen_dumbbell,
    gen_flat_patch,
    gen_icosphere,
    gen_spherical_cap,
    generate,
    GENERATORS,
)
from .io import MeshParseError, load_mesh, save_mesh
from .quality import MeshQualityReport, mesh_quality, triangle_ratios

__all__ = [
    "AREA_EPS",
    "AdmissibilityReport",
    "BoundaryError",
    "DegenerateElementError",
    "MeshError",
    "MeshParseError",
    "MeshQualityReport",
    "MeshTopologyError",
    "SurfaceMesh",
    "averaged_vertex_normals",
    "check_admissible",
    "dumbbell_counts",
    "dumbbell_grid_for_vertices",
    "dumbbell_point",
    "face_normal_and_area",
    "gen_cuboid",
    "gen_dumbbell",
    "gen_flat_patch",
    "gen_icosphere",
    "gen_spherical_cap",
    "generate",
    "GENERATORS",
    "load_mesh",
    "lumped_mass_vector",
    "lumped_normal_vector",
    "mesh_quality",
    "orient_outward",
    "save_mesh",
    "shoelace_area",
    "signed_volume",
    "surface_area",
    "triangle_ratios",
    "unit_vertex_normals",
    "update_positions",
]
