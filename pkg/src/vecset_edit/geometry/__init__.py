from .mesh import (
    BoundingBox,
    SurfaceSamples,
    TriangleMesh,
    box_mesh,
    concat_meshes,
    icosphere,
    normalize_mesh,
    quad_mesh,
    sample_surface,
)
from .sdf import (
    Box,
    Capsule,
    PrimitiveScene,
    SdfGrid,
    Sphere,
    marching_cubes,
    mesh_sdf,
    sample_grid,
    scene_grid,
    scene_sdf,
)
from .chamfer import chamfer_brute_force, chamfer_distance
from .clip import crop_mesh, crop_mesh_outside
from .raster import CHANNELS, ImageGrid, ViewSpec, canonical_views, rasterize_mesh, render_view
