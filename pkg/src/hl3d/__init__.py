"""Training-free 3D building layout estimation from labeled meshes."""

__version__ = "0.1.0"
