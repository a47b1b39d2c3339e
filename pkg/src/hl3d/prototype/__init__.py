"""Layout prototype: planar polygon initialization, losses, optimization and repair."""
