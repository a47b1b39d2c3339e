"""Layout parsing: levels, floorplans, rooms, openings, stairs, windows, extrusion."""
