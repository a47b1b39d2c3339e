"""Write one of the synthetic scenes as a scene directory (mesh, cameras, depth, labels, gt)."""

import argparse

from hl3d import synthetic

SCENES = {
    "box_room": synthetic.box_room,
    "two_rooms_with_door": synthetic.two_rooms_with_door,
    "two_floors_with_stairs": synthetic.two_floors_with_stairs,
    "room_with_floor_hole": synthetic.room_with_floor_hole,
    "room_with_window": synthetic.room_with_window,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("scene", choices=sorted(SCENES))
    ap.add_argument("out_dir")
    ap.add_argument("--spacing", type=float, default=0.02, help="mesh edge length in meters")
    args = ap.parse_args()
    SCENES[args.scene]().write(args.out_dir, spacing=args.spacing)
    print(f"wrote {args.scene} to {args.out_dir}")


if __name__ == "__main__":
    main()
