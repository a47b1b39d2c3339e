"""Fine semantic classes and their coarse skeleton categories."""

from enum import IntEnum


class SemanticClass(IntEnum):
    UNKNOWN = 0
    WALL = 1
    FLOOR = 2
    CEILING = 3
    DOOR = 4
    WINDOW = 5
    STAIRS = 6
    OBJECT = 7
    INACCURATE = 8
    LARGE_FURNITURE = 9

    @property
    def category(self) -> "Category":
        return CATEGORY_OF[self]


class Category(IntEnum):
    STRUCTURAL = 0
    INACCURATE = 1
    OBJECT = 2
    STAIRS = 3


CATEGORY_OF = {
    SemanticClass.UNKNOWN: Category.OBJECT,
    SemanticClass.WALL: Category.STRUCTURAL,
    SemanticClass.FLOOR: Category.STRUCTURAL,
    SemanticClass.CEILING: Category.STRUCTURAL,
    # doors are re-detected as openings later; they must not punch holes in walls
    SemanticClass.DOOR: Category.OBJECT,
    SemanticClass.WINDOW: Category.INACCURATE,
    SemanticClass.STAIRS: Category.STAIRS,
    SemanticClass.OBJECT: Category.OBJECT,
    SemanticClass.INACCURATE: Category.INACCURATE,
    SemanticClass.LARGE_FURNITURE: Category.STRUCTURAL,
}

N_CLASSES = len(SemanticClass)

# lookup table: class id -> category id
CATEGORY_LUT = [int(CATEGORY_OF[SemanticClass(i)]) for i in range(N_CLASSES)]


def class_from_name(name: str) -> SemanticClass:
    try:
        return SemanticClass[name.upper()]
    except KeyError:
        raise ValueError(f"unknown semantic class {name!r}") from None
