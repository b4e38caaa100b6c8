"""Header mapping: program header fields onto fixed-width PHV containers.

Each PHV container holds at most one program field. Fields are placed
largest first; a field's containers are chosen greedily (largest class that
still fits the remaining width, otherwise the smallest class covering it).
An optional second pass (on by default) re-covers single fields and pairs of fields from their own
containers plus the free inventory whenever that lowers allocated bits.
"""
from dataclasses import dataclass
from functools import lru_cache
from math import ceil
from typing import Optional

from core.errors import MappingRejected
from core.hsl import PhvSpec
from core.ir_model import HeaderField
from utils.logger import setup_logger

logger = setup_logger()

ORACLE_MAX_FIELDS = 6
ORACLE_MAX_CONTAINERS = 8
REPACK_SWEEPS = 4

Cover = tuple[int, ...]  # container count per class, classes in descending width


@dataclass(frozen=True)
class HeaderMapping:
    """Field-to-container assignment with waste accounting."""
    assignments: dict[str, tuple[tuple[int, int], ...]]  # field -> ((class width, count), ...)
    used_bits: int
    allocated_bits: int

    @property
    def field_count(self) -> int:
        return len(self.assignments)

    @property
    def waste_fraction(self) -> float:
        if self.allocated_bits == 0:
            return 0.0
        return (self.allocated_bits - self.used_bits) / self.allocated_bits

    def containers_used(self) -> dict[int, int]:
        used: dict[int, int] = {}
        for parts in self.assignments.values():
            for width, count in parts:
                used[width] = used.get(width, 0) + count
        return dict(sorted(used.items()))


def waste_percent(m: HeaderMapping) -> float:
    """Percentage of allocated PHV bits that carry no field data."""
    if m.allocated_bits == 0:
        return 0.0
    return 100.0 * (m.allocated_bits - m.used_bits) / m.allocated_bits


def _bits(cover: Cover, classes: tuple[int, ...]) -> int:
    return sum(n * w for n, w in zip(cover, classes))


def _sort_key(cover: Cover, classes: tuple[int, ...]) -> tuple:
    return (_bits(cover, classes), sum(cover), tuple(-n for n in cover))


@lru_cache(maxsize=65536)
def _minimal_covers(width: int, pool: Cover, classes: tuple[int, ...]) -> tuple[Cover, ...]:
    """All container multisets from ``pool`` that cover ``width`` and drop no container.

    Sorted by allocated bits, then container count.
    """
    found: list[Cover] = []

    def walk(index: int, chosen: list[int], total: int) -> None:
        if total >= width:
            smallest = min(classes[i] for i, n in enumerate(chosen) if n)
            if total - smallest < width:
                found.append(tuple(chosen + [0] * (len(classes) - len(chosen))))
            return
        if index == len(classes):
            return
        cls = classes[index]
        limit = min(pool[index], ceil((width - total) / cls))
        for n in range(limit, -1, -1):
            walk(index + 1, chosen + [n], total + n * cls)

    walk(0, [], 0)
    return tuple(sorted(found, key=lambda c: _sort_key(c, classes)))


def _greedy_cover(width: int, available: list[int], classes: tuple[int, ...]) -> Optional[Cover]:
    """Largest class <= remaining width, else smallest class >= remaining width."""
    remaining = width
    taken = [0] * len(classes)
    avail = list(available)
    while remaining > 0:
        fitting = [i for i, w in enumerate(classes) if avail[i] > 0 and w <= remaining]
        if fitting:
            index = min(fitting, key=lambda i: -classes[i])
        else:
            covering = [i for i, w in enumerate(classes) if avail[i] > 0 and w >= remaining]
            if not covering:
                return None
            index = min(covering, key=lambda i: classes[i])
        taken[index] += 1
        avail[index] -= 1
        remaining -= classes[index]
    return tuple(taken)


def _capped(pool: list[int], width: int, classes: tuple[int, ...]) -> Cover:
    return tuple(min(n, ceil(width / w)) for n, w in zip(pool, classes))


class HeaderMapper:
    """Largest-field-first PHV allocator."""

    def __init__(self, phv: PhvSpec, repack: bool = True):
        """Initialize header mapper.

        Args:
            phv: PHV container inventory
            repack: Run the waste-reduction pass after the greedy pass
        """
        self.classes = tuple(sorted((c.width for c in phv.container_classes), reverse=True))
        inventory = phv.inventory()
        self.inventory = [inventory[w] for w in self.classes]
        self.repack = repack
        logger.debug(f"HeaderMapper initialized: classes={self.classes}, inventory={self.inventory}")

    def map(self, fields: list[HeaderField]) -> HeaderMapping:
        if not fields:
            raise ValueError("map_headers needs at least one field")
        order = sorted(range(len(fields)), key=lambda i: (-fields[i].width, i))
        free = list(self.inventory)
        covers: dict[int, Cover] = {}
        for i in order:
            cover = _greedy_cover(fields[i].width, free, self.classes)
            if cover is None:
                raise MappingRejected(
                    phase="header",
                    resource="PHV capacity",
                    element=fields[i].qualified_name,
                    detail=f"PHV capacity exceeded: no containers left for {fields[i].width}-bit field",
                )
            covers[i] = cover
            free = [f - n for f, n in zip(free, cover)]

        if self.repack:
            self._repack(fields, order, covers, free)

        assignments = {}
        for i, header_field in enumerate(fields):
            parts = tuple((w, n) for w, n in zip(self.classes, covers[i]) if n)
            assignments[header_field.qualified_name] = parts
        used = sum(f.width for f in fields)
        allocated = sum(_bits(c, self.classes) for c in covers.values())
        return HeaderMapping(assignments=assignments, used_bits=used, allocated_bits=allocated)

    def _repack(self, fields: list[HeaderField], order: list[int],
                covers: dict[int, Cover], free: list[int]) -> None:
        classes = self.classes
        for sweep in range(REPACK_SWEEPS):
            improved = False
            for i in order:
                width_i = fields[i].width
                if _bits(covers[i], classes) == width_i:
                    continue
                # single field: own containers plus free inventory
                pool = [f + n for f, n in zip(free, covers[i])]
                best = _minimal_covers(width_i, _capped(pool, width_i, classes), classes)
                if best and _bits(best[0], classes) < _bits(covers[i], classes):
                    free[:] = [p - n for p, n in zip(pool, best[0])]
                    covers[i] = best[0]
                    improved = True
                    continue
                for j in order:
                    if j == i:
                        continue
                    if self._repack_pair(fields, i, j, covers, free):
                        improved = True
                        break
            if not improved:
                break
            logger.debug(f"PHV repack sweep {sweep + 1} lowered allocation")

    def _repack_pair(self, fields: list[HeaderField], i: int, j: int,
                     covers: dict[int, Cover], free: list[int]) -> bool:
        classes = self.classes
        width_i, width_j = fields[i].width, fields[j].width
        current = _bits(covers[i], classes) + _bits(covers[j], classes)
        pool = [f + a + b for f, a, b in zip(free, covers[i], covers[j])]
        best: Optional[tuple[int, Cover, Cover]] = None
        for cover_i in _minimal_covers(width_i, _capped(pool, width_i, classes), classes):
            bits_i = _bits(cover_i, classes)
            if best is not None and bits_i >= best[0]:
                break
            rest = [p - n for p, n in zip(pool, cover_i)]
            options = _minimal_covers(width_j, _capped(rest, width_j, classes), classes)
            if not options:
                continue
            total = bits_i + _bits(options[0], classes)
            if best is None or total < best[0]:
                best = (total, cover_i, options[0])
        if best is None or best[0] >= current:
            return False
        _, covers[i], covers[j] = best
        free[:] = [p - a - b for p, a, b in zip(pool, covers[i], covers[j])]
        return True


def map_headers(fields: list[HeaderField], phv: PhvSpec, repack: bool = True) -> HeaderMapping:
    """Assign every header field to whole PHV containers.

    The greedy per-field rule is the first pass. With ``repack`` (the
    default) a second pass may re-cover fields with fewer allocated bits, so
    a field can end up on containers the greedy rule would not pick, e.g. a
    32-bit field on 16+16 instead of 24+16. Pass ``repack=False`` for the
    plain greedy result.

    Raises:
        MappingRejected: The container inventory runs out (names the field)
    """
    mapping = HeaderMapper(phv, repack=repack).map(fields)
    logger.info(f"Header mapping: {mapping.field_count} fields, {mapping.used_bits} bits in "
                f"{mapping.allocated_bits} PHV bits, waste {waste_percent(mapping):.2f}%")
    return mapping


def brute_force_header_map(fields: list[HeaderField], phv: PhvSpec) -> Optional[HeaderMapping]:
    """Exhaustively find the assignment with the fewest allocated bits.

    Only for small instances (test oracle). Returns None when infeasible.

    Raises:
        ValueError: More than 6 fields or more than 8 containers
    """
    total_containers = sum(c.count for c in phv.container_classes)
    if len(fields) > ORACLE_MAX_FIELDS or total_containers > ORACLE_MAX_CONTAINERS:
        raise ValueError(
            f"oracle limited to {ORACLE_MAX_FIELDS} fields and {ORACLE_MAX_CONTAINERS} containers, "
            f"got {len(fields)} fields and {total_containers} containers"
        )
    classes = tuple(sorted((c.width for c in phv.container_classes), reverse=True))
    inventory = phv.inventory()
    best: dict = {"bits": None, "covers": None}

    def search(index: int, pool: list[int], chosen: list[Cover], bits: int) -> None:
        if best["bits"] is not None and bits >= best["bits"]:
            return
        if index == len(fields):
            best["bits"], best["covers"] = bits, list(chosen)
            return
        width = fields[index].width
        for cover in _minimal_covers(width, _capped(pool, width, classes), classes):
            rest = [p - n for p, n in zip(pool, cover)]
            search(index + 1, rest, chosen + [cover], bits + _bits(cover, classes))

    search(0, [inventory[w] for w in classes], [], 0)
    if best["covers"] is None:
        return None
    assignments = {
        f.qualified_name: tuple((w, n) for w, n in zip(classes, cover) if n)
        for f, cover in zip(fields, best["covers"])
    }
    return HeaderMapping(
        assignments=assignments,
        used_bits=sum(f.width for f in fields),
        allocated_bits=best["bits"],
    )
