"""Sort apps into buckets by the dangerous permissions they request.

An app belongs to every group one of whose permissions it requests,
so a single app can sit in several buckets. An app that requests no
dangerous permission at all belongs to Others, and only to Others.
"""

from __future__ import annotations

# Use of this source code is governed by the MIT license.
__license__ = "MIT"

import functools
import logging
from enum import Enum
from pathlib import Path
from typing import (
    Dict,
    FrozenSet,
    Iterable,
    List,
    Mapping,
    Optional,
    Tuple,
    TYPE_CHECKING,
    Union,
)

from dexgroup.exceptions import (
    DuplicateAppId,
    InvalidGroupMapping,
)

if TYPE_CHECKING:
    from dexgroup.classifier import Label

__all__ = [
    "GroupId",
    "GroupAssignment",
    "GroupMapping",
    "assign_groups",
    "assign",
    "partition_corpus",
    "group_tallies",
    "active_groups",
    "DEFAULT_MAPPING_PATH",
]

logger = logging.getLogger(__name__)

#: Where the built-in permission table lives.
DEFAULT_MAPPING_PATH = Path(__file__).parent / "data" / "permission_groups.txt"

MAPPING_FORMAT_VERSION = 1


class GroupId(Enum):
    """The permission groups, in reporting order."""

    CALENDAR = "Calendar"
    CAMERA = "Camera"
    CONTACTS = "Contacts"
    LOCATION = "Location"
    MICROPHONE = "Microphone"
    OTHERS = "Others"
    PHONE = "Phone"
    SENSORS = "Sensors"
    SMS = "SMS"
    STORAGE = "Storage"

    @classmethod
    def from_name(cls, name: str) -> GroupId:
        """Look a group up by its name, ignoring case.

        :raise ValueError: If there's no such group.
        """
        for group in cls:
            if group.value.lower() == name.lower():
                return group
        raise ValueError("No permission group called %r" % name)

    @property
    def is_dangerous(self) -> bool:
        return self is not GroupId.OTHERS

    def __str__(self) -> str:
        return self.value


def active_groups(include_sensors: bool = False) -> List[GroupId]:
    """The groups a corpus is partitioned into. Sensors only takes part
    when asked for.
    """
    return [g for g in GroupId if include_sensors or g is not GroupId.SENSORS]


class GroupMapping(object):
    """Which dangerous permission belongs to which group.

    :param table: Group -> the permissions it contains.
    :raise InvalidGroupMapping: If a permission appears in two groups
        or the table tries to put permissions in Others.
    """

    version: int

    def __init__(self, table: Mapping[GroupId, Iterable[str]], version: int = MAPPING_FORMAT_VERSION):
        self.version = version
        self._group_of: Dict[str, GroupId] = {}
        self._members: Dict[GroupId, Tuple[str, ...]] = {}
        for group, permissions in table.items():
            if group is GroupId.OTHERS:
                raise InvalidGroupMapping("Others is defined by the absence of permissions.")
            members = tuple(permissions)
            self._members[group] = members
            for permission in members:
                if permission in self._group_of:
                    raise InvalidGroupMapping(
                        "%s is in both %s and %s."
                        % (permission, self._group_of[permission], group)
                    )
                self._group_of[permission] = group

    @classmethod
    def from_text(cls, text: str) -> GroupMapping:
        """Parse the permission table file format.

        Lines are a ``version: N`` line, ``[Group]`` headings, and one
        permission per line under the heading. ``#`` starts a comment.
        """
        table: Dict[GroupId, List[str]] = {}
        version = MAPPING_FORMAT_VERSION
        current: Optional[GroupId] = None
        for line_number, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("version:"):
                try:
                    version = int(line.split(":", 1)[1])
                except ValueError:
                    raise InvalidGroupMapping("Line %d: bad version line." % line_number)
                if version != MAPPING_FORMAT_VERSION:
                    raise InvalidGroupMapping("Unsupported mapping version %d." % version)
                continue
            if line.startswith("[") and line.endswith("]"):
                try:
                    current = GroupId.from_name(line[1:-1].strip())
                except ValueError as e:
                    raise InvalidGroupMapping("Line %d: %s" % (line_number, e))
                table.setdefault(current, [])
                continue
            if current is None:
                raise InvalidGroupMapping(
                    "Line %d: permission %r comes before any group heading."
                    % (line_number, line)
                )
            table[current].append(line)
        return cls(table, version)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> GroupMapping:
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    @classmethod
    @functools.lru_cache(maxsize=None)
    def default(cls) -> GroupMapping:
        """The built-in table of 26 dangerous permissions."""
        return cls.from_file(DEFAULT_MAPPING_PATH)

    def group_of(self, permission: str) -> Optional[GroupId]:
        """The group a permission belongs to, or None if it isn't
        dangerous.
        """
        return self._group_of.get(permission)

    def permissions_in(self, group: GroupId) -> Tuple[str, ...]:
        return self._members.get(group, ())

    def __len__(self) -> int:
        return len(self._group_of)

    def __contains__(self, permission: object) -> bool:
        return permission in self._group_of


def assign_groups(
    perms: Iterable[str],
    include_sensors: bool = False,
    mapping: Optional[GroupMapping] = None,
) -> FrozenSet[GroupId]:
    """Work out which groups an app belongs to.

    :param perms: The app's requested permissions.
    :param include_sensors: Put BODY_SENSORS apps in Sensors. When this
        is off, requesting BODY_SENSORS alone leaves an app in Others.
    :return: A non-empty set of groups. If it contains Others, it
        contains nothing else.
    """
    if mapping is None:
        mapping = GroupMapping.default()
    groups = set()
    for permission in perms:
        group = mapping.group_of(permission)
        if group is None:
            continue
        if group is GroupId.SENSORS and not include_sensors:
            continue
        groups.add(group)
    if not groups:
        return frozenset([GroupId.OTHERS])
    return frozenset(groups)


class GroupAssignment(object):
    """The groups one app belongs to.

    :raise ValueError: If ``groups`` is empty or mixes Others with a
        dangerous group.
    """

    __slots__ = ("app_id", "groups")

    app_id: str
    groups: FrozenSet[GroupId]

    def __init__(self, app_id: str, groups: Iterable[GroupId]):
        groups = frozenset(groups)
        if not groups:
            raise ValueError("App %s belongs to no group." % app_id)
        if GroupId.OTHERS in groups and len(groups) > 1:
            raise ValueError("App %s can't be in Others and a dangerous group." % app_id)
        self.app_id = app_id
        self.groups = groups

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GroupAssignment):
            return NotImplemented
        return self.app_id == other.app_id and self.groups == other.groups

    def __hash__(self) -> int:
        return hash((self.app_id, self.groups))

    def __repr__(self) -> str:
        return "GroupAssignment(%r, %s)" % (
            self.app_id, sorted(g.value for g in self.groups)
        )


def assign(
    app_id: str,
    perms: Iterable[str],
    include_sensors: bool = False,
    mapping: Optional[GroupMapping] = None,
) -> GroupAssignment:
    """`assign_groups`, wrapped up with the app id."""
    return GroupAssignment(app_id, assign_groups(perms, include_sensors, mapping))


def partition_corpus(
    assignments: Iterable[GroupAssignment],
    include_sensors: bool = False,
) -> Dict[GroupId, List[str]]:
    """Put every app id into the bucket of each of its groups.

    Every group gets a key even if its bucket is empty. Buckets list
    app ids in the order the assignments came in.

    :raise DuplicateAppId: If an app id is assigned twice.
    """
    buckets: Dict[GroupId, List[str]] = {g: [] for g in active_groups(include_sensors)}
    seen = set()
    for assignment in assignments:
        if assignment.app_id in seen:
            raise DuplicateAppId(assignment.app_id)
        seen.add(assignment.app_id)
        for group in assignment.groups:
            if group not in buckets:
                logger.debug(
                    "Dropping %s from %s: group not active.", assignment.app_id, group
                )
                continue
            buckets[group].append(assignment.app_id)
    return buckets


def group_tallies(
    partition: Mapping[GroupId, List[str]],
    labels: Mapping[str, "Label"],
) -> Dict[GroupId, Dict["Label", int]]:
    """Count each bucket's apps by label."""
    from dexgroup.classifier import Label

    tallies: Dict[GroupId, Dict[Label, int]] = {}
    for group, app_ids in partition.items():
        counts = {label: 0 for label in Label}
        for app_id in app_ids:
            counts[labels[app_id]] += 1
        tallies[group] = counts
    return tallies
