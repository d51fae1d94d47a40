"""
Scenario definitions: schema, YAML loader/dumper and the built-in three-cell network.

A scenario file has three sections::

    name: table1
    domain:
      - {id: A, total_rate: 100, sweep: {start: 50, end: 1150, step: 50}}
    sector:
      - {id: A-S1, domain: A}
    user:
      - {id: A1, sector: A-S1, kind: sigmoid, a: 3, b: 10.0}
      - {id: A4, sector: A-S1, kind: log, k: 1.1, r_max: 100}

Unknown keys are rejected. Errors name the offending entry and its line.
"""

import logging
import math
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .exceptions import ScenarioParseError, ScenarioValidationError
from .utility import UtilitySpec, utility_from_parameters

logger = logging.getLogger(__name__)

SECTIONS = ('domain', 'sector', 'user')
LINE_KEY = '__line__'
GLOBAL_DOMAIN_ID = 'ALL'

Positive = Annotated[float, Field(gt=0, allow_inf_nan=False)]


class _Entry(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True, coerce_numbers_to_str=True)


class SweepSpec(_Entry):
    """Grid of total rates ``start, start + step, ..., end``."""
    start: Positive = 50.0
    end: Positive = 1150.0
    step: Positive = 50.0

    @model_validator(mode='after')
    def check_order(self):
        if self.start > self.end:
            raise ValueError(f"sweep start {self.start} exceeds end {self.end}")
        return self

    def rates(self) -> List[float]:
        count = math.floor((self.end - self.start) / self.step + 1e-9)
        return [self.start + i * self.step for i in range(count + 1)]


class DomainSpec(_Entry):
    id: str
    total_rate: Optional[Positive] = None
    sweep: Optional[SweepSpec] = None

    @model_validator(mode='after')
    def check_rate(self):
        if self.total_rate is None and self.sweep is None:
            raise ValueError("domain needs total_rate or sweep")
        return self

    @property
    def rate(self) -> float:
        """Total rate of a single run; the sweep start when only a sweep is given."""
        return self.total_rate if self.total_rate is not None else self.sweep.start


class SectorSpec(_Entry):
    id: str
    domain: str


class SigmoidUserSpec(_Entry):
    id: str
    sector: str
    kind: Literal['sigmoid']
    a: Positive
    b: Positive

    def utility(self) -> UtilitySpec:
        return utility_from_parameters(self.kind, a=self.a, b=self.b)


class LogUserSpec(_Entry):
    id: str
    sector: str
    kind: Literal['log']
    k: Positive
    r_max: Positive

    def utility(self) -> UtilitySpec:
        return utility_from_parameters(self.kind, k=self.k, r_max=self.r_max)


UserSpec = Annotated[Union[SigmoidUserSpec, LogUserSpec], Field(discriminator='kind')]


class _ReferenceError(ValueError):
    """Integrity failure that remembers which entry caused it."""

    def __init__(self, message, section, index, entry):
        super().__init__(message)
        self.section = section
        self.index = index
        self.entry = entry


def _unique(entries, section):
    seen = set()
    for index, entry in enumerate(entries):
        if entry.id in seen:
            raise _ReferenceError(f"duplicate {section} id {entry.id!r}", section, index, entry.id)
        seen.add(entry.id)
    return seen


class Scenario(_Entry):
    """
    A network of MME domains, sectors and users.

    Attributes:
        name (str): Label written into result rows
        domain (List[DomainSpec]): MME domains with their total rates
        sector (List[SectorSpec]): Sectors, each in exactly one domain
        user (List[UserSpec]): Users, each in exactly one sector
    """
    name: str = 'scenario'
    domain: List[DomainSpec] = Field(min_length=1)
    sector: List[SectorSpec] = Field(min_length=1)
    user: List[UserSpec] = Field(min_length=1)

    @model_validator(mode='after')
    def check_references(self):
        domains = _unique(self.domain, 'domain')
        sectors = _unique(self.sector, 'sector')
        _unique(self.user, 'user')
        for index, sector in enumerate(self.sector):
            if sector.domain not in domains:
                raise _ReferenceError(
                    f"sector {sector.id!r} references unknown domain {sector.domain!r}",
                    'sector', index, sector.id,
                )
        for index, user in enumerate(self.user):
            if user.sector not in sectors:
                raise _ReferenceError(
                    f"user {user.id!r} references unknown sector {user.sector!r}",
                    'user', index, user.id,
                )
        populated = {self.domain_of_sector[user.sector] for user in self.user}
        for index, domain in enumerate(self.domain):
            if domain.id not in populated:
                raise _ReferenceError(f"domain {domain.id!r} has no users", 'domain', index, domain.id)
        return self

    @property
    def domain_of_sector(self) -> Dict[str, str]:
        return {sector.id: sector.domain for sector in self.sector}

    def sweep_rates(self) -> List[float]:
        """Sweep grid of the first domain (by id) that declares one, else the default grid."""
        for domain in sorted(self.domain, key=lambda d: d.id):
            if domain.sweep is not None:
                return domain.sweep.rates()
        return SweepSpec().rates()

    def with_total_rate(self, total_rate: float) -> 'Scenario':
        """Copy with every domain's total rate set to ``total_rate``."""
        domains = [domain.model_copy(update={'total_rate': float(total_rate)}) for domain in self.domain]
        return self.model_copy(update={'domain': domains})

    def pooled(self, domain_id: str = GLOBAL_DOMAIN_ID) -> 'Scenario':
        """
        Copy with every sector under one MME domain.

        The pooled total rate is the sum of the member domains' rates.
        """
        total = math.fsum(domain.rate for domain in self.domain)
        return Scenario(
            name=self.name,
            domain=[DomainSpec(id=domain_id, total_rate=total)],
            sector=[SectorSpec(id=sector.id, domain=domain_id) for sector in self.sector],
            user=list(self.user),
        )

    def restricted_to(self, sector_ids, total_rate: float, domain_id: Optional[str] = None) -> 'Scenario':
        """Copy holding only ``sector_ids`` as a single domain with ``total_rate``."""
        sector_ids = set(sector_ids)
        domain_id = domain_id or '+'.join(sorted(sector_ids))
        return Scenario(
            name=self.name,
            domain=[DomainSpec(id=domain_id, total_rate=total_rate)],
            sector=[SectorSpec(id=s.id, domain=domain_id) for s in self.sector if s.id in sector_ids],
            user=[user for user in self.user if user.sector in sector_ids],
        )


# YAML loading


class _LineLoader(yaml.SafeLoader):
    """Safe loader that tags every mapping with its 1-based line."""

    def construct_mapping(self, node, deep=False):
        mapping = super().construct_mapping(node, deep=deep)
        mapping[LINE_KEY] = node.start_mark.line + 1
        return mapping


def _strip_lines(data) -> Dict[Tuple[str, int], int]:
    """Remove line tags in place and return the line of every section entry."""
    lines = {}
    if not isinstance(data, dict):
        return lines
    data.pop(LINE_KEY, None)
    for section in SECTIONS:
        entries = data.get(section)
        if not isinstance(entries, list):
            continue
        for index, entry in enumerate(entries):
            if isinstance(entry, dict):
                lines[(section, index)] = entry.pop(LINE_KEY, None)
                for value in entry.values():
                    if isinstance(value, dict):
                        value.pop(LINE_KEY, None)
    return lines


def _entry_id(data, section, index):
    try:
        entry = data[section][index]
    except (KeyError, IndexError, TypeError):
        return None
    if isinstance(entry, dict) and 'id' in entry:
        return str(entry['id'])
    return f"{section}[{index}]"


def _validation_error(path, data, lines, error: ValidationError) -> ScenarioValidationError:
    first = error.errors()[0]
    cause = (first.get('ctx') or {}).get('error')
    if isinstance(cause, _ReferenceError):
        section, index, entry = cause.section, cause.index, cause.entry
        message = str(cause)
    else:
        loc = first.get('loc', ())
        section = loc[0] if loc else None
        index = loc[1] if len(loc) > 1 and isinstance(loc[1], int) else None
        entry = _entry_id(data, section, index) if index is not None else section
        field = '.'.join(str(part) for part in loc[2:])
        message = f"{field}: {first['msg']}" if field else first['msg']
    line = lines.get((section, index))
    where = f"{path}:{line}" if line else str(path)
    return ScenarioValidationError(f"{where}: {entry or 'scenario'}: {message}", entry=entry, line=line)


def parse_scenario(text: str, path: str = '<string>') -> Scenario:
    """
    Parse and validate scenario YAML.

    Raises:
        ScenarioParseError: If the text is not YAML or not a mapping
        ScenarioValidationError: If the document violates the schema
    """
    try:
        data = yaml.load(text, Loader=_LineLoader)
    except yaml.YAMLError as e:
        mark = getattr(e, 'problem_mark', None)
        line = mark.line + 1 if mark is not None else None
        raise ScenarioParseError(f"{path}:{line or '?'}: invalid YAML: {e}", line=line)
    if not isinstance(data, dict):
        raise ScenarioParseError(f"{path}: scenario must be a mapping with domain/sector/user sections")

    lines = _strip_lines(data)
    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        raise _validation_error(path, data, lines, e)


def load_scenario(path) -> Scenario:
    """
    Load a scenario file.

    Args:
        path (str | Path): YAML file, UTF-8

    Returns:
        Scenario: Validated scenario

    Raises:
        ScenarioParseError: If the file cannot be read or parsed
        ScenarioValidationError: If the content violates the schema
    """
    try:
        with open(path, 'r', encoding='utf-8') as file:
            text = file.read()
    except (OSError, UnicodeDecodeError) as e:
        raise ScenarioParseError(f"cannot read scenario {path}: {e}")
    scenario = parse_scenario(text, str(path))
    logger.info(
        f"Loaded scenario {scenario.name!r} from {path}: {len(scenario.domain)} domains, "
        f"{len(scenario.sector)} sectors, {len(scenario.user)} users"
    )
    return scenario


def dump_scenario(scenario: Scenario, path) -> None:
    """Write ``scenario`` in the file format read by :func:`load_scenario`."""
    document = scenario.model_dump(mode='json', exclude_none=True)
    with open(path, 'w', encoding='utf-8') as file:
        yaml.safe_dump(document, file, sort_keys=False, default_flow_style=None)


# Built-in network: per BS, three sectors of three sigmoid users (a, b) and three
# logarithmic users (k), numbered 1..18 in sector order.
TABLE1 = {
    'A': (
        ([(3, 10.0), (3, 10.3), (1, 10.6)], [1.1, 1.2, 1.3]),
        ([(3, 10.0), (3, 11.0), (1, 12.0)], [1.0, 2.0, 3.0]),
        ([(3, 15.1), (3, 15.3), (3, 15.5)], [10.0, 11.0, 12.0]),
    ),
    'B': (
        ([(3, 10.9), (3, 11.2), (1, 11.5)], [1.4, 1.5, 1.6]),
        ([(3, 13.0), (3, 14.0), (1, 15.0)], [4.0, 5.0, 6.0]),
        ([(3, 15.7), (3, 15.9), (3, 17.3)], [13.0, 14.0, 15.0]),
    ),
    'C': (
        ([(3, 11.8), (3, 12.1), (1, 12.4)], [1.7, 1.8, 1.9]),
        ([(3, 16.0), (3, 17.0), (1, 18.0)], [7.0, 8.0, 9.0]),
        ([(3, 17.5), (3, 17.7), (3, 17.9)], [16.0, 17.0, 18.0]),
    ),
}
TABLE1_R_MAX = 100.0
TABLE1_TOTAL_RATE = 100.0


def table1_sector_id(bs: str, sector: int) -> str:
    return f"{bs}-S{sector}"


def builtin_table1() -> Scenario:
    """
    The built-in three-cell network: 3 base stations, 9 sectors, 54 users.

    Each base station is its own MME domain with total rate 100 and the
    default sweep grid 50..1150 step 50.
    """
    domains, sectors, users = [], [], []
    for bs, bs_sectors in TABLE1.items():
        domains.append(DomainSpec(id=bs, total_rate=TABLE1_TOTAL_RATE, sweep=SweepSpec()))
        number = 1
        for index, (sigmoids, logs) in enumerate(bs_sectors, start=1):
            sector_id = table1_sector_id(bs, index)
            sectors.append(SectorSpec(id=sector_id, domain=bs))
            for a, b in sigmoids:
                users.append(SigmoidUserSpec(id=f"{bs}{number}", sector=sector_id, kind='sigmoid',
                                             a=float(a), b=float(b)))
                number += 1
            for k in logs:
                users.append(LogUserSpec(id=f"{bs}{number}", sector=sector_id, kind='log',
                                         k=float(k), r_max=TABLE1_R_MAX))
                number += 1
    return Scenario(name='table1', domain=domains, sector=sectors, user=users)
