"""Discrete-event simulator of a multi-car elevator building.

Several cars share each shaft and must keep their vertical order. Time is
an integer tick; cars travel one floor per tick and dwell ``DWELL_TICKS``
at every stop before the Load/Unload event fires.

Within one tick, :func:`step` runs four phases in a fixed order:

1. maybe generate a random call (New event),
2. try to assign every pending call in id order (Assign events),
3. move cars at most one floor, idle cars yielding to busy neighbours,
4. advance dwell timers and fire Load/Unload events.

Collision avoidance works by reservation. A busy car claims the floor
interval spanned by its position and all its remaining stops. Busy cars in
one shaft hold disjoint intervals, separated by enough floors to park any
cars sitting between them. A call goes to a car only when the car's grown
interval still satisfies this rule. Busy cars therefore never block each
other, and idle cars can always be pushed aside.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional

from .config import ConfigError, from_mapping, read_kv

DWELL_TICKS = 2
MAX_GUESTS = 10


class SimulationFault(RuntimeError):
    """An internal invariant broke; the simulation cannot continue."""


@dataclass(frozen=True)
class BuildingConfig:
    num_shafts: int = 5
    cars_per_shaft: int = 3
    num_floors: int = 30
    car_capacity: int = 10
    arrival_rate: float = 0.0055
    seed: int = 0

    def __post_init__(self):
        if self.num_shafts < 1:
            raise ConfigError(f"num_shafts must be >= 1, got {self.num_shafts}")
        if self.cars_per_shaft < 1:
            raise ConfigError(f"cars_per_shaft must be >= 1, got {self.cars_per_shaft}")
        if self.num_floors < 2:
            raise ConfigError(f"num_floors must be >= 2, got {self.num_floors}")
        if self.num_floors <= self.cars_per_shaft:
            # at least one floor of travel room per car
            raise ConfigError(
                f"num_floors ({self.num_floors}) must exceed cars_per_shaft ({self.cars_per_shaft})"
            )
        if self.car_capacity < 1:
            raise ConfigError(f"car_capacity must be >= 1, got {self.car_capacity}")
        if not 0.0 <= self.arrival_rate <= 1.0:
            raise ConfigError(f"arrival_rate must lie in [0, 1], got {self.arrival_rate}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")


def load_sim_config(path: str | Path) -> tuple[BuildingConfig, int]:
    """Read a building config file; returns the config and ``t_max`` (default 1e6)."""
    raw = read_kv(path)
    t_max = int(float(raw.get("t_max", "1000000")))
    if t_max < 0:
        raise ConfigError(f"t_max must be >= 0, got {t_max}")
    return from_mapping(BuildingConfig, raw, ignore=("t_max",)), t_max


class CarId(NamedTuple):
    shaft: int
    car: int

    def __str__(self) -> str:
        return f"car_{self.shaft:02d}_{self.car:02d}"


class EventKind(str, enum.Enum):
    NEW = "New"
    ASSIGN = "Assign"
    LOAD = "Load"
    UNLOAD = "Unload"


@dataclass(frozen=True)
class LogEvent:
    time: int
    kind: EventKind
    call_id: int
    origin: Optional[int] = None
    destination: Optional[int] = None
    guests: Optional[int] = None
    car: Optional[CarId] = None
    overtravel: Optional[int] = None

    def __post_init__(self):
        new_fields = (self.origin, self.destination, self.guests)
        if self.kind is EventKind.NEW:
            ok = None not in new_fields and self.car is None and self.overtravel is None
        else:
            ok = all(v is None for v in new_fields) and self.car is not None
            ok = ok and ((self.overtravel is not None) == (self.kind is EventKind.UNLOAD))
        if not ok:
            raise ValueError(f"payload does not match event kind {self.kind.value}: {self!r}")


@dataclass
class Call:
    id: int
    origin: int
    destination: int
    guests: int
    t_new: int
    t_assign: Optional[int] = None
    t_load: Optional[int] = None
    t_unload: Optional[int] = None
    assigned_car: Optional[CarId] = None
    overtravel: Optional[int] = None
    load_odometer: Optional[int] = None


class Stop(NamedTuple):
    floor: int
    action: str  # "load" or "unload"
    call_id: int


@dataclass
class CarState:
    id: CarId
    position: int
    direction: str = "idle"
    load: int = 0
    itinerary: list[Stop] = field(default_factory=list)
    dwell: int = 0
    odometer: int = 0

    @property
    def idle(self) -> bool:
        return not self.itinerary

    def span(self) -> tuple[int, int]:
        floors = [self.position] + [s.floor for s in self.itinerary]
        return min(floors), max(floors)


@dataclass
class SimState:
    config: BuildingConfig
    shafts: list[list[CarState]]
    rng: random.Random = field(compare=False, repr=False)
    clock: int = 0
    pending: dict[int, Call] = field(default_factory=dict)
    active: dict[int, Call] = field(default_factory=dict)
    completed: dict[int, Call] = field(default_factory=dict)
    next_call_id: int = 1
    outbox: list[LogEvent] = field(default_factory=list)

    @property
    def cars(self) -> list[CarState]:
        return [car for shaft in self.shafts for car in shaft]

    def car(self, car_id: CarId) -> CarState:
        return self.shafts[car_id.shaft - 1][car_id.car - 1]


def new_simulation(config: BuildingConfig) -> SimState:
    shafts = [
        [CarState(CarId(s, k), position=k) for k in range(1, config.cars_per_shaft + 1)]
        for s in range(1, config.num_shafts + 1)
    ]
    return SimState(config=config, shafts=shafts, rng=random.Random(config.seed))


def _servable(config: BuildingConfig, origin: int, destination: int) -> bool:
    # car k of K is confined to floors k..F-K+k, so a trip needs span <= F-K
    return abs(origin - destination) <= config.num_floors - config.cars_per_shaft


def inject_call(state: SimState, origin: int, destination: int, guests: int) -> Call:
    """Create a call at the current clock, bypassing the random arrival process."""
    cfg = state.config
    if origin == destination or not (1 <= origin <= cfg.num_floors and 1 <= destination <= cfg.num_floors):
        raise ValueError(f"invalid trip {origin}->{destination} for {cfg.num_floors} floors")
    if not 1 <= guests <= cfg.car_capacity:
        raise ValueError(f"guests must lie in 1..{cfg.car_capacity}, got {guests}")
    if not _servable(cfg, origin, destination):
        raise ValueError(f"trip {origin}->{destination} is out of reach of every car")
    call = Call(state.next_call_id, origin, destination, guests, t_new=state.clock)
    state.next_call_id += 1
    state.pending[call.id] = call
    state.outbox.append(
        LogEvent(state.clock, EventKind.NEW, call.id, origin=origin, destination=destination, guests=guests)
    )
    return call


def maybe_generate_call(state: SimState) -> Optional[Call]:
    cfg = state.config
    rng = state.rng
    if rng.random() >= cfg.arrival_rate:
        return None
    floors = range(1, cfg.num_floors + 1)
    while True:
        origin, destination = rng.sample(floors, 2)
        if _servable(cfg, origin, destination):
            break
    guests = rng.randint(1, min(MAX_GUESTS, cfg.car_capacity))
    return inject_call(state, origin, destination, guests)


def _fits(state: SimState, car: CarState, call: Call) -> bool:
    cfg = state.config
    k, K, F = car.id.car, cfg.cars_per_shaft, cfg.num_floors
    lo, hi = car.span()
    lo = min(lo, call.origin, call.destination)
    hi = max(hi, call.origin, call.destination)
    if lo < k or hi > F - K + k:
        return False
    # load when the new pickup happens: everything queued before it has run
    load = car.load
    for stop in car.itinerary:
        guests = _guests(state, stop.call_id)
        load += guests if stop.action == "load" else -guests
    if load + call.guests > cfg.car_capacity:
        return False
    for other in state.shafts[car.id.shaft - 1]:
        if other is car or other.idle:
            continue
        olo, ohi = other.span()
        j = other.id.car
        if j < k and lo - ohi < k - j:
            return False
        if j > k and olo - hi < j - k:
            return False
    return True


def _guests(state: SimState, call_id: int) -> int:
    call = state.active.get(call_id) or state.pending[call_id]
    return call.guests


def pickup_eta(car: CarState, origin: int) -> int:
    """Ticks until ``car`` could start loading at ``origin`` after its queued stops."""
    t = 0
    pos = car.position
    for n, stop in enumerate(car.itinerary):
        if n == 0 and car.dwell > 0:
            t += car.dwell
        else:
            t += abs(stop.floor - pos) + DWELL_TICKS
        pos = stop.floor
    return t + abs(pos - origin)


def assign_call(state: SimState, call: Call) -> Optional[CarId]:
    """Greedy minimum-ETA assignment; returns None (call stays pending) if no car fits."""
    best = None
    for shaft in state.shafts:
        for car in shaft:
            if not _fits(state, car, call):
                continue
            key = (pickup_eta(car, call.origin), car.id.shaft, car.id.car)
            if best is None or key < best[0]:
                best = (key, car)
    if best is None:
        return None
    car = best[1]
    car.itinerary.append(Stop(call.origin, "load", call.id))
    car.itinerary.append(Stop(call.destination, "unload", call.id))
    call.t_assign = state.clock
    call.assigned_car = car.id
    del state.pending[call.id]
    state.active[call.id] = call
    state.outbox.append(LogEvent(state.clock, EventKind.ASSIGN, call.id, car=car.id))
    return car.id


def compute_overtravel(car: CarState, call: Call) -> int:
    """Floors travelled between load and unload beyond the direct distance."""
    travelled = car.odometer - call.load_odometer
    return max(0, travelled - abs(call.destination - call.origin))


def _move_shaft(state: SimState, shaft: list[CarState]) -> None:
    F = state.config.num_floors
    n = len(shaft)
    intent = [0] * n
    for i, car in enumerate(shaft):
        if car.itinerary and car.dwell == 0:
            target = car.itinerary[0].floor
            intent[i] = (target > car.position) - (target < car.position)
    if not any(intent):
        for car in shaft:
            car.direction = "idle"
        return
    # idle neighbours in the way yield, cascading along the shaft
    changed = True
    while changed:
        changed = False
        for i in range(n):
            if intent[i] == 1 and i + 1 < n:
                nb = shaft[i + 1]
                if nb.idle and intent[i + 1] == 0 and nb.position == shaft[i].position + 1:
                    intent[i + 1] = 1
                    changed = True
            elif intent[i] == -1 and i > 0:
                nb = shaft[i - 1]
                if nb.idle and intent[i - 1] == 0 and nb.position == shaft[i].position - 1:
                    intent[i - 1] = -1
                    changed = True
    moved = [0] * n
    for i in range(n - 1, -1, -1):
        if intent[i] == 1:
            limit = shaft[i + 1].position if i + 1 < n else F + 1
            if shaft[i].position + 1 < limit:
                shaft[i].position += 1
                moved[i] = 1
    for i in range(n):
        if intent[i] == -1:
            limit = shaft[i - 1].position if i > 0 else 0
            if shaft[i].position - 1 > limit:
                shaft[i].position -= 1
                moved[i] = -1
    for i, car in enumerate(shaft):
        car.odometer += abs(moved[i])
        car.direction = {1: "up", -1: "down", 0: "idle"}[moved[i]]
    _check_shaft(state, shaft)


def _check_shaft(state: SimState, shaft: list[CarState]) -> None:
    F = state.config.num_floors
    prev = 0
    for car in shaft:
        if not prev < car.position <= F:
            raise SimulationFault(f"t={state.clock}: shaft ordering violated at {car.id} (floor {car.position})")
        prev = car.position


def _service_stops(state: SimState, car: CarState) -> None:
    stop = car.itinerary[0]
    if car.dwell == 0:
        if car.position == stop.floor:
            car.dwell = DWELL_TICKS
        return
    car.dwell -= 1
    if car.dwell > 0:
        return
    car.itinerary.pop(0)
    call = state.active[stop.call_id]
    if stop.action == "load":
        car.load += call.guests
        if car.load > state.config.car_capacity:
            raise SimulationFault(f"t={state.clock}: {car.id} over capacity ({car.load})")
        call.t_load = state.clock
        call.load_odometer = car.odometer
        state.outbox.append(LogEvent(state.clock, EventKind.LOAD, call.id, car=car.id))
    else:
        car.load -= call.guests
        call.t_unload = state.clock
        call.overtravel = compute_overtravel(car, call)
        del state.active[call.id]
        state.completed[call.id] = call
        state.outbox.append(
            LogEvent(state.clock, EventKind.UNLOAD, call.id, car=car.id, overtravel=call.overtravel)
        )
    # a following stop on the same floor starts its dwell right away
    if car.itinerary and car.itinerary[0].floor == car.position:
        car.dwell = DWELL_TICKS


def step(state: SimState, *, generate: bool = True) -> list[LogEvent]:
    """Advance one tick and return the events emitted, in emission order."""
    state.clock += 1
    if generate:
        maybe_generate_call(state)
    if state.pending:
        for call in list(state.pending.values()):
            assign_call(state, call)
    if state.active:
        for shaft in state.shafts:
            _move_shaft(state, shaft)
        for shaft in state.shafts:
            for car in shaft:
                if car.itinerary:
                    _service_stops(state, car)
    events, state.outbox = state.outbox, []
    return events


def run(config: BuildingConfig, t_max: int, *, drain: bool = False) -> list[LogEvent]:
    """Simulate ``t_max`` ticks from a fresh state.

    Calls still in flight at the horizon are cut off. With ``drain=True`` the
    simulation keeps going without new arrivals until every call completes.
    """
    if t_max < 0:
        raise ValueError(f"t_max must be >= 0, got {t_max}")
    state = new_simulation(config)
    events: list[LogEvent] = []
    for _ in range(t_max):
        events.extend(step(state))
    if drain:
        events.extend(drain_calls(state))
    return events


def drain_calls(state: SimState, max_ticks: int = 1_000_000) -> list[LogEvent]:
    events: list[LogEvent] = []
    for _ in range(max_ticks):
        if not state.pending and not state.active:
            return events
        events.extend(step(state, generate=False))
    raise SimulationFault(f"calls still open after {max_ticks} drain ticks")
