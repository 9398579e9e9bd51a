"""Self-checkout session state machine.

A session moves Idle -> Weighing -> Classifying -> Presenting -> Printed.
The scale drives the first transitions: a load above the trigger threshold
starts weighing, three consecutive readings within a tight band fix the
stable weight and trigger identification. A label is printed only after an
explicit selection plus an explicit print request; nothing ever prints on
its own. Removing the item or cancelling returns to Idle from any state.

Money is integer cents internally; the half-up rounding to two decimals
happens exactly once, at label time, in decimal arithmetic.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from decimal import Decimal, ROUND_HALF_UP
from enum import Enum
from pathlib import Path
import json

from .errors import InvalidArgumentError, ParseError

TRIGGER_GRAMS = 25.0          # Idle -> Weighing above this
REMOVAL_GRAMS = 5.0           # below this the item is gone -> Idle
STABLE_WINDOW = 3             # consecutive readings needed
STABLE_BAND_GRAMS = 2.0       # max-min across the window
DRIFT_GRAMS = 50.0            # deviation from stable weight -> re-weigh
MAX_CANDIDATES = 3


class SessionState(str, Enum):
    IDLE = "idle"
    WEIGHING = "weighing"
    CLASSIFYING = "classifying"
    PRESENTING = "presenting"
    PRINTED = "printed"


class InvalidTransitionError(Exception):
    """Operation not allowed in the current state; carries an API code."""

    def __init__(self, message: str, code: str = "invalid_transition"):
        super().__init__(message)
        self.code = code


class NoSelectionError(InvalidTransitionError):
    def __init__(self):
        super().__init__(
            "No product selected yet. Tap a product to print its label.",
            code="no_selection",
        )


def cents_from_price(value) -> int:
    """Parse a price in currency units (number or string) to integer cents."""
    try:
        cents = int((Decimal(str(value)) * 100).to_integral_value(ROUND_HALF_UP))
    except ArithmeticError as exc:
        raise InvalidArgumentError(f"bad price {value!r}") from exc
    return cents


def format_cents(cents: int) -> str:
    if cents < 0:
        raise InvalidArgumentError("negative amount")
    return f"{cents // 100}.{cents % 100:02d}"


def total_price_cents(weight_g: float, price_cents_per_kg: int) -> int:
    """round_half_up(weight_g / 1000 * price, 2 decimals), done in cents."""
    total = Decimal(repr(float(weight_g))) * price_cents_per_kg / Decimal(1000)
    return int(total.to_integral_value(ROUND_HALF_UP))


@dataclass(frozen=True)
class Product:
    class_id: int
    display_name: str
    price_cents_per_kg: int
    frequent: bool = False

    def __post_init__(self):
        if not self.display_name:
            raise InvalidArgumentError("product display_name must be nonempty")
        if self.price_cents_per_kg <= 0:
            raise InvalidArgumentError(
                f"product {self.display_name!r} price must be positive"
            )

    @property
    def price_per_kg(self) -> str:
        return format_cents(self.price_cents_per_kg)


class Catalog:
    def __init__(self, products: list[Product]):
        self.products = list(products)
        self.by_id = {}
        for product in self.products:
            if product.class_id in self.by_id:
                raise InvalidArgumentError(f"duplicate class_id {product.class_id}")
            self.by_id[product.class_id] = product

    def __iter__(self):
        return iter(self.products)

    def __len__(self):
        return len(self.products)

    def frequent(self) -> list[Product]:
        return [p for p in self.products if p.frequent]


def load_catalog(path) -> Catalog:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"catalog is not valid JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(doc, list):
        raise ParseError("catalog must be a JSON array of products")
    products = []
    for entry in doc:
        try:
            products.append(Product(
                class_id=int(entry["class_id"]),
                display_name=entry["display_name"],
                price_cents_per_kg=cents_from_price(entry["price_per_kg"]),
                frequent=bool(entry.get("frequent", False)),
            ))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad catalog entry {entry!r}: {exc}") from exc
    return Catalog(products)


def save_catalog(catalog: Catalog, path) -> None:
    doc = [
        {"class_id": p.class_id, "display_name": p.display_name,
         "price_per_kg": p.price_per_kg, "frequent": p.frequent}
        for p in catalog
    ]
    Path(path).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")


_DEFAULT_PRICES = ("24.95", "39.90", "17.50", "32.00", "28.40",
                   "45.00", "21.90", "26.50", "12.95", "22.30")
_DEFAULT_FREQUENT = frozenset({"apple", "banana", "tomato", "potato", "orange", "pear"})


def default_catalog(class_names) -> Catalog:
    """A deterministic demo catalog covering the given classes."""
    products = []
    for idx, name in enumerate(class_names):
        products.append(Product(
            class_id=idx,
            display_name=name,
            price_cents_per_kg=cents_from_price(_DEFAULT_PRICES[idx % len(_DEFAULT_PRICES)]),
            frequent=name in _DEFAULT_FREQUENT,
        ))
    return Catalog(products)


@dataclass(frozen=True)
class ScaleReading:
    grams: float
    timestamp_ms: float

    def __post_init__(self):
        if self.grams < 0:
            raise InvalidArgumentError(f"negative scale reading {self.grams}")


@dataclass(frozen=True)
class LabelRecord:
    timestamp: str                # wall clock, ISO-8601
    class_id: int
    product_name: str
    weight_g: float
    price_cents_per_kg: int
    total_cents: int
    session_id: str

    def to_doc(self) -> dict:
        return {
            "timestamp": self.timestamp,
            "class_id": self.class_id,
            "name": self.product_name,
            "weight_g": self.weight_g,
            "price_per_kg": format_cents(self.price_cents_per_kg),
            "total_price": format_cents(self.total_cents),
            "session_id": self.session_id,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "LabelRecord":
        return cls(
            timestamp=doc["timestamp"],
            class_id=doc["class_id"],
            product_name=doc["name"],
            weight_g=doc["weight_g"],
            price_cents_per_kg=cents_from_price(doc["price_per_kg"]),
            total_cents=cents_from_price(doc["total_price"]),
            session_id=doc["session_id"],
        )


@dataclass
class Clock:
    """Injected time sources: monotonic milliseconds and wall-clock datetimes."""

    monotonic_ms: callable = lambda: time.monotonic() * 1000.0
    wall_now: callable = lambda: datetime.now(timezone.utc)


SYSTEM_CLOCK = Clock()

_session_counter = itertools.count(1)


@dataclass
class KioskSession:
    session_id: str = field(default_factory=lambda: f"session-{next(_session_counter):06d}")
    state: SessionState = SessionState.IDLE
    stable_weight_g: float | None = None
    candidates: list[tuple[Product, float]] | None = None
    selected: Product | None = None
    label: LabelRecord | None = None
    started_at_ms: float | None = None
    printed_at_ms: float | None = None
    error_note: str | None = None
    epoch: int = 0
    window: list[float] = field(default_factory=list)

    # -- scale events --------------------------------------------------------

    def _to_idle(self) -> None:
        self.state = SessionState.IDLE
        self.stable_weight_g = None
        self.candidates = None
        self.selected = None
        self.label = None
        self.started_at_ms = None
        self.printed_at_ms = None
        self.error_note = None
        self.window = []
        self.epoch += 1

    def _restart_weighing(self, grams: float) -> None:
        self.state = SessionState.WEIGHING
        self.stable_weight_g = grams
        self.candidates = None
        self.selected = None
        self.window = [grams]
        self.epoch += 1

    def on_scale_reading(self, reading: ScaleReading) -> "KioskSession":
        grams = reading.grams
        if grams < REMOVAL_GRAMS:
            # item removed: the physical exit works from every state
            self._to_idle()
            return self

        if self.state == SessionState.IDLE:
            if grams > TRIGGER_GRAMS:
                self.state = SessionState.WEIGHING
                self.started_at_ms = reading.timestamp_ms
                self.stable_weight_g = grams
                self.window = [grams]
            return self

        if self.state == SessionState.WEIGHING:
            self.window.append(grams)
            self.window = self.window[-STABLE_WINDOW:]
            self.stable_weight_g = grams
            if (len(self.window) == STABLE_WINDOW
                    and max(self.window) - min(self.window) <= STABLE_BAND_GRAMS):
                self.stable_weight_g = sum(self.window) / STABLE_WINDOW
                self.state = SessionState.CLASSIFYING
                self.window = []
            return self

        if self.state in (SessionState.CLASSIFYING, SessionState.PRESENTING):
            if abs(grams - self.stable_weight_g) > DRIFT_GRAMS:
                self._restart_weighing(grams)
            return self

        # PRINTED: the session only ends by removal, handled above
        return self

    # -- identification ------------------------------------------------------

    def deliver_classification(self, epoch: int, ranking=None, error: str | None = None,
                               catalog: Catalog | None = None) -> bool:
        """Apply an identification outcome; stale or misplaced results are
        dropped (epoch or state no longer match). Returns True if applied."""
        if epoch != self.epoch or self.state != SessionState.CLASSIFYING:
            return False
        if error is not None:
            self.state = SessionState.WEIGHING
            self.window = []
            self.error_note = error
            return True
        candidates = []
        for class_id, score in ranking:
            product = catalog.by_id.get(class_id)
            if product is not None:
                candidates.append((product, float(score)))
            if len(candidates) == MAX_CANDIDATES:
                break
        self.candidates = candidates
        self.error_note = None
        self.state = SessionState.PRESENTING
        return True

    def start_identification(self, image, classifier, catalog: Catalog) -> "KioskSession":
        """Run the classifier on the captured image and present the top
        candidates. Printing still requires an explicit select + print."""
        if self.state != SessionState.CLASSIFYING:
            raise InvalidTransitionError(
                f"cannot identify in state {self.state.value!r}"
            )
        epoch = self.epoch
        try:
            result = classifier(image)
        except Exception as exc:
            self.deliver_classification(epoch, error=f"identification failed: {exc}")
            return self
        self.deliver_classification(epoch, ranking=result.ranking, catalog=catalog)
        return self

    # -- selection and label -------------------------------------------------

    def select_product(self, class_id: int, catalog: Catalog) -> "KioskSession":
        """Select a candidate, or any catalog product via search/default page."""
        if self.state != SessionState.PRESENTING:
            raise InvalidTransitionError(
                f"cannot select a product in state {self.state.value!r}"
            )
        product = catalog.by_id.get(class_id)
        if product is None:
            raise InvalidArgumentError(f"unknown product class_id {class_id}")
        self.selected = product
        return self

    def print_label(self, clock: Clock = SYSTEM_CLOCK) -> LabelRecord:
        if self.state != SessionState.PRESENTING:
            raise InvalidTransitionError(
                f"cannot print in state {self.state.value!r}"
            )
        if self.selected is None:
            raise NoSelectionError()
        product = self.selected
        weight = float(self.stable_weight_g)
        label = LabelRecord(
            timestamp=clock.wall_now().isoformat(),
            class_id=product.class_id,
            product_name=product.display_name,
            weight_g=weight,
            price_cents_per_kg=product.price_cents_per_kg,
            total_cents=total_price_cents(weight, product.price_cents_per_kg),
            session_id=self.session_id,
        )
        self.label = label
        self.printed_at_ms = clock.monotonic_ms()
        self.state = SessionState.PRINTED
        return label

    def cancel(self) -> "KioskSession":
        """Clearly marked exit: back to Idle from anywhere, even mid-identify."""
        self._to_idle()
        return self

    def session_duration(self) -> float:
        """Seconds from the reading that left Idle to the label print."""
        if self.state != SessionState.PRINTED:
            raise InvalidTransitionError(
                f"duration is defined once printed, not in {self.state.value!r}"
            )
        return (self.printed_at_ms - self.started_at_ms) / 1000.0


def search_products(catalog: Catalog, query: str) -> list[Product]:
    """Case-insensitive substring search; prefix matches outrank interior
    ones, ties alphabetical. An empty query lists the frequent products."""
    query = (query or "").strip().lower()
    if not query:
        return catalog.frequent()
    prefix, interior = [], []
    for product in catalog:
        name = product.display_name.lower()
        pos = name.find(query)
        if pos == 0:
            prefix.append(product)
        elif pos > 0:
            interior.append(product)
    prefix.sort(key=lambda p: p.display_name)
    interior.sort(key=lambda p: p.display_name)
    return prefix + interior


# -- label journal ------------------------------------------------------------

def append_label(path, label: LabelRecord) -> None:
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(label.to_doc(), separators=(",", ":")) + "\n")


def read_labels(path) -> list[LabelRecord]:
    path = Path(path)
    if not path.exists():
        return []
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(LabelRecord.from_doc(json.loads(line)))
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise ParseError(f"bad label line {line_no}: {exc}") from exc
    return labels
