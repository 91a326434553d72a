"""Time-series historian shared by the edge gateway and the cloud tier."""

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

CSV_HEADER = ("Record_ID", "Time", "Device_ID", "Device_Type", "Measurement",
              "Function", "Content_Type")

DEFAULT_EPOCH = datetime(2019, 7, 18, 6, 0, 0, tzinfo=timezone.utc)


def iso_ms(epoch: datetime, ts_us: int) -> str:
    t = epoch + timedelta(microseconds=ts_us)
    return t.strftime("%Y-%m-%dT%H:%M:%S.") + f"{t.microsecond // 1000:03d}Z"


def parse_iso(epoch: datetime, text: str) -> int:
    """ISO-8601 UTC text -> simulated microseconds relative to epoch."""
    t = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return round((t - epoch).total_seconds() * 1_000_000)


@dataclass
class TelemetryRecord:
    record_id: int
    ts_us: int
    time_iso: str
    device_id: str
    device_type: str
    measurement: float
    function: str
    content_type: str

    def csv_row(self):
        return (self.record_id, self.time_iso, self.device_id,
                self.device_type, repr(self.measurement), self.function,
                self.content_type)


class Historian:
    """Append-only store with gapless, strictly increasing record ids."""

    def __init__(self, epoch: datetime = DEFAULT_EPOCH):
        self.epoch = epoch
        self.rows: list[TelemetryRecord] = []
        self._next_id = 1

    def insert(self, ts_us: int, device_id: str, device_type: str,
               measurement: float, function: str, content_type: str) -> int:
        rec = TelemetryRecord(self._next_id, ts_us, iso_ms(self.epoch, ts_us),
                              device_id, device_type, float(measurement),
                              function, content_type)
        self._next_id += 1
        self.rows.append(rec)
        return rec.record_id

    def query(self, device_id: str | None = None, device_type: str | None = None,
              content_type: str | None = None, t0: str | int | None = None,
              t1: str | int | None = None) -> list[TelemetryRecord]:
        """Filter by device / type / content and closed time interval [t0, t1].

        Interval bounds accept ISO text or raw microseconds; an inverted
        interval yields an empty result (flagged on self.last_warning).
        """
        self.last_warning = ""
        lo = self._bound(t0)
        hi = self._bound(t1)
        if lo is not None and hi is not None and lo > hi:
            self.last_warning = f"inverted interval: {t0!r} > {t1!r}"
            return []
        out = []
        for r in self.rows:
            if device_id is not None and r.device_id != device_id:
                continue
            if device_type is not None and r.device_type != device_type:
                continue
            if content_type is not None and r.content_type != content_type:
                continue
            if lo is not None and r.ts_us < lo:
                continue
            if hi is not None and r.ts_us > hi:
                continue
            out.append(r)
        out.sort(key=lambda r: (r.ts_us, r.record_id))
        return out

    def _bound(self, value):
        if value is None:
            return None
        if isinstance(value, str):
            return parse_iso(self.epoch, value)
        return int(value)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for r in self.rows:
                w.writerow(r.csv_row())
