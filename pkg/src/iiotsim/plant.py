"""Physical-process and device models.

Bounded random-walk sensor engines, latching actuators, and a PLC running a
deterministic scan cycle with a single threshold function block. Each sensor
walks on its own seeded stream, so unrelated traffic can never perturb the
process values.
"""

from dataclasses import dataclass

from . import fieldbus

TMP36_MIN_C = -40.0
TMP36_MAX_C = 125.0


def tmp36_voltage(celsius: float) -> float:
    """TMP36 transfer function: 0 degC reads 0.5 V, 10 mV per degree."""
    if not TMP36_MIN_C <= celsius <= TMP36_MAX_C:
        raise ValueError(f"celsius {celsius} outside TMP36 range")
    return 0.5 + celsius / 100.0


def tmp36_celsius(volts: float) -> float:
    c = (volts - 0.5) * 100.0
    if not TMP36_MIN_C - 1e-9 <= c <= TMP36_MAX_C + 1e-9:
        raise ValueError(f"voltage {volts} outside TMP36 range")
    return c


@dataclass
class SensorModel:
    """Bounded random walk in engineering units."""

    sensor_id: str
    kind: str                  # tmp36 | ds18b20 | mpl-temp | mpl-pressure | sim-*
    lo: float
    hi: float
    walk_step: float
    value: float
    running: bool = True

    def __post_init__(self):
        if not self.lo <= self.value <= self.hi:
            raise ValueError(f"{self.sensor_id}: initial value outside range")

    def tick(self, rng) -> float:
        step = rng.uniform(-self.walk_step, self.walk_step)
        self.value = min(self.hi, max(self.lo, self.value + step))
        return self.value


@dataclass
class Actuator:
    actuator_id: str
    state: str = "OFF"
    last_command_ts: int = 0


class Plant:
    """Owns sensors and actuators; ticked on a fixed cadence by the sim."""

    def __init__(self, sim, tick_period_us: int = 1_000_000):
        self.sim = sim
        self.tick_period_us = tick_period_us
        self.sensors: dict[str, SensorModel] = {}
        self.actuators: dict[str, Actuator] = {}
        self.actuator_events: list = []          # (ts, id, state, source)
        self.on_actuator_command = None          # hook(event tuple)

    def add_sensor(self, sensor: SensorModel) -> SensorModel:
        self.sensors[sensor.sensor_id] = sensor
        return sensor

    def add_actuator(self, actuator_id: str) -> Actuator:
        act = Actuator(actuator_id)
        self.actuators[actuator_id] = act
        return act

    def tick(self) -> None:
        for sid in sorted(self.sensors):
            s = self.sensors[sid]
            if s.running:
                s.tick(self.sim.rng(f"plant/{sid}"))

    def start(self) -> None:
        def loop():
            self.tick()
            self.sim.schedule_periodic(self.tick_period_us, loop)
        self.sim.schedule_periodic(self.tick_period_us, loop)

    def actuator_command(self, actuator_id: str, state: str, source: str) -> Actuator:
        act = self.actuators.get(actuator_id)
        if act is None:
            raise KeyError(f"unknown actuator {actuator_id!r}")
        if state not in ("ON", "OFF"):
            raise ValueError(f"bad actuator state {state!r}")
        act.state = state
        act.last_command_ts = self.sim.now_us
        event = (self.sim.now_us, actuator_id, state, source)
        self.actuator_events.append(event)
        if self.on_actuator_command:
            self.on_actuator_command(event)
        return act


PLC_INPUT_REGISTER = 100
PLC_SETPOINT_REGISTER = 101
PLC_OUTPUT_COIL = 0
DOS_LOAD_REF_PER_S = 500.0    # request rate at which scan jitter saturates


class Plc:
    """Threshold controller: scaled input register, writable setpoint, one coil.

    Registers store round(celsius * 10) so a 16-bit register carries one
    decimal. The scan keeps running under external MODBUS load; load only
    perturbs the scan period by a bounded fraction (<= 10%).
    """

    def __init__(self, sim, plant: Plant, input_sensor: SensorModel,
                 actuator_id: str, plc_id: str = "plc",
                 scan_period_us: int = 100_000, setpoint_c: float = 30.0,
                 scan_phase_us: int = 13_000):
        self.sim = sim
        self.plant = plant
        self.input_sensor = input_sensor
        self.actuator_id = actuator_id
        self.plc_id = plc_id
        self.scan_period_us = scan_period_us
        self.scan_phase_us = scan_phase_us
        self.registers = {PLC_INPUT_REGISTER: self._scale(input_sensor.value),
                          PLC_SETPOINT_REGISTER: self._scale(setpoint_c)}
        self.coils = {PLC_OUTPUT_COIL: False}
        self.input_reachable = True
        self.fault = False
        self.scan_log: list = []         # (ts, input_value_x10, coil)
        self.serial_log: list = []       # (ts, request bytes, response bytes)
        self._serial_tid = 0
        self._request_times: list = []   # external request arrivals (for load)
        self._rng = sim.rng(f"plc/{plc_id}")

    @staticmethod
    def _scale(celsius: float) -> int:
        return int(round(celsius * 10)) & 0xFFFF

    @property
    def setpoint_c(self) -> float:
        return self.registers[PLC_SETPOINT_REGISTER] / 10.0

    def note_request(self) -> None:
        """Called by the MODBUS slave for every external request."""
        self._request_times.append(self.sim.now_us)

    def _load_factor(self) -> float:
        horizon = self.sim.now_us - 1_000_000
        while self._request_times and self._request_times[0] < horizon:
            self._request_times.pop(0)
        return min(1.0, len(self._request_times) / DOS_LOAD_REF_PER_S)

    def _serial_read_input(self) -> None:
        """MODBUS-serial semantics toward the I/O slave carrying the sensor."""
        self._serial_tid = (self._serial_tid + 1) & 0xFFFF
        req = fieldbus.ModbusAdu(self._serial_tid, 1,
                                 fieldbus.READ_HOLDING_REGISTERS, 0, 1)
        resp = fieldbus.ModbusAdu(self._serial_tid, 1,
                                  fieldbus.READ_HOLDING_REGISTERS,
                                  data=(self.registers[PLC_INPUT_REGISTER],),
                                  count_or_value=1)
        self.serial_log.append((self.sim.now_us, fieldbus.encode_request(req),
                                fieldbus.encode_response(resp)))

    def _serial_write_coil(self, on: bool) -> None:
        self._serial_tid = (self._serial_tid + 1) & 0xFFFF
        value = fieldbus.COIL_ON if on else fieldbus.COIL_OFF
        req = fieldbus.ModbusAdu(self._serial_tid, 1,
                                 fieldbus.WRITE_SINGLE_COIL, PLC_OUTPUT_COIL,
                                 value)
        resp = fieldbus.ModbusAdu(self._serial_tid, 1,
                                  fieldbus.WRITE_SINGLE_COIL, PLC_OUTPUT_COIL,
                                  value)
        self.serial_log.append((self.sim.now_us, fieldbus.encode_request(req),
                                fieldbus.encode_response(resp)))

    def scan(self) -> tuple:
        if self.input_reachable:
            volts = tmp36_voltage(self.input_sensor.value)
            celsius = tmp36_celsius(volts)
            self.registers[PLC_INPUT_REGISTER] = self._scale(celsius)
            self.fault = False
        else:
            self.fault = True   # keep the previous input value
        self._serial_read_input()
        value = self.registers[PLC_INPUT_REGISTER]
        setpoint = self.registers[PLC_SETPOINT_REGISTER]
        coil_on = value > setpoint
        prev = self.coils[PLC_OUTPUT_COIL]
        self.coils[PLC_OUTPUT_COIL] = coil_on
        if coil_on != prev:
            self._serial_write_coil(coil_on)
            self.plant.actuator_command(self.actuator_id,
                                        "ON" if coil_on else "OFF", "PLC")
        result = (self.sim.now_us, value, coil_on)
        self.scan_log.append(result)
        return result

    def start(self) -> None:
        def loop():
            self.scan()
            jitter = self._rng.uniform(-0.10, 0.10) * self._load_factor()
            self.sim.schedule_periodic(int(self.scan_period_us * (1.0 + jitter)),
                                       loop)
        self.sim.schedule_periodic(self.scan_phase_us, loop)

    # -- MODBUS slave table ------------------------------------------------
    def handle_modbus(self, request: fieldbus.ModbusAdu) -> fieldbus.ModbusAdu:
        self.note_request()
        fn = request.function
        if fn == fieldbus.READ_HOLDING_REGISTERS:
            regs = []
            for a in range(request.address, request.address + request.count_or_value):
                if a not in self.registers:
                    return fieldbus.exception_response(
                        request, fieldbus.EXC_ILLEGAL_DATA_ADDRESS)
                regs.append(self.registers[a])
            return fieldbus.ModbusAdu(request.transaction_id, request.unit_id,
                                      fn, data=tuple(regs),
                                      count_or_value=len(regs))
        if fn == fieldbus.WRITE_SINGLE_REGISTER:
            if request.address not in self.registers:
                return fieldbus.exception_response(
                    request, fieldbus.EXC_ILLEGAL_DATA_ADDRESS)
            self.registers[request.address] = request.count_or_value
            return fieldbus.ModbusAdu(request.transaction_id, request.unit_id,
                                      fn, request.address,
                                      request.count_or_value)
        if fn == fieldbus.WRITE_SINGLE_COIL:
            if request.address != PLC_OUTPUT_COIL:
                return fieldbus.exception_response(
                    request, fieldbus.EXC_ILLEGAL_DATA_ADDRESS)
            self.coils[PLC_OUTPUT_COIL] = request.count_or_value == fieldbus.COIL_ON
            return fieldbus.ModbusAdu(request.transaction_id, request.unit_id,
                                      fn, request.address,
                                      request.count_or_value)
        return fieldbus.exception_response(request, 1)


def modbus_transact(host, slave_ip, request, on_response, port=502,
                    proto_tag="MODBUS", timeout_us=2_000_000):
    """One MODBUS/TCP transaction over the fabric.

    Opens a connection, sends the encoded request, and calls
    on_response(adu) with the decoded reply (or None on refusal, timeout or
    a garbled reply). The request/response pair lands in the capture with a
    matching transaction id.
    """
    stream = host.open_tcp(slave_ip, port, proto_tag)
    state = {"done": False}

    def finish(result):
        if not state["done"]:
            state["done"] = True
            on_response(result)

    def on_established(s):
        s.write("client", fieldbus.encode_request(request))

    def on_data(s, raw):
        try:
            response = fieldbus.decode_response(raw)
        except fieldbus.ModbusCodecError:
            response = None
        s.close("client")
        finish(response)

    def timeout_check():
        if not state["done"] and stream.state == "connecting":
            finish(None)

    stream.on_established = on_established
    stream.on_data = on_data
    stream.on_refused = lambda s: finish(None)
    host.sim.schedule(timeout_us, timeout_check)
    return stream


class ModbusSlaveService:
    """Fabric TCP service wrapping a register-table handler (the PLC)."""

    def __init__(self, sim, handler, service_time_us: int = 10_000):
        self.sim = sim
        self.handler = handler            # fn(ModbusAdu) -> ModbusAdu
        self.service_time_us = service_time_us

    def on_open(self, stream):
        pass

    def on_data(self, stream, data: bytes):
        try:
            request = fieldbus.decode_request(data)
        except fieldbus.ModbusCodecError:
            return
        response = self.handler(request)
        raw = fieldbus.encode_response(response)
        def reply():
            if stream.state == "established":
                stream.write("server", raw)
        self.sim.schedule(self.service_time_us, reply)


class MplDevice:
    """I2C adapter: renders the paired temperature/pressure walk as the
    six-byte register block starting at OUT_P_MSB (0x01)."""

    BLOCK_REGISTER = 0x01

    def __init__(self, temp_sensor: SensorModel, pressure_sensor: SensorModel):
        self.temp_sensor = temp_sensor
        self.pressure_sensor = pressure_sensor

    def read_block(self, register: int, n: int) -> bytes:
        block = fieldbus.mpl_encode(self.temp_sensor.value,
                                    self.pressure_sensor.value)
        return block[:n] if n <= len(block) else block + bytes(n - len(block))


class Ds18b20Device:
    """1-wire adapter over a sensor walk."""

    def __init__(self, sensor: SensorModel):
        self.sensor = sensor

    @property
    def value(self) -> float:
        return self.sensor.value
