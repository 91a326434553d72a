"""Scripted attack injectors with ground-truth windows for labeling.

Each injector drives the fabric like a real tool would (gratuitous ARP,
MODBUS read floods, rogue MQTT subscriptions, SYN scans, a webgui exploit
with reverse shells) and emits an AttackWindow covering its activity.
"""

import json
from dataclasses import dataclass, field

from . import fieldbus
from .cloud import MqttClient, decode_packet, encode_packet
from .netsim import ArpFailure

ARP_SPOOF = "arp_spoof"
TAMPER = "tamper"
LOG_TAMPER = "log_tamper"
I2C_SNIFF = "i2c_sniff"
MODBUS_DOS = "modbus_dos"
ROGUE_SUBSCRIBER = "rogue_subscriber"
RECON = "recon"
EXPLOIT = "exploit"
REVERSE_SHELL = "reverse_shell"


@dataclass
class AttackWindow:
    """Ground truth for one attack: [t_start, t_end] covers every attacker
    frame; effect_* narrows to when the manipulation is actually live at the
    victim (cache poisoned until cache restored)."""

    kind: str
    t_start_us: int
    t_end_us: int
    attacker: str
    victims: tuple
    effect_start_us: int | None = None
    effect_end_us: int | None = None

    @property
    def effect(self) -> tuple:
        start = self.t_start_us if self.effect_start_us is None else self.effect_start_us
        end = self.t_end_us if self.effect_end_us is None else self.effect_end_us
        return start, end

    def overlaps(self, lo_us: int, hi_us: int) -> bool:
        return self.t_start_us <= hi_us and lo_us <= self.t_end_us

    def to_json(self) -> dict:
        return {"kind": self.kind, "t_start_us": self.t_start_us,
                "t_end_us": self.t_end_us, "attacker": self.attacker,
                "victims": list(self.victims),
                "effect_start_us": self.effect_start_us,
                "effect_end_us": self.effect_end_us}


def write_windows_jsonl(windows, path) -> None:
    with open(path, "w") as fh:
        for w in sorted(windows, key=lambda w: w.t_start_us):
            fh.write(json.dumps(w.to_json()) + "\n")


def read_windows_jsonl(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                d = json.loads(line)
                out.append(AttackWindow(d["kind"], d["t_start_us"],
                                        d["t_end_us"], d["attacker"],
                                        tuple(d["victims"]),
                                        d.get("effect_start_us"),
                                        d.get("effect_end_us")))
    return out


# ---------------------------------------------------------------------------
# Spoofing / tampering: ARP cache poisoning with a pass-through MITM
# ---------------------------------------------------------------------------

def scale_measurement_transform(k: float):
    """Rewrite MQTT PUBLISH telemetry in flight: Measurement *= k."""

    def transform(payload: bytes) -> bytes:
        try:
            pkt = decode_packet(payload)
        except (ValueError, UnicodeDecodeError):
            return payload
        if pkt.get("type") != "PUBLISH" or pkt.get("topic", "").startswith("$"):
            return payload
        try:
            body = json.loads(pkt.get("payload", ""))
        except ValueError:
            return payload
        if not isinstance(body, dict) or "Measurement" not in body:
            return payload
        if isinstance(body["Measurement"], (int, float)):
            body["Measurement"] = body["Measurement"] * k
            pkt["payload"] = json.dumps(body)
        return encode_packet(pkt)

    return transform


class ArpSpoof:
    """Poison two victims' caches for each other's IP and forward in the
    middle; restores the true bindings when the window closes."""

    def __init__(self, sim, attacker, victim_a, victim_b, t_start_us,
                 duration_us, poison_period_us=2_000_000, transform=None,
                 kind=ARP_SPOOF):
        self.sim = sim
        self.attacker = attacker
        self.victim_a = victim_a
        self.victim_b = victim_b
        self.t_start_us = int(t_start_us)
        self.t_end_us = int(t_start_us + duration_us)
        self.poison_period_us = poison_period_us
        self.transform = transform
        self.kind = kind
        self.segment = self._shared_segment()
        self.window = AttackWindow(kind, self.t_start_us, self.t_end_us,
                                   attacker.host_id,
                                   (victim_a.host_id, victim_b.host_id))

    def _shared_segment(self) -> str:
        segs_a = {i.segment for i in self.victim_a.interfaces}
        segs_b = {i.segment for i in self.victim_b.interfaces}
        segs_att = {i.segment for i in self.attacker.interfaces}
        shared = segs_a & segs_b & segs_att
        if not shared:
            raise ValueError("attacker and victims must share a segment")
        return sorted(shared)[0]

    def schedule(self) -> AttackWindow:
        self.sim.schedule_at(self.t_start_us, self._begin)
        return self.window

    def _begin(self):
        self.window.t_start_us = self.sim.now_us
        # learn the true bindings first so forwarding works
        a_if = self.victim_a.iface_for_segment(self.segment)
        b_if = self.victim_b.iface_for_segment(self.segment)
        try:
            self.attacker.arp_resolve(a_if.ip)
            self.attacker.arp_resolve(b_if.ip)
        except ArpFailure:
            return
        self.attacker.mitm_handler = self._forward
        self._poison()

    def _poison(self):
        if self.sim.now_us >= self.t_end_us:
            self._restore()
            return
        att_mac = self.attacker.iface_for_segment(self.segment).mac
        a_if = self.victim_a.iface_for_segment(self.segment)
        b_if = self.victim_b.iface_for_segment(self.segment)
        f1 = self.attacker.send_gratuitous_arp(self.victim_a, b_if.ip, att_mac,
                                               self.segment)
        f2 = self.attacker.send_gratuitous_arp(self.victim_b, a_if.ip, att_mac,
                                               self.segment)
        if self.window.effect_start_us is None:
            # effective once victim_a's cache holds the forged binding
            self.window.effect_start_us = f1.deliver_ts_us or f1.ts_us
        self.sim.schedule(self.poison_period_us, self._poison)

    def _restore(self):
        a_if = self.victim_a.iface_for_segment(self.segment)
        b_if = self.victim_b.iface_for_segment(self.segment)
        f1 = self.attacker.send_gratuitous_arp(self.victim_a, b_if.ip,
                                               b_if.mac, self.segment)
        f2 = self.attacker.send_gratuitous_arp(self.victim_b, a_if.ip,
                                               a_if.mac, self.segment)
        self.window.effect_end_us = f1.deliver_ts_us or f1.ts_us
        self.window.t_end_us = max(f1.deliver_ts_us or f1.ts_us,
                                   f2.deliver_ts_us or f2.ts_us) + 1

    def _forward(self, frame):
        payload = frame.payload
        if self.transform is not None:
            payload = self.transform(payload)
        self.attacker.forward_packet(frame, payload=payload)


# ---------------------------------------------------------------------------
# Repudiation: post-exploit system-log tampering
# ---------------------------------------------------------------------------

def log_tamper(sim, attacker, target_host, webgui, predicate: str,
               ts_us: int | None = None) -> AttackWindow:
    """Delete target syslog entries containing `predicate`.

    Requires a shell foothold from a prior exploit; the fabric's ground-truth
    shadow keeps every entry, so the deletion is provable by diff.
    """
    if attacker.host_id not in webgui.footholds and (
            attacker.iface_for_segment(attacker.interfaces[0].segment).ip
            not in webgui.footholds):
        raise PermissionError("log_tamper needs a shell foothold on the target")
    now = sim.now_us if ts_us is None else ts_us
    if predicate:
        kept = [e for e in target_host.syslog if predicate not in e[1]]
        deleted = len(target_host.syslog) - len(kept)
        target_host.syslog[:] = kept
    else:
        deleted = 0
    window = AttackWindow(LOG_TAMPER, now, now, attacker.host_id,
                          (target_host.host_id,))
    window.deleted = deleted
    return window


# ---------------------------------------------------------------------------
# Information disclosure: I2C bus sniffing
# ---------------------------------------------------------------------------

class I2cSniffer:
    def __init__(self, sim, bus, t_start_us, duration_us, attacker_id="attacker"):
        self.sim = sim
        self.bus = bus
        self.t_start_us = int(t_start_us)
        self.t_end_us = int(t_start_us + duration_us)
        self.attacker_id = attacker_id
        self.lines: list[str] = []
        self.window = AttackWindow(I2C_SNIFF, self.t_start_us, self.t_end_us,
                                   attacker_id, (bus.bus_id,))

    def schedule(self) -> AttackWindow:
        self.bus.attach_sniffer(self._observe)
        return self.window

    def _observe(self, ts_us, trace):
        if self.t_start_us <= ts_us < self.t_end_us:
            self.lines.append(trace)

    def extracted_values(self) -> list:
        """mpl_decode every complete 6-byte read in the sniffed window."""
        out = []
        for line in self.lines:
            txn = fieldbus.parse_trace(line)
            if txn.acked and len(txn.data) == 6:
                sample = fieldbus.mpl_decode(bytes(txn.data))
                out.append((sample.celsius, sample.kilopascal))
        return out


# ---------------------------------------------------------------------------
# DoS: MODBUS read flood against the PLC
# ---------------------------------------------------------------------------

class ModbusFlood:
    def __init__(self, sim, attacker, plc_ip, rate_per_s, addr_lo, addr_hi,
                 t_start_us, duration_us, reqs_per_conn=10):
        if rate_per_s <= 0:
            raise ValueError("flood rate must be positive")
        self.sim = sim
        self.attacker = attacker
        self.plc_ip = plc_ip
        self.rate_per_s = rate_per_s
        self.addr_lo = addr_lo
        self.addr_hi = addr_hi
        self.t_start_us = int(t_start_us)
        self.duration_us = int(duration_us)
        self.reqs_per_conn = reqs_per_conn
        self.requests_sent = 0
        self._conns: dict = {}
        self.window = AttackWindow(MODBUS_DOS, self.t_start_us,
                                   self.t_start_us + self.duration_us + 500_000,
                                   attacker.host_id, (plc_ip,))

    def schedule(self) -> AttackWindow:
        n = int(self.rate_per_s * self.duration_us / 1_000_000)
        period = 1_000_000 / self.rate_per_s
        for i in range(n):
            ts = self.t_start_us + int(i * period)
            self.sim.schedule_at(ts, lambda i=i: self._fire(i))
        return self.window

    def _fire(self, i):
        conn_idx = i // self.reqs_per_conn
        slot = i % self.reqs_per_conn
        if slot == 0:
            self._open_conn(conn_idx)
        conn = self._conns[conn_idx]
        addr = self.addr_lo + (i % max(1, self.addr_hi - self.addr_lo + 1))
        request = fieldbus.ModbusAdu((i + 1) & 0xFFFF, 1,
                                     fieldbus.READ_HOLDING_REGISTERS, addr, 1)
        raw = fieldbus.encode_request(request)
        if conn["stream"].state == "established":
            conn["stream"].write("client", raw)
            self.requests_sent += 1
        else:
            conn["backlog"].append(raw)
        if slot == self.reqs_per_conn - 1:
            self.sim.schedule(100_000, lambda: self._close_conn(conn_idx))

    def _open_conn(self, conn_idx):
        stream = self.attacker.open_tcp(self.plc_ip, 502, "MODBUS")
        conn = {"stream": stream, "backlog": []}
        self._conns[conn_idx] = conn

        def on_established(s):
            for raw in conn["backlog"]:
                s.write("client", raw)
                self.requests_sent += 1
            conn["backlog"].clear()

        stream.on_established = on_established

    def _close_conn(self, conn_idx):
        conn = self._conns.get(conn_idx)
        if conn and conn["stream"].state == "established":
            conn["stream"].close("client")


# ---------------------------------------------------------------------------
# Elevation of privilege: rogue MQTT subscriber
# ---------------------------------------------------------------------------

class RogueSubscriber:
    """Reconnecting subscriber script; collects 'topic: payload' lines."""

    def __init__(self, sim, attacker, broker_ip, filters, t_start_us,
                 duration_us, cycle_us=4_000_000):
        self.sim = sim
        self.attacker = attacker
        self.broker_ip = broker_ip
        self.filters = list(filters)
        self.t_start_us = int(t_start_us)
        self.t_end_us = int(t_start_us + duration_us)
        self.cycle_us = cycle_us
        self.transcript: list[str] = []
        self.refused = False
        self._client = None
        self._cycle_n = 0
        self.window = AttackWindow(ROGUE_SUBSCRIBER, self.t_start_us,
                                   self.t_end_us, attacker.host_id,
                                   (broker_ip,))

    def schedule(self) -> AttackWindow:
        self.sim.schedule_at(self.t_start_us, self._cycle)
        return self.window

    def _cycle(self):
        if self.sim.now_us >= self.t_end_us:
            return
        self._cycle_n += 1
        client = MqttClient(self.sim, self.attacker, self.broker_ip,
                            f"rogue-{self._cycle_n}")
        self._client = client
        client.on_message = lambda topic, payload: self.transcript.append(
            f"{topic}: {payload}")
        client.on_connected = lambda c: c.subscribe(self.filters)
        def rejected(c):
            self.refused = True
        client.on_rejected = rejected
        client.connect()
        def teardown():
            client.disconnect()
        self.sim.schedule(self.cycle_us - 200_000, teardown)
        self.sim.schedule(self.cycle_us, self._cycle)


# ---------------------------------------------------------------------------
# Recon: SYN scan with service naming
# ---------------------------------------------------------------------------

WELL_KNOWN = {22: "ssh", 25: "smtp", 53: "dns", 80: "http", 443: "https",
              502: "modbus", 1883: "mqtt", 5683: "coap", 8080: "http-alt"}


class PortScan:
    def __init__(self, sim, attacker, target_host, ports, t_start_us,
                 gap_us=10_000):
        self.sim = sim
        self.attacker = attacker
        self.target_host = target_host
        self.ports = list(ports)
        self.t_start_us = int(t_start_us)
        self.gap_us = gap_us
        self.open_ports: dict[int, str] = {}
        self.report: dict = {}
        self.window = AttackWindow(
            RECON, self.t_start_us,
            self.t_start_us + self.gap_us * (len(self.ports) + 2),
            attacker.host_id, (target_host.host_id,))

    def schedule(self) -> AttackWindow:
        target_ip = self.target_host.interfaces[0].ip
        for n, port in enumerate(self.ports):
            self.sim.schedule_at(self.t_start_us + n * self.gap_us,
                                 lambda p=port: self._probe(target_ip, p))
        self.sim.schedule_at(self.window.t_end_us, self._finish)
        return self.window

    def _probe(self, target_ip, port):
        stream = self.attacker.open_tcp(target_ip, port, "SCAN")

        def on_established(s):
            self.open_ports[port] = self.target_host.banner.get(
                port, WELL_KNOWN.get(port, "unknown"))
            s.reset("client")

        stream.on_established = on_established

    def _finish(self):
        self.report = {"target": self.target_host.host_id,
                       "open_ports": {p: self.open_ports[p]
                                      for p in sorted(self.open_ports)},
                       "os": self.target_host.os_label}


# ---------------------------------------------------------------------------
# Exploitation: webgui payload upload and reverse shells
# ---------------------------------------------------------------------------

@dataclass
class ReverseShellSession:
    listener_ip: str
    listener_port: int
    victim: str
    t_start_us: int
    duration_us: int
    commands: list = field(default_factory=list)
    outputs: list = field(default_factory=list)


class ShellListener:
    """Attacker-side handler bound on the reverse-shell port."""

    def __init__(self, sim, command_gap_us=25_000_000):
        self.sim = sim
        self.command_gap_us = command_gap_us
        self.sessions: list = []
        self.pending: list = []        # exploit-side handlers awaiting a shell
        self._output_handlers: dict = {}

    def expect(self, on_shell) -> None:
        self.pending.append(on_shell)

    def on_open(self, stream):
        self.sessions.append(stream)
        if self.pending:
            handler = self.pending.pop(0)
            handler(stream)

    def on_data(self, stream, data: bytes):
        handler = self._output_handlers.get(id(stream))
        if handler is not None:
            handler(data)


class ExploitWebgui:
    """Credentialed login + payload upload, then victim-originated shells.

    Fails cleanly when the target is not vulnerable or credentials are wrong;
    on success every session is a TCP stream FROM the victim TO the
    attacker's listener, ended with an exact-duration reset.
    """

    def __init__(self, sim, attacker, target_host, webgui, credentials,
                 t_start_us, session_plan, listener_port=4444,
                 command_gap_us=25_000_000, https_tag="HTTPS"):
        self.sim = sim
        self.attacker = attacker
        self.target_host = target_host
        self.webgui = webgui
        self.credentials = credentials
        self.t_start_us = int(t_start_us)
        self.session_plan = list(session_plan)   # [(start_us, duration_us), ...]
        self.listener_port = listener_port
        self.command_gap_us = command_gap_us
        self.https_tag = https_tag
        self.listener = ShellListener(sim, command_gap_us)
        self.sessions: list[ReverseShellSession] = []
        self.succeeded = False
        self.failure = ""
        last_end = max((s + d) for s, d in session_plan) if session_plan else t_start_us
        self.exploit_window = AttackWindow(EXPLOIT, self.t_start_us,
                                           self.t_start_us + 2_000_000,
                                           attacker.host_id,
                                           (target_host.host_id,))
        self.shell_window = AttackWindow(
            REVERSE_SHELL,
            min((s for s, _ in session_plan), default=t_start_us),
            last_end + 1_000, attacker.host_id, (target_host.host_id,))

    def schedule(self) -> list:
        self.attacker.bind_tcp(self.listener_port, self.listener)
        self.sim.schedule_at(self.t_start_us, self._login)
        return [self.exploit_window, self.shell_window]

    # stage 1: login and upload over the web admin port
    def _login(self):
        target_ip = self.target_host.interfaces[0].ip
        stream = self.attacker.open_tcp(target_ip, 443, self.https_tag)
        stage = {"n": 0}
        user, password = self.credentials

        def on_established(s):
            s.write("client", json.dumps({"action": "login", "user": user,
                                          "password": password}).encode())

        def on_data(s, data):
            body = json.loads(data.decode())
            if stage["n"] == 0:
                stage["n"] = 1
                if body.get("auth") != "ok":
                    self.failure = "bad credentials"
                    s.close("client")
                    return
                s.write("client", json.dumps(
                    {"action": "inject", "attacker": self.attacker.host_id,
                     "payload": "<?php graph callback ?>"}).encode())
            else:
                s.close("client")
                if body.get("upload") == "ok":
                    self.succeeded = True
                    self._arm_sessions()
                else:
                    self.failure = "target not vulnerable"

        stream.on_established = on_established
        stream.on_data = on_data

    def _arm_sessions(self):
        attacker_ip = self.attacker.interfaces[0].ip
        for n, (start, duration) in enumerate(self.session_plan, start=1):
            self.sim.schedule_at(start, lambda n=n, s=start, d=duration:
                                 self._open_session(n, s, d))

    def _open_session(self, n, start_us, duration_us):
        attacker_ip = self.attacker.interfaces[0].ip
        record = ReverseShellSession(attacker_ip, self.listener_port,
                                     self.target_host.host_id, start_us,
                                     duration_us)
        self.sessions.append(record)

        commands = ["id", "whoami", "uname -a", "cat /etc/passwd",
                    "netstat -an"]

        def on_shell(server_stream):
            # attacker side: drive commands over the victim-originated stream
            k = {"i": 0}

            def issue_command():
                if server_stream.state != "established":
                    return
                cmd = commands[k["i"] % len(commands)]
                k["i"] += 1
                record.commands.append(cmd)
                server_stream.write("server", cmd.encode())
                if start_us + k["i"] * self.command_gap_us < \
                        start_us + duration_us:
                    self.sim.schedule(self.command_gap_us, issue_command)

            self.listener._output_handlers[id(server_stream)] = (
                lambda data: record.outputs.append(data.decode()))
            self.sim.schedule(1_000, issue_command)

        self.listener.expect(on_shell)

        # reverse direction: the victim originates the stream
        stream = self.target_host.open_tcp(attacker_ip, self.listener_port,
                                           "TCP")
        self.sim.log_syslog(self.target_host,
                            f"php: reverse shell payload executed, session {n} "
                            f"to {attacker_ip}:{self.listener_port}")

        def on_data(s, data):
            # victim side: answer the command with root-privileged output
            cmd = data.decode()
            self.sim.log_syslog(self.target_host,
                                f"sh: payload command '{cmd}' uid=0(root)")
            s.write("client", f"{cmd}: uid=0(root) gid=0(wheel)".encode())

        stream.on_data = on_data
        self.sim.schedule_at(start_us + duration_us,
                             lambda: stream.reset("client"))
