"""Deterministic discrete-event network fabric.

Hosts with MAC/IP identities sit on switched LAN segments; a router with a
stateful access-control list joins segments; every frame (ARP, UDP, TCP at
flag+payload fidelity) is appended to a global capture. All randomness
(link jitter, loss) is drawn from per-host seeded streams so that adding
traffic from one host never perturbs the delay sequence of another.
"""

import base64
import heapq
import json
import re
from dataclasses import dataclass, field
from random import Random

US_PER_S = 1_000_000
BROADCAST_MAC = "ff:ff:ff:ff:ff:ff"

_MAC_RE = re.compile(r"^([0-9a-f]{2}:){5}[0-9a-f]{2}$")


class NetConfigError(Exception):
    """Invalid fabric configuration (duplicate address, bad MAC, ...)."""


class RouteError(Exception):
    """Destination not reachable from the sending host."""


class ArpFailure(Exception):
    """No responder for an ARP request."""


def check_mac(mac: str) -> str:
    mac = mac.lower()
    if not _MAC_RE.match(mac):
        raise NetConfigError(f"bad MAC address {mac!r}")
    return mac


def ip_to_int(ip: str) -> int:
    parts = ip.split(".")
    if len(parts) != 4:
        raise NetConfigError(f"bad IPv4 address {ip!r}")
    val = 0
    for p in parts:
        n = int(p)
        if not 0 <= n <= 255:
            raise NetConfigError(f"bad IPv4 address {ip!r}")
        val = (val << 8) | n
    return val


def cidr_match(ip: str, cidr: str) -> bool:
    if cidr in ("any", "*"):
        return True
    if "/" not in cidr:
        return ip == cidr
    net, bits = cidr.split("/")
    bits = int(bits)
    if bits == 0:
        return True
    mask = ((1 << bits) - 1) << (32 - bits)
    return (ip_to_int(ip) & mask) == (ip_to_int(net) & mask)


@dataclass
class LinkProfile:
    base_latency_us: int = 100
    jitter_us: int = 0
    loss_rate: float = 0.0


@dataclass
class Segment:
    name: str
    profile: LinkProfile
    subnet: str | None = None        # lets hosts ARP for unclaimed addresses
    hosts: list = field(default_factory=list)


@dataclass(slots=True)
class Frame:
    """One L2 transmission. Multi-hop packets produce one Frame per hop."""

    ts_us: int
    segment: str
    sender: str                    # host id that put the frame on the wire
    src_mac: str
    dst_mac: str
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    l4: str                        # "TCP" | "UDP" | "ARP"
    tcp_flags: tuple
    payload: bytes
    proto_tag: str
    origin: bool = True            # sender owns src_ip (False on forwards)
    final: bool = False            # delivered to the host owning dst_ip
    delivered: bool = False
    deliver_ts_us: int = 0
    drop_reason: str = ""          # "loss" when lost in transit
    fw_denied: bool = False        # delivered to router, refused by ACL

    @property
    def wire_len(self) -> int:
        if self.l4 == "TCP":
            return 54 + len(self.payload)
        if self.l4 == "UDP":
            return 42 + len(self.payload)
        return 42  # ARP

    def flag_key(self) -> str:
        return "".join(FLAG_LETTER[f] for f in self.tcp_flags)


FLAG_LETTER = {"ACK": "A", "FIN": "F", "PSH": "P", "RST": "R", "SYN": "S"}
VALID_FLAGS = frozenset(FLAG_LETTER)


def _flags(*names) -> tuple:
    bad = set(names) - VALID_FLAGS
    if bad:
        raise ValueError(f"unknown TCP flags {bad}")
    return tuple(sorted(names))


@dataclass
class AclRule:
    direction: str       # "in" (toward WAN-facing ingress -> LAN), "out", "any"
    src_cidr: str
    dst_cidr: str
    dst_ports: frozenset | None   # None = any port
    action: str          # "allow" | "deny"


class Acl:
    """First matching rule wins; empty rule list falls through to default."""

    def __init__(self, rules=(), default="allow"):
        self.rules = list(rules)
        self.default = default

    def decide(self, direction: str, src_ip: str, dst_ip: str, dst_port: int) -> str:
        for r in self.rules:
            if r.direction not in ("any", direction):
                continue
            if not cidr_match(src_ip, r.src_cidr):
                continue
            if not cidr_match(dst_ip, r.dst_cidr):
                continue
            if r.dst_ports is not None and dst_port not in r.dst_ports:
                continue
            return r.action
        return self.default


class Simulation:
    """Event loop owning all fabric state for one run."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.now_us = 0
        self.horizon_us: int | None = None   # periodic loops stop here
        self._events = []
        self._eseq = 0
        self.capture: list[Frame] = []
        self.segments: dict[str, Segment] = {}
        self.hosts: dict[str, "Host"] = {}
        self._mac_owner: dict[str, "Host"] = {}
        self._ip_owner: dict[tuple, "Host"] = {}   # (segment, ip) -> host
        self.syslog_truth: dict[str, list] = {}
        self._rngs: dict[str, Random] = {}
        self._fifo: dict[tuple, int] = {}          # (sender, segment) -> last deliver ts

    # -- clock ---------------------------------------------------------
    def rng(self, lane: str) -> Random:
        r = self._rngs.get(lane)
        if r is None:
            r = self._rngs[lane] = Random(f"{self.seed}/{lane}")
        return r

    def schedule(self, delay_us: int, fn) -> None:
        self.schedule_at(self.now_us + int(delay_us), fn)

    def schedule_periodic(self, delay_us: int, fn) -> bool:
        """Schedule the next iteration of a repeating task unless it would
        start past the horizon; returns whether it was scheduled."""
        nxt = self.now_us + int(delay_us)
        if self.horizon_us is not None and nxt > self.horizon_us:
            return False
        self.schedule_at(nxt, fn)
        return True

    def schedule_at(self, ts_us: int, fn) -> None:
        self._eseq += 1
        heapq.heappush(self._events, (int(ts_us), self._eseq, fn))

    def run_until(self, t_us: int) -> None:
        while self._events and self._events[0][0] <= t_us:
            ts, _, fn = heapq.heappop(self._events)
            self.now_us = ts
            fn()
        self.now_us = max(self.now_us, t_us)

    # -- topology ------------------------------------------------------
    def add_segment(self, name: str, profile: LinkProfile | None = None,
                    subnet: str | None = None) -> Segment:
        if name in self.segments:
            raise NetConfigError(f"segment {name!r} already exists")
        seg = Segment(name, profile or LinkProfile(), subnet)
        self.segments[name] = seg
        return seg

    def attach_host(self, host_id: str, interfaces, gateway_ip: str | None = None,
                    is_router: bool = False, acl: Acl | None = None,
                    forward_delay_us: int = 40) -> "Host":
        """interfaces: iterable of (segment_name, mac, ip)."""
        if host_id in self.hosts:
            raise NetConfigError(f"host {host_id!r} already attached")
        host = Host(self, host_id, gateway_ip=gateway_ip, is_router=is_router,
                    acl=acl, forward_delay_us=forward_delay_us)
        for seg_name, mac, ip in interfaces:
            mac = check_mac(mac)
            seg = self.segments[seg_name]
            if mac in self._mac_owner:
                raise NetConfigError(f"duplicate MAC {mac} on fabric")
            if (seg_name, ip) in self._ip_owner:
                raise NetConfigError(f"duplicate IP {ip} on segment {seg_name}")
            host.interfaces.append(Interface(seg_name, mac, ip))
            self._mac_owner[mac] = host
            self._ip_owner[(seg_name, ip)] = host
            seg.hosts.append(host)
        self.hosts[host_id] = host
        self.syslog_truth[host_id] = []
        return host

    def owner_of_ip(self, segment: str, ip: str) -> "Host | None":
        return self._ip_owner.get((segment, ip))

    def log_syslog(self, host: "Host", text: str) -> None:
        entry = (self.now_us, text)
        host.syslog.append(entry)
        self.syslog_truth[host.host_id].append(entry)

    # -- wire ----------------------------------------------------------
    def transmit(self, frame: Frame) -> Frame:
        """Put a frame on its segment; draws loss/jitter from the sender lane.

        Delivery is FIFO per (sender, segment): jitter never reorders frames
        from one host on one wire.
        """
        self.capture.append(frame)
        seg = self.segments[frame.segment]
        # ARP keeps its own jitter lane so that attack-induced resolutions
        # can never shift the delay sequence of a victim's data traffic
        lane = self.rng(f"net/{frame.sender}/arp" if frame.l4 == "ARP"
                        else f"net/{frame.sender}")
        if seg.profile.loss_rate and lane.random() < seg.profile.loss_rate:
            frame.drop_reason = "loss"
            return frame
        jitter = 0
        if seg.profile.jitter_us:
            jitter = int(round(lane.uniform(-seg.profile.jitter_us,
                                            seg.profile.jitter_us)))
        delay = max(0, seg.profile.base_latency_us + jitter)
        key = (frame.sender, frame.segment)
        deliver_ts = max(frame.ts_us + delay, self._fifo.get(key, 0))
        self._fifo[key] = deliver_ts
        frame.deliver_ts_us = deliver_ts   # scheduled; delivered flag set on arrival
        self.schedule_at(deliver_ts, lambda: self._deliver(frame, deliver_ts))
        return frame

    def _deliver(self, frame: Frame, ts: int) -> None:
        frame.delivered = True
        frame.deliver_ts_us = ts
        seg = self.segments[frame.segment]
        if frame.dst_mac == BROADCAST_MAC:
            for h in seg.hosts:
                if not any(i.mac == frame.src_mac for i in h.interfaces):
                    h.receive(frame)
            return
        host = self._mac_owner.get(frame.dst_mac)
        if host is not None:
            if any(frame.dst_ip == i.ip for i in host.interfaces):
                frame.final = True
            host.receive(frame)


@dataclass
class Interface:
    segment: str
    mac: str
    ip: str


class Host:
    def __init__(self, sim: Simulation, host_id: str, gateway_ip=None,
                 is_router=False, acl=None, forward_delay_us=40):
        self.sim = sim
        self.host_id = host_id
        self.interfaces: list[Interface] = []
        self.gateway_ip = gateway_ip
        self.is_router = is_router
        self.acl = acl or Acl()
        self.forward_delay_us = forward_delay_us
        self.wan_segments: set = set()
        self.arp_cache: dict[str, tuple] = {}   # ip -> (mac, ts_us)
        self.syslog: list = []
        self.banner: dict = {}                   # port -> service name
        self.os_label: str = ""
        self.mitm_handler = None                 # fn(frame) -> None
        self._tcp_services: dict[int, object] = {}
        self._udp_services: dict[int, object] = {}
        self._streams: dict[tuple, "TcpStream"] = {}
        self._eph_port = 49152
        self._conntrack: set = set()

    # -- identity helpers ------------------------------------------------
    @property
    def ips(self):
        return [i.ip for i in self.interfaces]

    def iface_for_segment(self, segment: str) -> Interface:
        for i in self.interfaces:
            if i.segment == segment:
                return i
        raise NetConfigError(f"{self.host_id} has no interface on {segment}")

    def mac_for_ip(self, ip: str) -> str:
        for i in self.interfaces:
            if i.ip == ip:
                return i.mac
        raise NetConfigError(f"{self.host_id} does not own {ip}")

    def ephemeral_port(self) -> int:
        p = self._eph_port
        self._eph_port += 1
        if self._eph_port > 65535:
            self._eph_port = 49152
        return p

    # -- routing / ARP ----------------------------------------------------
    def route(self, dst_ip: str) -> tuple:
        """-> (interface, next_hop_ip)"""
        for i in self.interfaces:
            if self.sim.owner_of_ip(i.segment, dst_ip) is not None:
                return i, dst_ip
        for i in self.interfaces:
            subnet = self.sim.segments[i.segment].subnet
            if subnet and cidr_match(dst_ip, subnet):
                return i, dst_ip
        if self.gateway_ip:
            for i in self.interfaces:
                if self.sim.owner_of_ip(i.segment, self.gateway_ip) is not None:
                    return i, self.gateway_ip
        raise RouteError(f"{self.host_id}: no route to {dst_ip}")

    def arp_resolve(self, target_ip: str) -> tuple:
        """Resolve target_ip on the local segment -> (mac, ready_ts_us).

        A cache miss emits the request/reply exchange into the capture and
        returns the time at which the answer is available.
        """
        for i in self.interfaces:
            if i.ip == target_ip:
                return i.mac, self.sim.now_us
        hit = self.arp_cache.get(target_ip)
        if hit is not None:
            return hit[0], self.sim.now_us
        iface, _ = self.route(target_ip)
        if self.sim.owner_of_ip(iface.segment, target_ip) is None and target_ip != iface.ip:
            # request goes out, nobody answers
            self._emit_arp(iface, BROADCAST_MAC, target_ip, op="request")
            raise ArpFailure(f"no ARP responder for {target_ip} on {iface.segment}")
        owner = self.sim.owner_of_ip(iface.segment, target_ip)
        req = self._emit_arp(iface, BROADCAST_MAC, target_ip, op="request")
        # reply is sent by the owner once the request lands
        o_iface = owner.iface_for_segment(iface.segment)
        reply = owner._emit_arp(o_iface, iface.mac, target_ip,
                                op="reply", ts=req.frame.ts_us + req.deliver_offset,
                                claimed_ip=target_ip, claimed_mac=o_iface.mac,
                                to_ip=iface.ip)
        ready = reply.frame.ts_us + reply.deliver_offset
        self.arp_cache[target_ip] = (o_iface.mac, ready)
        return o_iface.mac, ready

    class _Emitted:
        def __init__(self, frame, deliver_offset):
            self.frame = frame
            self.deliver_offset = deliver_offset

    def _emit_arp(self, iface, dst_mac, target_ip, op, ts=None, claimed_ip=None,
                  claimed_mac=None, to_ip=""):
        payload = json.dumps({"op": op, "target": target_ip,
                              "claimed_ip": claimed_ip or "",
                              "claimed_mac": claimed_mac or ""}).encode()
        frame = Frame(ts_us=self.sim.now_us if ts is None else ts,
                      segment=iface.segment, sender=self.host_id,
                      src_mac=iface.mac, dst_mac=dst_mac,
                      src_ip=claimed_ip or iface.ip, dst_ip=to_ip or target_ip,
                      src_port=0, dst_port=0, l4="ARP", tcp_flags=(),
                      payload=payload, proto_tag="ARP")
        self.sim.transmit(frame)
        if frame.drop_reason:
            # lost ARP is retried in reality; abstract it as one base delay
            offset = self.sim.segments[iface.segment].profile.base_latency_us
        else:
            offset = frame.deliver_ts_us - frame.ts_us
        return Host._Emitted(frame, offset)

    def send_gratuitous_arp(self, victim: "Host", claimed_ip: str, claimed_mac: str,
                            segment: str) -> Frame:
        """Unsolicited ARP reply binding claimed_ip -> claimed_mac in the victim cache."""
        iface = self.iface_for_segment(segment)
        v_iface = victim.iface_for_segment(segment)
        em = self._emit_arp(iface, v_iface.mac, claimed_ip, op="reply",
                            claimed_ip=claimed_ip, claimed_mac=claimed_mac,
                            to_ip=v_iface.ip)
        return em.frame

    # -- send paths --------------------------------------------------------
    def send_ip(self, dst_ip: str, dst_port: int, payload: bytes, proto_tag: str,
                l4: str = "UDP", tcp_flags: tuple = (), src_port: int = 0,
                src_ip: str | None = None, at_ts: int | None = None) -> Frame:
        iface, next_hop = self.route(dst_ip)
        mac, ready = self.arp_resolve(next_hop)
        ts = max(ready, self.sim.now_us if at_ts is None else at_ts)
        use_src_ip = src_ip or iface.ip
        frame = Frame(ts_us=ts, segment=iface.segment, sender=self.host_id,
                      src_mac=iface.mac, dst_mac=mac,
                      src_ip=use_src_ip, dst_ip=dst_ip,
                      src_port=src_port, dst_port=dst_port,
                      l4=l4, tcp_flags=tuple(sorted(tcp_flags)),
                      payload=payload, proto_tag=proto_tag,
                      origin=use_src_ip in self.ips)
        return self.sim.transmit(frame)

    def forward_packet(self, frame: Frame, proto_tag=None, payload=None) -> Frame | None:
        """Re-emit a packet unchanged (router hop or MITM pass-through)."""
        iface, next_hop = self.route(frame.dst_ip)
        try:
            mac, ready = self.arp_resolve(next_hop)
        except ArpFailure:
            return None
        out = Frame(ts_us=max(ready, self.sim.now_us), segment=iface.segment,
                    sender=self.host_id, src_mac=iface.mac, dst_mac=mac,
                    src_ip=frame.src_ip, dst_ip=frame.dst_ip,
                    src_port=frame.src_port, dst_port=frame.dst_port,
                    l4=frame.l4, tcp_flags=frame.tcp_flags,
                    payload=frame.payload if payload is None else payload,
                    proto_tag=frame.proto_tag if proto_tag is None else proto_tag,
                    origin=False)
        return self.sim.transmit(out)

    # -- receive -----------------------------------------------------------
    def receive(self, frame: Frame) -> None:
        if frame.l4 == "ARP":
            self._rx_arp(frame)
            return
        if frame.dst_ip in self.ips:
            self._rx_local(frame)
        elif self.is_router:
            self._router_forward(frame)
        elif self.mitm_handler is not None:
            self.mitm_handler(frame)
        # anything else: frame was switched to us but is not ours; ignore

    def _rx_arp(self, frame: Frame) -> None:
        info = json.loads(frame.payload.decode())
        if info["op"] == "reply" and info["claimed_ip"]:
            # gratuitous or solicited: most recent writer wins
            self.arp_cache[info["claimed_ip"]] = (info["claimed_mac"],
                                                  self.sim.now_us)
        elif info["op"] == "request" and info["target"] in self.ips:
            pass  # solicited replies are synthesized by arp_resolve

    def _router_forward(self, frame: Frame) -> None:
        ingress_wan = frame.segment in self.wan_segments
        direction = "in" if ingress_wan else "out"
        key = (frame.src_ip, frame.src_port, frame.dst_ip, frame.dst_port, frame.l4)
        rkey = (frame.dst_ip, frame.dst_port, frame.src_ip, frame.src_port, frame.l4)
        if rkey not in self._conntrack:
            verdict = self.acl.decide(direction, frame.src_ip, frame.dst_ip,
                                      frame.dst_port)
            if verdict == "deny":
                frame.fw_denied = True
                if frame.l4 == "TCP":
                    # reject: RST back to the origin so clients fail fast
                    self.send_ip(frame.src_ip, frame.src_port,
                                 b"", frame.proto_tag, l4="TCP",
                                 tcp_flags=_flags("RST"),
                                 src_port=frame.dst_port, src_ip=frame.dst_ip)
                return
            self._conntrack.add(key)
        try:
            self.sim.schedule(self.forward_delay_us,
                              lambda f=frame: self.forward_packet(f))
        except RouteError:
            pass

    # -- UDP ---------------------------------------------------------------
    def bind_udp(self, port: int, handler) -> None:
        """handler(host, frame) is invoked on delivery of each datagram."""
        self._udp_services[port] = handler

    def send_udp(self, dst_ip, dst_port, payload: bytes, proto_tag, src_port=None):
        sp = src_port if src_port is not None else self.ephemeral_port()
        return self.send_ip(dst_ip, dst_port, payload, proto_tag, l4="UDP",
                            src_port=sp)

    # -- TCP ---------------------------------------------------------------
    def bind_tcp(self, port: int, service) -> None:
        """service needs .on_open(stream) and .on_data(stream, data)."""
        self._tcp_services[port] = service

    def unbind_tcp(self, port: int) -> None:
        self._tcp_services.pop(port, None)

    def open_tcp(self, dst_ip: str, dst_port: int, proto_tag: str,
                 src_port: int | None = None) -> "TcpStream":
        sp = src_port if src_port is not None else self.ephemeral_port()
        iface, _ = self.route(dst_ip)
        stream = TcpStream(self.sim, self, iface.ip, sp, dst_ip, dst_port,
                           proto_tag)
        self._streams[(iface.ip, sp, dst_ip, dst_port)] = stream
        stream._send(self, _flags("SYN"), b"")
        return stream

    def _rx_local(self, frame: Frame) -> None:
        if frame.l4 == "UDP":
            svc = self._udp_services.get(frame.dst_port)
            if svc is not None:
                svc(self, frame)
            return
        if frame.l4 != "TCP":
            return
        key = (frame.dst_ip, frame.dst_port, frame.src_ip, frame.src_port)
        stream = self._streams.get(key)
        if stream is None:
            if "SYN" in frame.tcp_flags and frame.dst_port in self._tcp_services:
                svc = self._tcp_services[frame.dst_port]
                stream = TcpStream(self.sim, None, frame.src_ip, frame.src_port,
                                   frame.dst_ip, frame.dst_port, frame.proto_tag)
                stream.server_host = self
                stream.service = svc
                self._streams[key] = stream
                stream._rx(self, frame)
            elif "RST" not in frame.tcp_flags:
                # closed port: refuse
                self.send_ip(frame.src_ip, frame.src_port, b"", frame.proto_tag,
                             l4="TCP", tcp_flags=_flags("RST"),
                             src_port=frame.dst_port)
            return
        stream._rx(self, frame)


class TcpStream:
    """Flag+payload fidelity stream: handshake, PSH/ACK data, FIN/RST close.

    No sequence numbers or retransmission; enough for conversation
    statistics and stream profiling.
    """

    def __init__(self, sim, client_host, client_ip, client_port, server_ip,
                 server_port, proto_tag):
        self.sim = sim
        self.client_host = client_host
        self.server_host = None
        self.service = None
        self.client_ip = client_ip
        self.client_port = client_port
        self.server_ip = server_ip
        self.server_port = server_port
        self.proto_tag = proto_tag
        self.state = "connecting"    # -> established | refused | closed
        self.on_established = None
        self.on_data = None          # fn(stream, bytes) for the client side
        self.on_closed = None
        self.on_refused = None
        self._client_fin = False
        self._server_fin = False
        self._opened = False         # server-side service notified

    # which Host plays which side
    def host_for(self, side: str):
        return self.client_host if side == "client" else self.server_host

    def peer(self, side: str):
        return "server" if side == "client" else "client"

    def _send(self, host, flags, payload: bytes):
        if host is self.client_host or (self.server_host is None):
            dst_ip, dst_port = self.server_ip, self.server_port
            src_ip, src_port = self.client_ip, self.client_port
        else:
            dst_ip, dst_port = self.client_ip, self.client_port
            src_ip, src_port = self.server_ip, self.server_port
        return host.send_ip(dst_ip, dst_port, payload, self.proto_tag, l4="TCP",
                            tcp_flags=flags, src_port=src_port, src_ip=src_ip)

    def write(self, side: str, payload: bytes):
        host = self.host_for(side)
        if host is None or self.state not in ("established", "connecting"):
            raise RuntimeError(f"stream not writable from {side} (state={self.state})")
        return self._send(host, _flags("PSH", "ACK"), payload)

    def close(self, side: str):
        host = self.host_for(side)
        if host is None or self.state in ("closed", "refused"):
            return
        if side == "client":
            self._client_fin = True
        else:
            self._server_fin = True
        self._send(host, _flags("FIN", "ACK"), b"")
        if self._client_fin and self._server_fin and self.state != "closed":
            self.state = "closed"
            if self.on_closed:
                self.on_closed(self)

    def reset(self, side: str):
        host = self.host_for(side)
        if host is None or self.state in ("closed", "refused"):
            return
        self._send(host, _flags("RST"), b"")
        self.state = "closed"
        self._drop_from(host, None)
        if self.on_closed:
            self.on_closed(self)

    # -- inbound frame on one endpoint ----------------------------------
    def _rx(self, host, frame: Frame):
        side = "server" if host is self.server_host or (
            self.server_host is None and frame.dst_ip == self.server_ip) else "client"
        if side == "client" and self.client_host is None:
            side = "server"
        flags = set(frame.tcp_flags)
        if "RST" in flags:
            was = self.state
            self._drop_from(host, frame)
            if was in ("closed", "refused"):
                return
            self.state = "refused" if was == "connecting" else "closed"
            if self.state == "refused" and self.on_refused:
                self.on_refused(self)
            elif self.state == "closed" and self.on_closed:
                self.on_closed(self)
            return
        if flags == {"SYN"}:
            self._send(host, _flags("SYN", "ACK"), b"")
            return
        if flags == {"ACK", "SYN"}:
            self._send(host, _flags("ACK"), b"")
            self.state = "established"
            if self.on_established:
                self.on_established(self)
            return
        if "FIN" in flags:
            if side == "client":
                self._server_fin = True
            else:
                self._client_fin = True
            self._send(host, _flags("ACK"), b"")
            if self._client_fin and self._server_fin:
                self.state = "closed"
                if self.on_closed:
                    self.on_closed(self)
            else:
                self.close(side)
            return
        if flags == {"ACK"} and not frame.payload:
            if not self._opened and side == "server" and self.state != "closed":
                self._opened = True
                self.state = "established"
                if self.service is not None:
                    self.service.on_open(self)
            return
        if self.state == "closed":
            return   # late data on a torn-down stream is ignored
        if frame.payload:
            self._send(host, _flags("ACK"), b"")
            if side == "server":
                if self.service is not None:
                    self.service.on_data(self, frame.payload)
            else:
                if self.on_data:
                    self.on_data(self, frame.payload)

    def _drop_from(self, host, frame):
        for h in (self.client_host, self.server_host):
            if h is None:
                continue
            for key in list(h._streams):
                if h._streams[key] is self:
                    del h._streams[key]


# ---------------------------------------------------------------------------
# capture export / import
# ---------------------------------------------------------------------------

EXPORT_FIELDS = ("ts_us", "src_mac", "dst_mac", "src_ip", "src_port", "dst_ip",
                 "dst_port", "l4", "tcp_flags", "len", "proto_tag", "payload_b64")


def capture_export(sim: Simulation, host: str | None = None,
                   segment: str | None = None,
                   proto_tag: str | None = None) -> list[Frame]:
    frames = sim.capture
    out = []
    for f in frames:
        if segment is not None and f.segment != segment:
            continue
        if proto_tag is not None and f.proto_tag != proto_tag:
            continue
        if host is not None:
            h = sim.hosts.get(host)
            macs = {i.mac for i in h.interfaces} if h else set()
            if f.sender != host and f.dst_mac not in macs:
                continue
        out.append(f)
    out.sort(key=lambda f: f.ts_us)
    return out


def frame_to_record(f: Frame) -> dict:
    return {
        "ts_us": f.ts_us,
        "src_mac": f.src_mac,
        "dst_mac": f.dst_mac,
        "src_ip": f.src_ip,
        "src_port": f.src_port,
        "dst_ip": f.dst_ip,
        "dst_port": f.dst_port,
        "l4": f.l4,
        "tcp_flags": list(f.tcp_flags),
        "len": f.wire_len,
        "proto_tag": f.proto_tag,
        "payload_b64": base64.b64encode(f.payload).decode(),
        "segment": f.segment,
        "sender": f.sender,
        "origin": f.origin,
        "final": f.final,
        "delivered": f.delivered,
        "deliver_ts_us": f.deliver_ts_us,
        "drop_reason": f.drop_reason,
        "fw_denied": f.fw_denied,
    }


def record_to_frame(rec: dict) -> Frame:
    return Frame(ts_us=rec["ts_us"], segment=rec.get("segment", ""),
                 sender=rec.get("sender", ""), src_mac=rec["src_mac"],
                 dst_mac=rec["dst_mac"], src_ip=rec["src_ip"],
                 dst_ip=rec["dst_ip"], src_port=rec["src_port"],
                 dst_port=rec["dst_port"], l4=rec["l4"],
                 tcp_flags=tuple(rec["tcp_flags"]),
                 payload=base64.b64decode(rec["payload_b64"]),
                 proto_tag=rec["proto_tag"], origin=rec.get("origin", True),
                 final=rec.get("final", False),
                 delivered=rec.get("delivered", False),
                 deliver_ts_us=rec.get("deliver_ts_us", 0),
                 drop_reason=rec.get("drop_reason", ""),
                 fw_denied=rec.get("fw_denied", False))


def write_capture_jsonl(frames, path) -> None:
    with open(path, "w") as fh:
        for f in frames:
            fh.write(json.dumps(frame_to_record(f)) + "\n")


def read_capture_jsonl(path) -> list[Frame]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(record_to_frame(json.loads(line)))
    return out
