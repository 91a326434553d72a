"""Declarative scenario plans: schema, validation, persistence and the
shipped default scenario (one simulated hour of plant traffic with the full
attack schedule)."""

import copy
import json

SCHEMA_VERSION = 1

ATTACK_KINDS = ("arp_spoof", "tamper", "log_tamper", "i2c_sniff",
                "modbus_dos", "rogue_subscriber", "recon", "web_enum",
                "exploit")

CALIBRATED_PROTOS = ("MODBUS", "COAP", "HTTP", "DNS", "I2C", "MQTT", "SMTP",
                     "API")


class PlanError(Exception):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def load_plan(path) -> dict:
    with open(path) as fh:
        plan = json.load(fh)
    errors = validate_plan(plan)
    if errors:
        raise PlanError(errors)
    return plan


def save_plan(plan: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(plan, fh, indent=2)
        fh.write("\n")


def validate_plan(plan: dict) -> list:
    """Full validation pass; returns every problem found, not just the first."""
    errors = []
    if not isinstance(plan, dict):
        return ["plan must be a JSON object"]
    if plan.get("schema_version") != SCHEMA_VERSION:
        errors.append(f"unsupported schema_version {plan.get('schema_version')!r}")
    duration = plan.get("duration_s", 0)
    if not isinstance(duration, (int, float)) or duration <= 0:
        errors.append(f"duration_s must be positive, got {duration!r}")
    segments = plan.get("segments", {})
    if not segments:
        errors.append("no segments defined")
    hosts = plan.get("hosts", [])
    host_ids = set()
    seen_macs = set()
    seen_ips = set()
    for h in hosts:
        hid = h.get("id")
        if not hid:
            errors.append("host without id")
            continue
        if hid in host_ids:
            errors.append(f"duplicate host id {hid!r}")
        host_ids.add(hid)
        for iface in h.get("interfaces", []):
            if len(iface) != 3:
                errors.append(f"host {hid!r}: malformed interface {iface!r}")
                continue
            seg, mac, ip = iface
            if seg not in segments:
                errors.append(f"host {hid!r} references unknown segment {seg!r}")
            if mac in seen_macs:
                errors.append(f"duplicate MAC {mac!r}")
            seen_macs.add(mac)
            if (seg, ip) in seen_ips:
                errors.append(f"duplicate IP {ip!r} on segment {seg!r}")
            seen_ips.add((seg, ip))
    for role, hid in plan.get("roles", {}).items():
        if hid not in host_ids:
            errors.append(f"role {role!r} references unknown host {hid!r}")
    acl = plan.get("acl", {})
    if acl.get("default", "allow") not in ("allow", "deny"):
        errors.append(f"acl default must be allow|deny")
    for i, rule in enumerate(acl.get("rules", [])):
        if rule.get("action") not in ("allow", "deny"):
            errors.append(f"acl rule {i}: bad action {rule.get('action')!r}")
        if rule.get("direction") not in ("in", "out", "any"):
            errors.append(f"acl rule {i}: bad direction {rule.get('direction')!r}")
    for key, cfg in plan.get("traffic", {}).items():
        entries = cfg if isinstance(cfg, list) else [cfg]
        for entry in entries:
            hid = entry.get("host")
            if hid is not None and hid not in host_ids:
                errors.append(f"traffic {key!r} references unknown host {hid!r}")
    attack_ids = set()
    for a in plan.get("attacks", []):
        aid = a.get("id")
        kind = a.get("kind")
        if not aid:
            errors.append(f"attack without id: {a!r}")
        elif aid in attack_ids:
            errors.append(f"duplicate attack id {aid!r}")
        else:
            attack_ids.add(aid)
        if kind not in ATTACK_KINDS:
            errors.append(f"attack {aid!r}: unknown kind {kind!r}")
        for ref in ("attacker", "victim_a", "victim_b", "target",
                    "broker_host"):
            if ref in a and a[ref] not in host_ids:
                errors.append(f"attack {aid!r} references unknown host {a[ref]!r}")
        t0 = a.get("t_start_s", 0)
        dur = a.get("duration_s", 0)
        if isinstance(duration, (int, float)) and duration > 0:
            if t0 < 0 or t0 > duration:
                errors.append(f"attack {aid!r} starts outside the run")
            if t0 + dur > duration:
                errors.append(f"attack {aid!r} extends past the end of the run")
        if kind == "modbus_dos" and a.get("rate_per_s", 0) <= 0:
            errors.append(f"attack {aid!r}: rate_per_s must be positive")
    return errors


def plan_round_trips(plan: dict) -> bool:
    return json.loads(json.dumps(plan)) == plan


# ---------------------------------------------------------------------------
# default scenario
# ---------------------------------------------------------------------------

def default_plan() -> dict:
    """One simulated hour: six polled devices, five client scripts, and the
    full attack schedule (spoof, tamper, flood, rogue subscriber, recon,
    exploit with five reverse-shell sessions, log tampering)."""
    reverse_shell_sessions = [
        [2000.0, 500.0],
        [2510.0, 400.0],
        [2920.0, 250.0],
        [3180.0, 100.0],
        [3290.0, 94.026],
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "name": "default-1h",
        "seed": 42,
        "duration_s": 3600.0,
        "epoch": "2019-07-18T06:00:00.000Z",
        "segments": {
            "lan-a": {"base_latency_us": 80, "jitter_us": 30, "loss_rate": 0.0,
                      "subnet": "192.168.10.0/24"},
            "lan-w": {"base_latency_us": 60, "jitter_us": 20, "loss_rate": 0.0,
                      "subnet": "192.168.20.0/24"},
            "wan": {"base_latency_us": 200, "jitter_us": 50, "loss_rate": 0.0,
                    "subnet": "192.168.2.0/24"},
        },
        "router_forward_delay_us": 40,
        "hosts": [
            {"id": "edge-gw",
             "interfaces": [["lan-a", "b8:27:eb:61:e5:14", "192.168.10.150"],
                            ["lan-w", "b8:27:eb:61:e5:15", "192.168.20.1"]],
             "gateway": "192.168.10.1"},
            {"id": "router",
             "interfaces": [["lan-a", "00:0c:29:6e:a7:ca", "192.168.10.1"],
                            ["wan", "00:0c:29:6e:a7:cb", "192.168.2.1"]],
             "router": True, "wan_segments": ["wan"],
             "os_label": "router-fw 2.4 (unix)",
             "banner": {"443": "https"},
             "webgui": {"credentials": ["admin", "default"],
                        "vulnerable": True}},
            {"id": "plc",
             "interfaces": [["lan-a", "b8:27:eb:aa:00:02", "192.168.10.20"]],
             "gateway": "192.168.10.1"},
            {"id": "pc",
             "interfaces": [["lan-a", "00:0c:29:11:22:33", "192.168.10.30"]],
             "gateway": "192.168.10.1"},
            {"id": "attacker",
             "interfaces": [["lan-a", "00:0c:29:5b:a2:99", "192.168.10.151"]],
             "gateway": "192.168.10.1"},
            {"id": "mobile",
             "interfaces": [["lan-w", "02:aa:bb:cc:00:10", "192.168.20.10"]]},
            {"id": "mail",
             "interfaces": [["lan-w", "02:aa:bb:cc:00:25", "192.168.20.25"]]},
            {"id": "cloud",
             "interfaces": [["wan", "00:50:56:c0:00:10", "192.168.2.10"]],
             "gateway": "192.168.2.1"},
            {"id": "wan-client",
             "interfaces": [["wan", "00:50:56:c0:00:20", "192.168.2.20"]],
             "gateway": "192.168.2.1"},
        ],
        "roles": {"gateway": "edge-gw", "router": "router", "plc": "plc",
                  "broker": "cloud", "mail": "mail", "mobile": "mobile",
                  "pc": "pc", "wan_client": "wan-client",
                  "attacker": "attacker"},
        "acl": {
            "default": "allow",
            "rules": [
                {"direction": "out", "src": "any", "dst": "any",
                 "ports": [9999], "action": "deny"},
                {"direction": "in", "src": "any", "dst": "192.168.10.150/32",
                 "ports": [80], "action": "allow"},
                {"direction": "in", "src": "any", "dst": "any",
                 "ports": None, "action": "deny"},
            ],
        },
        "plant": {
            "tick_period_s": 1.0,
            "sensors": {
                "plc-temp": {"kind": "tmp36", "lo": 15.0, "hi": 45.0,
                             "walk_step": 0.4, "init": 28.0},
                "mpl-temp": {"kind": "mpl-temp", "lo": 10.0, "hi": 45.0,
                             "walk_step": 0.3, "init": 23.9},
                "mpl-press": {"kind": "mpl-pressure", "lo": 85.0, "hi": 105.0,
                              "walk_step": 0.3, "init": 94.7},
                "onewire": {"kind": "ds18b20", "lo": 15.0, "hi": 30.0,
                            "walk_step": 0.2, "init": 20.4},
                "sim-temperature": {"kind": "sim-temp", "lo": 15.0, "hi": 35.0,
                                    "walk_step": 0.8, "init": 28.0},
                "sim-pressure": {"kind": "sim-pressure", "lo": 20.0,
                                 "hi": 60.0, "walk_step": 1.5, "init": 25.3},
                "sim-humidity": {"kind": "sim-humidity", "lo": 10.0,
                                 "hi": 90.0, "walk_step": 1.2, "init": 28.1},
            },
            "plc": {"scan_period_ms": 100, "setpoint_c": 30.0,
                    "scan_phase_ms": 13},
            "actuators": ["led1"],
        },
        "gateway": {
            "poll_period_s": 2.0,
            "deadband": {"Temperature": 0.5, "Pressure": 0.5, "Humidity": 1.0},
            "notify_threshold_c": 30.0,
            "notify_min_gap_s": 60.0,
            "mqtt_dup_every": 50,
            "mqtt_reconnect_every_s": 121.0,
            "dns": {"edge.local": "192.168.20.1",
                    "mail.local": "192.168.20.25"},
        },
        "broker": {"version": "iiotsim-broker 1.0", "sys_period_s": 10.0,
                   "acl_enabled": False, "allowlist": []},
        "traffic": {
            "coap_client": {"host": "mobile", "period_s": 4.0,
                            "actuate_every": 30},
            "dns_client": {"host": "mobile", "period_s": 3.0},
            "http_client": {"host": "wan-client", "period_s": 4.0,
                            "setpoint_every": 450,
                            "setpoints": [25.0, 30.0]},
            "api_client": {"host": "pc", "period_s": 4.0},
            "webgui_clients": [
                {"host": "pc", "period_s": 60.0, "requests": 2},
                {"host": "wan-client", "period_s": 90.0, "requests": 3},
            ],
        },
        "attacks": [
            {"id": "sniff-1", "kind": "i2c_sniff", "t_start_s": 100.0,
             "duration_s": 60.0},
            {"id": "spoof-1", "kind": "arp_spoof", "attacker": "attacker",
             "victim_a": "edge-gw", "victim_b": "router",
             "t_start_s": 200.2, "duration_s": 450.0},
            {"id": "tamper-1", "kind": "tamper", "attacker": "attacker",
             "victim_a": "edge-gw", "victim_b": "router",
             "t_start_s": 750.2, "duration_s": 450.0, "scale": 2.0},
            {"id": "dos-1", "kind": "modbus_dos", "attacker": "attacker",
             "target": "plc", "t_start_s": 1300.1, "duration_s": 10.0,
             "rate_per_s": 1000, "addr_lo": 0, "addr_hi": 199,
             "reqs_per_conn": 10},
            {"id": "rogue-1", "kind": "rogue_subscriber",
             "attacker": "attacker", "broker_host": "cloud",
             "filters": ["#", "$SYS/#"], "t_start_s": 1350.1,
             "duration_s": 500.0, "cycle_s": 4.0},
            {"id": "recon-1", "kind": "recon", "attacker": "attacker",
             "target": "router", "t_start_s": 1900.0,
             "ports": [21, 22, 25, 53, 80, 443, 502, 1883, 8080, 9999]},
            {"id": "enum-1", "kind": "web_enum", "attacker": "attacker",
             "target": "router", "t_start_s": 1905.0, "sessions": 3,
             "session_duration_s": 70.0, "request_period_s": 1.0},
            {"id": "exploit-1", "kind": "exploit", "attacker": "attacker",
             "target": "router", "credentials": ["admin", "default"],
             "t_start_s": 1990.0, "listener_port": 4444,
             "command_gap_s": 20.0,
             "sessions": reverse_shell_sessions},
            {"id": "logtamper-1", "kind": "log_tamper",
             "attacker": "attacker", "target": "router",
             "predicate": "shell", "t_start_s": 3500.0},
        ],
        "latency_targets_ms": {"MODBUS": 10.94, "COAP": 7.38, "HTTP": 346.95,
                               "DNS": 0.201, "I2C": 1.34, "MQTT": 8.6,
                               "SMTP": 12.3, "API": 10.18},
        "service_times_us": {},
        "outputs": ["capture", "conn_log", "historians", "windows",
                    "dataset", "metrics", "hunt"],
    }


# ---------------------------------------------------------------------------
# calibration: service times from Table-style response-time targets
# ---------------------------------------------------------------------------

class CalibrationError(Exception):
    pass


def _segments_of(plan, host_id):
    for h in plan["hosts"]:
        if h["id"] == host_id:
            return [i[0] for i in h.get("interfaces", [])]
    raise CalibrationError(f"unknown host {host_id!r}")


def one_way_us(plan: dict, src: str, dst: str) -> float:
    """Expected one-way latency between two hosts on the plan topology."""
    segs_src = set(_segments_of(plan, src))
    segs_dst = set(_segments_of(plan, dst))
    base = {name: cfg["base_latency_us"]
            for name, cfg in plan["segments"].items()}
    shared = segs_src & segs_dst
    if shared:
        return float(base[sorted(shared)[0]])
    router = plan["roles"]["router"]
    segs_router = set(_segments_of(plan, router))
    in_seg = segs_src & segs_router
    out_seg = segs_dst & segs_router
    if not in_seg or not out_seg:
        raise CalibrationError(f"no route between {src} and {dst}")
    fwd = plan.get("router_forward_delay_us", 40)
    return float(base[sorted(in_seg)[0]] + fwd + base[sorted(out_seg)[0]])


def calibrate(plan: dict) -> dict:
    """Solve per-protocol service times so simulated mean response times hit
    the latency targets; raises when a target is below the path RTT."""
    plan = copy.deepcopy(plan)
    targets = plan.get("latency_targets_ms", {})
    roles = plan["roles"]
    svc = {}
    errors = []
    paths = {
        "MODBUS": (roles["gateway"], roles["plc"]),
        "COAP": (roles["mobile"], roles["gateway"]),
        "DNS": (roles["mobile"], roles["gateway"]),
        "SMTP": (roles["gateway"], roles["mail"]),
        "API": (roles["pc"], roles["gateway"]),
        "HTTP": (roles["wan_client"], roles["gateway"]),
    }
    for proto, (a, b) in paths.items():
        if proto not in targets:
            continue
        target_us = targets[proto] * 1000.0
        rtt = 2.0 * one_way_us(plan, a, b)
        if target_us < rtt:
            errors.append(f"{proto}: target {targets[proto]}ms below path "
                          f"RTT {rtt / 1000.0}ms")
            continue
        svc[proto] = int(round(target_us - rtt))
    if "MQTT" in targets:
        target_us = targets["MQTT"] * 1000.0
        one_way = one_way_us(plan, roles["gateway"], roles["broker"])
        if target_us < 4.0 * one_way:
            errors.append(f"MQTT: target {targets['MQTT']}ms below 4 legs "
                          f"({4.0 * one_way / 1000.0}ms)")
        else:
            svc["MQTT"] = int(round((target_us - 4.0 * one_way) / 2.0))
    if "I2C" in targets:
        if targets["I2C"] < 0:
            errors.append("I2C: negative target")
        else:
            svc["I2C"] = int(round(targets["I2C"] * 1000.0))
    if errors:
        raise CalibrationError("; ".join(errors))
    plan["service_times_us"] = svc
    return plan
