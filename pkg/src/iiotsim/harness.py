"""Scenario runner: builds the topology from a plan, schedules traffic and
attacks, runs the simulation and emits the artifact bundle."""

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

from . import analytics, attacks, fieldbus, hunt, plan as planmod
from .cloud import Broker
from .gateway import EdgeGateway
from .historian import iso_ms
from .netsim import (Acl, AclRule, LinkProfile, Simulation, capture_export,
                     write_capture_jsonl)
from .plant import (Ds18b20Device, ModbusSlaveService, MplDevice, Plant, Plc,
                    SensorModel)
from .fieldbus import I2cBus, OneWireBus
from .services import MailService, WebGuiService

US = 1_000_000


def _us(seconds) -> int:
    return int(round(seconds * US))


@dataclass
class RunResult:
    plan: dict
    seed: int
    sim: Simulation
    gateway: EdgeGateway
    broker: Broker
    plc: Plc
    plant: Plant
    windows: list
    attack_objs: dict
    conversations: list = field(default_factory=list)
    dataset_rows: list = field(default_factory=list)
    class_counts: dict = field(default_factory=dict)
    dropped_rows: int = 0
    metrics: dict = field(default_factory=dict)
    hunt: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)


class Build:
    """Everything wired up and scheduled, ready for run_until()."""

    def __init__(self, plan_dict: dict, seed: int | None = None):
        errors = planmod.validate_plan(plan_dict)
        if errors:
            raise planmod.PlanError(errors)
        if not plan_dict.get("service_times_us") and plan_dict.get(
                "latency_targets_ms"):
            plan_dict = planmod.calibrate(plan_dict)
        self.plan = plan_dict
        self.seed = plan_dict["seed"] if seed is None else seed
        self.duration_us = _us(plan_dict["duration_s"])
        self.epoch = datetime.fromisoformat(
            plan_dict.get("epoch", "2019-07-18T06:00:00.000Z").replace(
                "Z", "+00:00")).astimezone(timezone.utc)
        self.sim = Simulation(self.seed)
        self.sim.horizon_us = self.duration_us
        self.svc = dict(plan_dict.get("service_times_us", {}))
        self._build_fabric()
        self._build_plant()
        self._build_cloud()
        self._build_gateway()
        self._build_traffic()
        self._build_attacks()

    # -- fabric ----------------------------------------------------------
    def _build_fabric(self):
        p = self.plan
        for name, cfg in p["segments"].items():
            self.sim.add_segment(name, LinkProfile(cfg["base_latency_us"],
                                                   cfg["jitter_us"],
                                                   cfg.get("loss_rate", 0.0)),
                                 subnet=cfg.get("subnet"))
        acl_cfg = p.get("acl", {})
        rules = [AclRule(r["direction"], r.get("src", "any"),
                         r.get("dst", "any"),
                         frozenset(r["ports"]) if r.get("ports") else None,
                         r["action"])
                 for r in acl_cfg.get("rules", [])]
        acl = Acl(rules, acl_cfg.get("default", "allow"))
        self.hosts = {}
        for h in p["hosts"]:
            host = self.sim.attach_host(
                h["id"], [tuple(i) for i in h["interfaces"]],
                gateway_ip=h.get("gateway"),
                is_router=h.get("router", False),
                acl=acl if h.get("router") else None,
                forward_delay_us=p.get("router_forward_delay_us", 40))
            host.wan_segments = set(h.get("wan_segments", []))
            host.os_label = h.get("os_label", "")
            host.banner = {int(k): v for k, v in h.get("banner", {}).items()}
            self.hosts[h["id"]] = host
        roles = p["roles"]
        self.gw_host = self.hosts[roles["gateway"]]
        self.router = self.hosts[roles["router"]]
        self.plc_host = self.hosts[roles["plc"]]
        self.cloud_host = self.hosts[roles["broker"]]
        self.mail_host = self.hosts[roles["mail"]]
        self.attacker = self.hosts[roles["attacker"]]
        self.plc_ip = self.plc_host.interfaces[0].ip

        webgui_cfg = next((h.get("webgui") for h in p["hosts"]
                           if h["id"] == roles["router"]), None)
        self.webgui = None
        if webgui_cfg:
            self.webgui = WebGuiService(
                self.sim, self.router,
                credentials=tuple(webgui_cfg.get("credentials",
                                                 ("admin", "admin"))),
                vulnerable=webgui_cfg.get("vulnerable", False))
            self.router.bind_tcp(443, self.webgui)
        self.mail_svc = MailService(self.sim,
                                    self.svc.get("SMTP", 12_180))
        self.mail_host.bind_tcp(25, self.mail_svc)

    # -- plant -------------------------------------------------------------
    def _build_plant(self):
        cfg = self.plan["plant"]
        self.plant = Plant(self.sim, _us(cfg.get("tick_period_s", 1.0)))
        self.sensors = {}
        for sid, s in cfg["sensors"].items():
            self.sensors[sid] = self.plant.add_sensor(SensorModel(
                sid, s["kind"], s["lo"], s["hi"], s["walk_step"], s["init"]))
        for act in cfg.get("actuators", []):
            self.plant.add_actuator(act)
        plc_cfg = cfg.get("plc", {})
        self.plc = Plc(self.sim, self.plant, self.sensors["plc-temp"],
                       cfg.get("actuators", ["led1"])[0],
                       scan_period_us=plc_cfg.get("scan_period_ms", 100) * 1000,
                       setpoint_c=plc_cfg.get("setpoint_c", 30.0),
                       scan_phase_us=plc_cfg.get("scan_phase_ms", 13) * 1000)
        self.plc_host.bind_tcp(502, ModbusSlaveService(
            self.sim, self.plc.handle_modbus,
            self.svc.get("MODBUS", 10_780)))
        self.plant.start()
        self.plc.start()

    # -- cloud ---------------------------------------------------------------
    def _build_cloud(self):
        cfg = self.plan.get("broker", {})
        self.broker = Broker(self.sim, self.cloud_host, self.epoch,
                             version=cfg.get("version", "iiotsim-broker 1.0"),
                             service_time_us=self.svc.get("MQTT", 3_660),
                             sys_period_us=_us(cfg.get("sys_period_s", 10.0)),
                             acl_enabled=cfg.get("acl_enabled", False),
                             allowlist=cfg.get("allowlist", []))
        self.broker.start_sys_publisher()

    # -- gateway ----------------------------------------------------------------
    def _build_gateway(self):
        cfg = self.plan.get("gateway", {})
        self.i2c_bus = I2cBus("i2c-0", self.svc.get("I2C", 1_340))
        self.i2c_bus.register(0x60, MplDevice(self.sensors["mpl-temp"],
                                              self.sensors["mpl-press"]))
        self.onewire_bus = OneWireBus()
        self.onewire_bus.register("onewire",
                                  Ds18b20Device(self.sensors["onewire"]))
        self.gateway = EdgeGateway(
            self.sim, self.gw_host, self.plant, self.plc, self.plc_ip,
            self.i2c_bus, self.onewire_bus, self.epoch,
            broker_ip=self.cloud_host.interfaces[0].ip,
            poll_period_us=_us(cfg.get("poll_period_s", 2.0)),
            deadband=cfg.get("deadband"),
            service_times_us=self.svc,
            mail_ip=self.mail_host.interfaces[0].ip,
            notify_threshold_c=cfg.get("notify_threshold_c", 30.0),
            notify_min_gap_us=_us(cfg.get("notify_min_gap_s", 60.0)),
            mqtt_dup_every=cfg.get("mqtt_dup_every", 0),
            mqtt_reconnect_every_us=_us(cfg.get("mqtt_reconnect_every_s", 0))
            if cfg.get("mqtt_reconnect_every_s") else 0,
            dns_table=cfg.get("dns", {}))
        for key in ("sim-temperature", "sim-pressure", "sim-humidity"):
            if key in self.sensors:
                self.gateway.sim_sensors[key] = self.sensors[key]
        self.gateway.start()

    # -- scripted clients -----------------------------------------------------
    def _build_traffic(self):
        t = self.plan.get("traffic", {})
        gw_ips = {i.segment: i.ip for i in self.gw_host.interfaces}
        if "coap_client" in t:
            cfg = t["coap_client"]
            host = self.hosts[cfg["host"]]
            gw_ip = gw_ips.get(host.interfaces[0].segment,
                               self.gw_host.interfaces[0].ip)
            self._coap_loop(host, gw_ip, _us(cfg["period_s"]),
                            cfg.get("actuate_every", 0))
        if "dns_client" in t:
            cfg = t["dns_client"]
            host = self.hosts[cfg["host"]]
            gw_ip = gw_ips.get(host.interfaces[0].segment,
                               self.gw_host.interfaces[0].ip)
            self._dns_loop(host, gw_ip, _us(cfg["period_s"]))
        if "http_client" in t:
            cfg = t["http_client"]
            self._http_loop(self.hosts[cfg["host"]],
                            self.gw_host.interfaces[0].ip, 80, "HTTP",
                            _us(cfg["period_s"]),
                            cfg.get("setpoint_every", 0),
                            cfg.get("setpoints", []))
        if "api_client" in t:
            cfg = t["api_client"]
            self._http_loop(self.hosts[cfg["host"]],
                            self.gw_host.interfaces[0].ip, 8080, "API",
                            _us(cfg["period_s"]), 0, [])
        for cfg in t.get("webgui_clients", []):
            host = self.hosts[cfg["host"]]
            router_ip = None
            host_segs = {i.segment for i in host.interfaces}
            for i in self.router.interfaces:
                if i.segment in host_segs:
                    router_ip = i.ip
            if router_ip is None:
                router_ip = self.router.interfaces[0].ip
            self._webgui_loop(host, router_ip, _us(cfg["period_s"]),
                              cfg.get("requests", 2))

    def _coap_loop(self, host, gw_ip, period_us, actuate_every):
        state = {"n": 0, "led": False}

        def cycle():
            state["n"] += 1
            mid = state["n"]
            if actuate_every and state["n"] % actuate_every == 0:
                state["led"] = not state["led"]
                req = {"type": "CON", "code": "PUT", "mid": mid,
                       "path": "/actuators/led1",
                       "payload": "on" if state["led"] else "off"}
            else:
                req = {"type": "CON", "code": "GET", "mid": mid,
                       "path": "/sensors/mpl3115a2"}
            host.send_udp(gw_ip, 5683, json.dumps(req).encode(), "COAP")
            self.sim.schedule_periodic(period_us, cycle)

        self.sim.schedule_periodic(period_us, cycle)

    def _dns_loop(self, host, gw_ip, period_us):
        state = {"n": 0}

        def cycle():
            state["n"] += 1
            host.send_udp(gw_ip, 53, json.dumps(
                {"q": "edge.local", "id": state["n"]}).encode(), "DNS")
            self.sim.schedule_periodic(period_us, cycle)

        self.sim.schedule_periodic(period_us, cycle)

    def _http_loop(self, host, gw_ip, port, tag, period_us, setpoint_every,
                   setpoints):
        state = {"n": 0}

        def cycle():
            state["n"] += 1
            n = state["n"]
            if setpoint_every and setpoints and n % setpoint_every == 0:
                which = (n // setpoint_every - 1) % len(setpoints)
                request = {"method": "PUT", "path": "/api/setpoint",
                           "body": {"value": setpoints[which]}}
            else:
                request = {"method": "GET", "path": "/api/snapshot"}
            stream = host.open_tcp(gw_ip, port, tag)
            stream.on_established = lambda s: s.write(
                "client", json.dumps(request).encode())
            stream.on_data = lambda s, data: s.close("client")
            self.sim.schedule_periodic(period_us, cycle)

        self.sim.schedule_periodic(period_us, cycle)

    def _webgui_loop(self, host, router_ip, period_us, requests):
        def cycle():
            stream = host.open_tcp(router_ip, 443, "HTTPS")
            left = {"n": requests}

            def send_one(s):
                s.write("client", json.dumps(
                    {"action": "get", "path": "/status"}).encode())

            def on_data(s, data):
                left["n"] -= 1
                if left["n"] > 0:
                    send_one(s)
                else:
                    s.close("client")

            stream.on_established = send_one
            stream.on_data = on_data
            self.sim.schedule_periodic(period_us, cycle)

        self.sim.schedule_periodic(period_us, cycle)

    # -- attacks -----------------------------------------------------------------
    def _build_attacks(self):
        self.windows = []
        self.attack_objs = {}
        for a in self.plan.get("attacks", []):
            kind = a["kind"]
            aid = a["id"]
            if kind in ("arp_spoof", "tamper"):
                transform = None
                if kind == "tamper":
                    transform = attacks.scale_measurement_transform(
                        a.get("scale", 2.0))
                atk = attacks.ArpSpoof(
                    self.sim, self.hosts[a["attacker"]],
                    self.hosts[a["victim_a"]], self.hosts[a["victim_b"]],
                    _us(a["t_start_s"]), _us(a["duration_s"]),
                    poison_period_us=_us(a.get("poison_period_s", 2.0)),
                    transform=transform, kind=kind)
                self.windows.append(atk.schedule())
            elif kind == "modbus_dos":
                atk = attacks.ModbusFlood(
                    self.sim, self.hosts[a["attacker"]],
                    self.hosts[a["target"]].interfaces[0].ip,
                    a["rate_per_s"], a.get("addr_lo", 0),
                    a.get("addr_hi", 199), _us(a["t_start_s"]),
                    _us(a["duration_s"]),
                    reqs_per_conn=a.get("reqs_per_conn", 10))
                self.windows.append(atk.schedule())
            elif kind == "rogue_subscriber":
                atk = attacks.RogueSubscriber(
                    self.sim, self.hosts[a["attacker"]],
                    self.hosts[a["broker_host"]].interfaces[0].ip,
                    a.get("filters", ["#", "$SYS/#"]), _us(a["t_start_s"]),
                    _us(a["duration_s"]), cycle_us=_us(a.get("cycle_s", 4.0)))
                self.windows.append(atk.schedule())
            elif kind == "i2c_sniff":
                atk = attacks.I2cSniffer(self.sim, self.i2c_bus,
                                         _us(a["t_start_s"]),
                                         _us(a["duration_s"]))
                self.windows.append(atk.schedule())
            elif kind == "recon":
                atk = attacks.PortScan(self.sim, self.hosts[a["attacker"]],
                                       self.hosts[a["target"]],
                                       a.get("ports", [443]),
                                       _us(a["t_start_s"]))
                self.windows.append(atk.schedule())
            elif kind == "web_enum":
                atk = self._web_enum(a)
            elif kind == "exploit":
                atk = attacks.ExploitWebgui(
                    self.sim, self.hosts[a["attacker"]],
                    self.hosts[a["target"]], self.webgui,
                    tuple(a.get("credentials", ("admin", "admin"))),
                    _us(a["t_start_s"]),
                    [(_us(s), _us(d)) for s, d in a.get("sessions", [])],
                    listener_port=a.get("listener_port", 4444),
                    command_gap_us=_us(a.get("command_gap_s", 20.0)))
                self.windows.extend(atk.schedule())
            elif kind == "log_tamper":
                atk = self._schedule_log_tamper(a)
            else:
                continue
            self.attack_objs[aid] = atk

    def _web_enum(self, a):
        """Heavy directory-walk style enumeration of the web admin port."""
        attacker = self.hosts[a["attacker"]]
        target_ip = self.hosts[a["target"]].interfaces[0].ip
        sessions = a.get("sessions", 3)
        sess_dur = _us(a.get("session_duration_s", 70.0))
        req_period = _us(a.get("request_period_s", 1.0))
        window = attacks.AttackWindow(
            attacks.RECON, _us(a["t_start_s"]),
            _us(a["t_start_s"]) + sessions * (sess_dur + US), a["attacker"],
            (a["target"],))
        self.windows.append(window)

        def run_session(k):
            stream = attacker.open_tcp(target_ip, 443, "HTTPS")
            n_req = max(1, sess_dur // req_period)
            state = {"sent": 0}

            def send_next(s):
                state["sent"] += 1
                s.write("client", json.dumps(
                    {"action": "get",
                     "path": f"/admin/dir{k}/page{state['sent']:04d}",
                     "probe": "x" * 120}).encode())

            def on_data(s, data):
                if state["sent"] < n_req:
                    self.sim.schedule(req_period, lambda: send_next(s)
                                      if s.state == "established" else None)
                else:
                    s.close("client")

            stream.on_established = send_next
            stream.on_data = on_data

        for k in range(sessions):
            self.sim.schedule_at(_us(a["t_start_s"]) + k * (sess_dur + US),
                                 lambda k=k: run_session(k))
        return window

    def _schedule_log_tamper(self, a):
        holder = {}

        def fire():
            try:
                holder["window"] = attacks.log_tamper(
                    self.sim, self.hosts[a["attacker"]],
                    self.hosts[a["target"]], self.webgui,
                    a.get("predicate", "shell"))
                self.windows.append(holder["window"])
            except PermissionError:
                holder["error"] = "no foothold"

        self.sim.schedule_at(_us(a["t_start_s"]), fire)
        return holder

    def run(self, grace_us: int = 2_000_000) -> None:
        # the grace period drains in-flight exchanges; nothing new starts
        # past the horizon
        self.sim.run_until(self.duration_us + grace_us)


# ---------------------------------------------------------------------------
# artifact emission
# ---------------------------------------------------------------------------

def run(plan_dict: dict, out_dir: str, seed: int | None = None,
        only=None) -> RunResult:
    build = Build(plan_dict, seed=seed)
    build.run()
    os.makedirs(out_dir, exist_ok=True)
    outputs = set(only) if only else set(build.plan.get("outputs", []))
    result = RunResult(build.plan, build.seed, build.sim, build.gateway,
                       build.broker, build.plc, build.plant, build.windows,
                       build.attack_objs)
    frames = capture_export(build.sim)

    def path(name):
        p = os.path.join(out_dir, name)
        result.paths[name] = p
        return p

    if "capture" in outputs or not outputs:
        write_capture_jsonl(frames, path("capture.jsonl"))

    result.conversations = analytics.build_conversations(frames)
    if "conn_log" in outputs or not outputs:
        analytics.write_conn_log(result.conversations, path("conn.log"))

    if "historians" in outputs or not outputs:
        build.gateway.historian.write_csv(path("edge_historian.csv"))
        build.broker.historian.write_csv(path("cloud_historian.csv"))

    if "windows" in outputs or not outputs:
        attacks.write_windows_jsonl(build.windows,
                                    path("attack_windows.jsonl"))

    rows, counts, dropped = analytics.label_dataset(result.conversations,
                                                    build.windows)
    result.dataset_rows = rows
    result.class_counts = counts
    result.dropped_rows = dropped
    if "dataset" in outputs or not outputs:
        analytics.write_dataset_csv(rows, path("dataset.csv"))

    if "metrics" in outputs or not outputs:
        result.metrics = build_metrics_report(build, frames)
        with open(path("metrics_report.json"), "w") as fh:
            json.dump(result.metrics, fh, indent=2)
            fh.write("\n")

    # attack-side artifacts
    for aid, atk in build.attack_objs.items():
        if isinstance(atk, attacks.RogueSubscriber):
            with open(path("rogue_transcript.txt"), "w") as fh:
                for line in atk.transcript:
                    fh.write(line + "\n")
        if isinstance(atk, attacks.I2cSniffer):
            with open(path("i2c_trace.txt"), "w") as fh:
                for line in atk.lines:
                    fh.write(line + "\n")

    router_id = build.plan["roles"]["router"]
    with open(path(f"syslog_{router_id}.txt"), "w") as fh:
        for ts, text in build.router.syslog:
            fh.write(f"{iso_ms(build.epoch, ts)} {text}\n")
    with open(path(f"syslog_{router_id}_truth.txt"), "w") as fh:
        for ts, text in build.sim.syslog_truth[router_id]:
            fh.write(f"{iso_ms(build.epoch, ts)} {text}\n")

    if "hunt" in outputs:
        result.hunt = build_hunt_report(build, frames, result.conversations)
        with open(path("hunt_report.json"), "w") as fh:
            json.dump(result.hunt, fh, indent=2)
            fh.write("\n")

    summary = {
        "plan": build.plan.get("name", ""),
        "seed": build.seed,
        "duration_s": build.plan["duration_s"],
        "frames": len(frames),
        "conversations": len(result.conversations),
        "edge_rows": len(build.gateway.historian.rows),
        "cloud_rows": len(build.broker.historian.rows),
        "forwarded": len(build.gateway.forwarded),
        "class_counts": result.class_counts,
        "dropped_rows": result.dropped_rows,
        "faults": len(build.gateway.faults),
        "windows": [w.to_json() for w in sorted(build.windows,
                                                key=lambda w: w.t_start_us)],
    }
    with open(path("run_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
        fh.write("\n")
    return result


def build_metrics_report(build: Build, frames) -> dict:
    targets = build.plan.get("latency_targets_ms", {})
    gw_ip = build.gw_host.interfaces[0].ip
    report = {"packet_stats": analytics.packet_size_stats(frames)}
    rts = {}
    for proto in ("MODBUS", "COAP", "DNS", "HTTP", "API", "SMTP", "MQTT",
                  "HTTPS"):
        stats = analytics.response_times(frames, proto)
        if stats.count == 0 and proto not in targets:
            continue
        rts[proto] = {"mean_ms": stats.mean_ms, "count": stats.count,
                      "unmatched": stats.unmatched}
        if proto in targets:
            rts[proto]["target_ms"] = targets[proto]
    i2c_times = [(end - start) / 1000.0
                 for start, end, _ in build.i2c_bus.txn_log]
    rts["I2C"] = {"mean_ms": sum(i2c_times) / len(i2c_times)
                  if i2c_times else 0.0,
                  "count": len(i2c_times), "unmatched": 0}
    if "I2C" in targets:
        rts["I2C"]["target_ms"] = targets["I2C"]
    report["response_times_ms"] = rts
    report["modbus_mean_below_20ms"] = rts.get("MODBUS", {}).get(
        "mean_ms", 0.0) < 20.0

    # jitter over the periodic request flows
    flows = {
        "modbus-poll": [f for f in frames
                        if f.proto_tag == "MODBUS" and f.origin
                        and f.src_ip == gw_ip and f.dst_port == 502
                        and len(f.payload) >= 8
                        and f.payload[7] == fieldbus.READ_HOLDING_REGISTERS],
        "dns-query": [f for f in frames if f.proto_tag == "DNS" and f.origin
                      and f.dst_port == 53],
        "coap-request": [f for f in frames
                         if f.proto_tag == "COAP" and f.origin
                         and f.dst_port == 5683],
        "api-request": [f for f in frames if f.proto_tag == "API" and f.origin
                        and f.dst_port == 8080 and f.payload],
    }
    all_windows = []
    flow_summaries = {}
    for name, sel in flows.items():
        windows, flagged = analytics.jitter_series(sel)
        all_windows.extend(windows)
        flow_summaries[name] = {
            "windows": len(windows), "over_bound": len(flagged),
            "max_jitter_ms": max((w.jitter_ms for w in windows), default=0.0),
        }
    under = sum(1 for w in all_windows if w.jitter_ms < 30.0)
    report["jitter"] = {
        "bound_ms": 30.0,
        "windows": len(all_windows),
        "under_bound": under,
        "fraction_under": under / len(all_windows) if all_windows else 1.0,
        "flows": flow_summaries,
        "series": [{"t0_us": w.t0_us, "jitter_ms": w.jitter_ms}
                   for w in sorted(all_windows, key=lambda w: w.t0_us)],
    }
    report["throughput_bytes_per_s"] = [
        {"t0_us": t0, "bytes_per_s": rate}
        for t0, rate in analytics.throughput_series(frames)]
    report["plc_request_rates"] = analytics.plc_request_rates(
        frames, build.plc_ip, interval_us=1_000_000,
        span_us=build.duration_us)
    scan_ts = [t for t, _, _ in build.plc.scan_log]
    period = build.plc.scan_period_us
    devs = [abs((scan_ts[i + 1] - scan_ts[i]) - period) / period
            for i in range(len(scan_ts) - 1)]
    report["plc_scan"] = {
        "scans": len(scan_ts),
        "period_us": period,
        "max_period_deviation": max(devs, default=0.0),
    }
    report["broker"] = {
        "bytes_sent": build.broker.bytes_sent,
        "messages_received": build.broker.messages_received,
        "historian_rows": len(build.broker.historian.rows),
        "quarantined": len(build.broker.historian.quarantine),
    }
    return report


def build_hunt_report(build: Build, frames, conversations) -> dict:
    rows = []
    for c in conversations:
        rows.append({"ts": c.ts_first_us / US, "orig_h": c.orig_ip,
                     "orig_p": c.orig_port, "resp_h": c.resp_ip,
                     "resp_p": c.resp_port, "proto": c.proto,
                     "duration": round(c.duration_s, 6),
                     "orig_bytes": c.orig_bytes, "resp_bytes": c.resp_bytes,
                     "orig_pkts": c.orig_pkts, "resp_pkts": c.resp_pkts})
    router_lan_ip = None
    attacker_segs = {i.segment for i in build.attacker.interfaces}
    for i in build.router.interfaces:
        if i.segment in attacker_segs:
            router_lan_ip = i.ip
    if router_lan_ip is None:
        router_lan_ip = build.router.interfaces[0].ip
    backdoor_ports = [a.get("listener_port", 4444)
                      for a in build.plan.get("attacks", [])
                      if a["kind"] == "exploit"] or [4444]
    syslog_events, _ = hunt.parse_syslog(
        [f"{iso_ms(build.epoch, ts)} {text}"
         for ts, text in build.router.syslog])
    truth_events, _ = hunt.parse_syslog(
        [f"{iso_ms(build.epoch, ts)} {text}"
         for ts, text in build.sim.syslog_truth[build.router.host_id]])
    return hunt.hunt_report(rows, frames, router_lan_ip, 443,
                            backdoor_ports=backdoor_ports,
                            syslog_events=syslog_events,
                            truth_events=truth_events,
                            search_pattern="shell")
